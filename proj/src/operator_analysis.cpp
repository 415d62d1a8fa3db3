#include "ldpexit/operator_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ldpexit/action.hpp"
#include "ldpexit/simulate.hpp"

namespace ldp {

using nlohmann::json;

Eigen::VectorXd DiscretizedOperator::apply(std::span<const double> samples) const {
    if (samples.size() != static_cast<std::size_t>(matrix.cols()))
        throw std::invalid_argument("DiscretizedOperator::apply: sample count mismatch");
    Eigen::Map<const Eigen::VectorXd> v(samples.data(), static_cast<Eigen::Index>(samples.size()));
    return matrix * (std::sqrt(dt) * v);
}

DiscretizedOperator build_Lt(const ModelSpec& spec, double t, double dt) {
    if (!(t > 0.0) || !(dt > 0.0)) throw std::invalid_argument("build_Lt: t and dt must be positive");
    const double ratio = t / dt;
    const double steps_d = std::round(ratio);
    if (steps_d < 1.0 || std::abs(ratio - steps_d) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("build_Lt: dt must divide t");
    DiscretizedOperator op;
    op.t = t;
    op.dt = dt;
    op.steps = static_cast<std::size_t>(steps_d);
    const auto n = static_cast<Eigen::Index>(spec.mode_count);
    op.matrix = Eigen::MatrixXd::Zero(n, n * static_cast<Eigen::Index>(op.steps));
    const double root_dt = std::sqrt(dt);
    for (std::size_t i = 0; i < op.steps; ++i) {
        const double lag = t - dt * static_cast<double>(i);
        for (Eigen::Index k = 0; k < n; ++k)
            op.matrix(k, static_cast<Eigen::Index>(i) * n + k) =
                root_dt * std::exp(spec.eigenvalues[k] * lag) * spec.q_weights[k];
    }
    return op;
}

namespace {

double infinite_horizon(const ModelSpec& spec, double dt) {
    // Round 20 / omega up to a multiple of dt.
    return dt * std::ceil(20.0 / spec.omega() / dt - 1e-9);
}

Eigen::MatrixXd gram(const DiscretizedOperator& op) { return op.matrix * op.matrix.transpose(); }

double largest_singular_value(const Eigen::MatrixXd& g) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

double sup_grid_norm_from_gram(const ModelSpec& spec, const Eigen::MatrixXd& g) {
    const auto& grid = collocation_for(spec);
    const auto n = static_cast<Eigen::Index>(spec.mode_count);
    Eigen::VectorXd phi(n);
    double best = 0.0;
    for (std::size_t j = 0; j < grid.points(); ++j) {
        for (Eigen::Index k = 0; k < n; ++k) phi(k) = grid.basis(j, static_cast<std::size_t>(k));
        best = std::max(best, phi.dot(g * phi));
    }
    return std::sqrt(best);
}

}  // namespace

DiscretizedOperator build_L_infinite(const ModelSpec& spec, double dt) {
    return build_Lt(spec, infinite_horizon(spec, dt), dt);
}

double infinite_horizon_tail_bound(const ModelSpec& spec, double dt) {
    // Tail = sum_{j >= 0} S(t_inf + j) L_1 psi_j; Cauchy-Schwarz over the unit-length pieces.
    const double omega = spec.omega();
    const double step = dt * std::ceil(1.0 / dt - 1e-9);
    const auto l1 = build_Lt(spec, step, dt);
    const double norm = operator_norm(spec, l1) * semigroup_norm_constant(spec);
    return norm * std::exp(-omega * infinite_horizon(spec, dt)) / std::sqrt(-std::expm1(-2.0 * omega * step));
}

SingularValueProfile singular_value_profile(const DiscretizedOperator& op) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram(op), Eigen::EigenvaluesOnly);
    SingularValueProfile profile;
    const auto& ev = solver.eigenvalues();
    for (Eigen::Index i = ev.size() - 1; i >= 0; --i) profile.values.push_back(std::sqrt(std::max(0.0, ev(i))));
    profile.one_percent_index = profile.values.size();
    for (std::size_t i = 0; i < profile.values.size(); ++i) {
        if (profile.values[i] < 0.01 * profile.values.front()) {
            profile.one_percent_index = i;
            break;
        }
    }
    return profile;
}

double sup_grid_operator_norm(const ModelSpec& spec, const DiscretizedOperator& op) {
    if (!spec.is_sup_grid()) throw std::invalid_argument("sup_grid_operator_norm: model has no collocation grid");
    return sup_grid_norm_from_gram(spec, gram(op));
}

double operator_norm(const ModelSpec& spec, const DiscretizedOperator& op) {
    const auto g = gram(op);
    return spec.is_sup_grid() ? sup_grid_norm_from_gram(spec, g) : largest_singular_value(g);
}

const char* to_string(DecayVerdict v) {
    switch (v) {
        case DecayVerdict::decaying: return "decaying";
        case DecayVerdict::stagnating: return "stagnating";
        case DecayVerdict::non_monotone: return "non_monotone";
    }
    return "unknown";
}

void to_json(json& j, const NormDecayReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"t", row.t}, {"norm", row.norm}, {"euclidean_norm", row.euclidean_norm}, {"sigma", row.sigma},
                        {"resolved", row.resolved}});
    j = {{"rows", rows}, {"threshold", r.threshold}, {"verdict", to_string(r.verdict)}, {"passed", r.passed}};
}

NormDecayReport norm_decay_check(const ModelSpec& spec, std::span<const double> t_list, double relative_dt,
                                 double threshold, std::size_t max_sigma) {
    if (t_list.empty()) throw std::invalid_argument("norm_decay_check: empty t list");
    if (!(relative_dt > 0.0) || relative_dt > 1.0)
        throw std::invalid_argument("norm_decay_check: relative_dt must lie in (0, 1]");
    NormDecayReport report;
    report.threshold = threshold;
    double max_rate = 0.0;
    for (double mu : spec.eigenvalues) max_rate = std::max(max_rate, -mu);
    for (double t : t_list) {
        const auto op = build_Lt(spec, t, t * relative_dt);
        const auto g = gram(op);
        NormDecayRow row;
        row.t = t;
        row.resolved = t * max_rate >= 1.0;
        row.euclidean_norm = largest_singular_value(g);
        row.norm = spec.is_sup_grid() ? sup_grid_norm_from_gram(spec, g) : row.euclidean_norm;
        auto profile = singular_value_profile(op);
        profile.values.resize(std::min(profile.values.size(), max_sigma));
        row.sigma = std::move(profile.values);
        report.rows.push_back(std::move(row));
    }
    const double first = report.rows.front().norm, last = report.rows.back().norm;
    // A plateau: every t the truncation still resolves keeps the norm within 10% of the first.
    bool plateau = true;
    for (const auto& row : report.rows)
        if (row.resolved && (row.norm < 0.9 * first || row.norm > first / 0.9)) plateau = false;
    bool decreasing = true;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        if (!(report.rows[i].norm < report.rows[i - 1].norm)) decreasing = false;
    if (report.rows.size() > 1 && (last > 0.9 * first || plateau)) {
        report.verdict = DecayVerdict::stagnating;
        report.passed = false;
    } else if (!decreasing) {
        report.verdict = DecayVerdict::non_monotone;
        report.passed = false;
    } else {
        report.verdict = DecayVerdict::decaying;
        report.passed = last < threshold;
    }
    return report;
}

HypothesisReport summability_check(const ModelSpec& spec, double horizon) {
    HypothesisReport report;
    report.hypothesis = "summability";
    report.samples = spec.mode_count;
    const auto n = spec.mode_count;
    std::vector<double> terms(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double mu = spec.eigenvalues[k], q = spec.q_weights[k];
        double basis_norm = 1.0;
        if (spec.is_sup_grid()) {
            const auto& grid = collocation_for(spec);
            basis_norm = 0.0;
            for (std::size_t j = 0; j < grid.points(); ++j) basis_norm = std::max(basis_norm, std::abs(grid.basis(j, k)));
        }
        terms[k] = q * q * (-std::expm1(2.0 * mu * horizon) / (-2.0 * mu)) * basis_norm * basis_norm;
    }
    double partial = 0.0;
    for (double a : terms) partial += a;

    // Power-law fit a_k ~ A k^{-p} over the upper half of the modes.
    double slope = 0.0;
    std::size_t used = 0;
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t k = n / 2; k < n; ++k) {
            if (!(terms[k] > 0.0)) continue;
            const double lx = std::log(static_cast<double>(k + 1)), ly = std::log(terms[k]);
            sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
            ++used;
        }
        if (used >= 2) {
            const double m = static_cast<double>(used);
            slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        }
    }
    const double p = -slope;
    double tail = 0.0;
    if (used >= 2) {
        if (p > 1.05) {
            tail = terms.back() * static_cast<double>(n) / (p - 1.0);
        } else {
            tail = std::numeric_limits<double>::infinity();
        }
    } else {
        report.note = "too few positive terms for a tail fit; tail taken as zero";
    }
    report.details = {{"partial_sum", partial}, {"tail_estimate", std::isfinite(tail) ? json(tail) : json("inf")},
                      {"decay_exponent", p}, {"horizon", horizon}, {"terms", terms}};
    report.max_ratio = p;
    report.passed = std::isfinite(tail);
    if (!report.passed) {
        report.max_violation = std::numeric_limits<double>::infinity();
        report.note = "terms decay like k^-" + std::to_string(p) + "; the series diverges";
        report.witness = json{{"last_term", terms.back()}, {"decay_exponent", p}};
    }
    return report;
}

namespace {

struct AprioriSample {
    SpectralField x0;
    double x_norm_sq = 0.0;
    double control_sq = 0.0;
    double sup_sq = 0.0;
    double zero_control_violation = 0.0;
    double t_witness = 0.0;
};

AprioriSample apriori_sample(const ModelSpec& spec, const AprioriSettings& settings, Philox4x32& rng,
                             double c_semigroup) {
    const auto n = spec.mode_count;
    const auto steps = static_cast<std::size_t>(std::ceil(settings.horizon / settings.dt - 1e-9));
    AprioriSample out;
    out.x0 = random_field(spec, 1.0, rng);
    const double r = sup_norm(spec, out.x0);
    if (r > 0.0) out.x0 *= settings.x_radius * rng.uniform() / r;

    ControlPath psi(steps, n, settings.dt);
    for (auto& v : psi.values()) v = rng.normal();
    const double raw = std::sqrt(2.0 * action_value(psi));
    const double target = settings.control_radius * rng.uniform();
    if (raw > 0.0)
        for (auto& v : psi.values()) v *= target / raw;
    out.control_sq = 2.0 * action_value(psi);

    const double x_norm = sup_norm(spec, out.x0);
    out.x_norm_sq = x_norm * x_norm;
    const auto traj = controlled_trajectory(spec, out.x0, psi);
    for (const auto& state : traj.states) {
        const double v = sup_norm(spec, state);
        out.sup_sq = std::max(out.sup_sq, std::isfinite(v) ? v * v : std::numeric_limits<double>::infinity());
    }

    const ControlPath zero(steps, n, settings.dt);
    const auto free = controlled_trajectory(spec, out.x0, zero);
    const double omega = spec.omega();
    for (std::size_t i = 0; i < free.states.size(); ++i) {
        const double v = sup_norm(spec, free.states[i]);
        const double bound = c_semigroup * std::exp(-omega * free.times[i]) * x_norm;
        const double violation = std::isfinite(v) ? v - bound - 1e-12 : std::numeric_limits<double>::infinity();
        if (violation > out.zero_control_violation) {
            out.zero_control_violation = violation;
            out.t_witness = free.times[i];
        }
    }
    return out;
}

double apriori_rhs(double c, const AprioriSample& s) {
    return c * (s.x_norm_sq + 1.0 + s.control_sq) * std::exp(c * s.control_sq);
}

}  // namespace

double fit_apriori_constant(const ModelSpec& spec, const AprioriSettings& settings, std::uint64_t seed) {
    Philox4x32 rng(seed, 4);
    const double c_semigroup = semigroup_norm_constant(spec);
    double best = 0.0;
    for (std::size_t s = 0; s < settings.samples; ++s) {
        const auto sample = apriori_sample(spec, settings, rng, c_semigroup);
        if (!std::isfinite(sample.sup_sq)) return std::numeric_limits<double>::infinity();
        if (apriori_rhs(best, sample) >= sample.sup_sq) continue;
        double lo = best, hi = std::max(1.0, 2.0 * best);
        while (apriori_rhs(hi, sample) < sample.sup_sq) hi *= 2.0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (apriori_rhs(mid, sample) >= sample.sup_sq ? hi : lo) = mid;
        }
        best = hi;
    }
    return best;
}

HypothesisReport apriori_bound_check(const ModelSpec& spec, const AprioriSettings& settings, double c,
                                     std::uint64_t seed) {
    HypothesisReport report;
    report.hypothesis = "apriori";
    report.samples = settings.samples;
    const double c_semigroup = semigroup_norm_constant(spec);
    report.details = {{"c", c}, {"semigroup_constant", c_semigroup}, {"horizon", settings.horizon},
                      {"x_radius", settings.x_radius}, {"control_radius", settings.control_radius}};
    Philox4x32 rng(seed, 5);
    for (std::size_t s = 0; s < settings.samples; ++s) {
        const auto sample = apriori_sample(spec, settings, rng, c_semigroup);
        const double rhs = apriori_rhs(c, sample);
        const double violation =
            std::isfinite(sample.sup_sq) ? sample.sup_sq - rhs : std::numeric_limits<double>::infinity();
        report.max_ratio = std::max(report.max_ratio, sample.sup_sq / rhs);
        const double worst = std::max(violation, sample.zero_control_violation);
        if (worst > report.max_violation) {
            report.max_violation = worst;
            report.witness = json{{"x0", sample.x0.coeffs()},
                                  {"control_l2_sq", sample.control_sq},
                                  {"sup_norm_sq", sample.sup_sq},
                                  {"bound", rhs},
                                  {"zero_control_violation", sample.zero_control_violation},
                                  {"zero_control_time", sample.t_witness}};
        }
    }
    report.passed = report.max_violation <= report.tolerance;
    return report;
}

}  // namespace ldp
