#include "ldpexit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "ldpexit/parallel.hpp"

namespace ldp {

double convolution_stddev(double mu, double dt) {
    // (1 - e^{2 mu dt}) / (-2 mu), written with expm1 to keep precision for small |mu| dt.
    return std::sqrt(-std::expm1(2.0 * mu * dt) / (-2.0 * mu));
}

void validate(const ModelSpec& spec, const SimConfig& sim) {
    if (!(sim.dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
    if (!(sim.t_max > 0.0) || sim.dt > sim.t_max) throw std::invalid_argument("simulate: need 0 < dt <= t_max");
    if (!(sim.epsilon >= 0.0) || !std::isfinite(sim.epsilon))
        throw std::invalid_argument("simulate: epsilon must be finite and nonnegative");
    if (sim.x0.size() != spec.mode_count) throw std::invalid_argument("simulate: x0 has the wrong number of modes");
    if (!sim.x0.is_finite()) throw std::invalid_argument("simulate: x0 must be finite");
    for (double mu : spec.eigenvalues)
        if (!(std::exp(2.0 * mu * sim.dt) > 0.0))
            throw std::invalid_argument("simulate: dt too large, e^{2 mu dt} underflows");
}

Stepper::Stepper(const ModelSpec& spec, double dt, double epsilon)
    : dyn_(spec), dt_(dt), noise_scale_(std::sqrt(epsilon)), decay_(spec.mode_count), sigma_(spec.mode_count),
      fx_(spec.mode_count), scaled_(spec.mode_count), bx_(spec.mode_count) {
    for (std::size_t k = 0; k < spec.mode_count; ++k) {
        decay_[k] = std::exp(spec.eigenvalues[k] * dt);
        sigma_[k] = convolution_stddev(spec.eigenvalues[k], dt);
    }
}

void Stepper::drift_step(std::span<const double> x, std::span<double> out) {
    const auto n = decay_.size();
    dyn_.drift(x, fx_);
    for (std::size_t k = 0; k < n; ++k) out[k] = decay_[k] * (x[k] + dt_ * fx_[k]);
}

void Stepper::step(std::span<const double> x, std::span<const double> gaussians, std::span<double> out) {
    const auto n = decay_.size();
    dyn_.drift(x, fx_);
    if (noise_scale_ == 0.0) {
        for (std::size_t k = 0; k < n; ++k) out[k] = decay_[k] * (x[k] + dt_ * fx_[k]);
        return;
    }
    for (std::size_t k = 0; k < n; ++k) scaled_[k] = sigma_[k] * gaussians[k];
    dyn_.noise(x, scaled_, bx_);
    for (std::size_t k = 0; k < n; ++k) out[k] = decay_[k] * (x[k] + dt_ * fx_[k]) + noise_scale_ * bx_[k];
}

double Stepper::increment_variance(std::span<const double> x, std::span<const double> ell) {
    dyn_.noise_adjoint(x, ell, scaled_);
    double v = 0.0;
    for (std::size_t k = 0; k < decay_.size(); ++k) v += sigma_[k] * sigma_[k] * scaled_[k] * scaled_[k];
    return noise_scale_ * noise_scale_ * v;
}

SpectralField step(const ModelSpec& spec, const SimConfig& sim, const SpectralField& x,
                   std::span<const double> gaussians) {
    if (gaussians.size() != spec.mode_count) throw std::invalid_argument("step: need exactly N gaussians");
    if (x.size() != spec.mode_count) throw std::invalid_argument("step: size mismatch");
    Stepper st(spec, sim.dt, sim.epsilon);
    SpectralField out(spec.mode_count);
    st.step(x.coeffs(), gaussians, out.coeffs());
    return out;
}

SpectralField project_to_boundary(const ModelSpec& spec, const SpectralField& x) {
    const double r = sup_norm(spec, x);
    if (r == 0.0) return x;
    SpectralField y = (spec.domain_radius / r) * x;
    for (int i = 0; i < 64 && in_domain(spec, y); ++i) y *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon();
    return y;
}

double default_t_max(double quasipotential, double epsilon) {
    return 50.0 * std::exp((quasipotential + 0.5) / epsilon);
}

namespace {

/// Probability that a Brownian bridge from a to b (both below the barrier) touches it.
double bridge_crossing(double distance_a, double distance_b, double variance) {
    if (distance_a <= 0.0 || distance_b <= 0.0) return 1.0;
    if (variance <= 0.0) return 0.0;
    return std::exp(-2.0 * distance_a * distance_b / variance);
}

class BridgeMonitor {
public:
    BridgeMonitor(const ModelSpec& spec, Stepper& stepper, double epsilon)
        : spec_(spec), stepper_(stepper), radius_(spec.domain_radius) {
        const auto n = spec.mode_count;
        ell_.resize(n);
        if (spec.is_sup_grid()) {
            grid_ = &collocation_for(spec);
            ga_.resize(grid_->points());
            gb_.resize(grid_->points());
            if (spec.is_additive()) {
                node_variance_.resize(grid_->points());
                for (std::size_t j = 0; j < grid_->points(); ++j) {
                    double v = 0.0;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double c = grid_->basis(j, k) * spec.q_weights[k] * stepper.sigma()[k];
                        v += c * c;
                    }
                    node_variance_[j] = epsilon * v;
                }
            } else {
                double q_max = 0.0;
                for (double q : spec.q_weights) q_max = std::max(q_max, q);
                variance_scale_ = epsilon * stepper.dt() * q_max * q_max * (2.0 / std::numbers::pi) *
                                  static_cast<double>(n);
            }
        }
    }

    /// Crossing probability for the step a -> b; b is inside G.
    double probability(std::span<const double> a, std::span<const double> b) {
        if (!grid_) return euclidean(a, b);
        grid_->to_grid(a, ga_);
        grid_->to_grid(b, gb_);
        const auto* mult = std::get_if<MultiplicativeNoise>(&spec_.b_kind);
        double b_max = 0.0;
        if (mult)
            for (double v : ga_) b_max = std::max(b_max, std::abs(mult->b(v)));
        double p = 0.0;
        for (std::size_t j = 0; j < ga_.size(); ++j) {
            const double up_a = radius_ - ga_[j], up_b = radius_ - gb_[j];
            const double lo_a = radius_ + ga_[j], lo_b = radius_ + gb_[j];
            const double near = std::min(up_a * up_b, lo_a * lo_b);
            double var;
            if (!node_variance_.empty()) {
                var = node_variance_[j];
            } else {
                const double bound = variance_scale_ * b_max * b_max;
                if (bound <= 0.0 || 2.0 * near / bound > 40.0) continue;
                for (std::size_t k = 0; k < ell_.size(); ++k) ell_[k] = grid_->basis(j, k);
                var = stepper_.increment_variance(a, ell_);
            }
            const double pu = bridge_crossing(up_a, up_b, var);
            const double pl = bridge_crossing(lo_a, lo_b, var);
            p = std::max(p, 1.0 - (1.0 - pu) * (1.0 - pl));
        }
        return p;
    }

private:
    double euclidean(std::span<const double> a, std::span<const double> b) {
        double rb = 0.0;
        for (double v : b) rb += v * v;
        rb = std::sqrt(rb);
        if (rb == 0.0) return 0.0;
        double ra = 0.0;
        for (std::size_t k = 0; k < ell_.size(); ++k) {
            ell_[k] = b[k] / rb;
            ra += a[k] * ell_[k];
        }
        const double var = stepper_.increment_variance(a, ell_);
        return bridge_crossing(radius_ - ra, radius_ - rb, var);
    }

    const ModelSpec& spec_;
    Stepper& stepper_;
    double radius_;
    const Collocation* grid_ = nullptr;
    std::vector<double> ga_, gb_, ell_, node_variance_;
    double variance_scale_ = 0.0;
};

}  // namespace

std::pair<std::optional<Trajectory>, ExitRecord> run_to_exit(const ModelSpec& spec, const SimConfig& sim) {
    validate(spec, sim);
    if (!in_domain(spec, sim.x0)) throw std::invalid_argument("run_to_exit: x0 must lie inside G");

    const auto n = spec.mode_count;
    Stepper stepper(spec, sim.dt, sim.epsilon);
    Philox4x32 rng(sim.seed, sim.stream);
    const bool noisy = sim.epsilon > 0.0;
    std::optional<BridgeMonitor> bridge;
    if (noisy && sim.exit_rule == ExitRule::bridge) bridge.emplace(spec, stepper, sim.epsilon);

    std::optional<Trajectory> traj;
    if (sim.keep_trajectory) {
        traj.emplace();
        traj->times.push_back(0.0);
        traj->states.push_back(sim.x0);
    }

    std::vector<double> x = sim.x0.vec(), next(n), g(n, 0.0);
    const auto max_steps = static_cast<std::uint64_t>(std::ceil(sim.t_max / sim.dt - 1e-9));
    ExitRecord rec;
    for (std::uint64_t i = 1; i <= max_steps; ++i) {
        if (noisy)
            for (auto& v : g) v = rng.normal();
        stepper.step(x, g, next);
        const double t = static_cast<double>(i) * sim.dt;
        if (traj) {
            traj->times.push_back(t);
            traj->states.emplace_back(next);
        }
        bool exited = stepper.dynamics().norm(next) >= spec.domain_radius;
        SpectralField exit_state;
        if (exited) {
            exit_state = SpectralField(next);
        } else if (bridge) {
            const double p = bridge->probability(x, next);
            if (p > 0.0 && rng.uniform() < p) {
                exited = true;
                exit_state = project_to_boundary(spec, SpectralField(next));
            }
        }
        if (exited) {
            rec.exit_time = t;
            rec.exit_state = std::move(exit_state);
            rec.censored = false;
            return {std::move(traj), std::move(rec)};
        }
        std::swap(x, next);
    }
    if (traj) traj->truncated = true;
    rec.exit_time = static_cast<double>(max_steps) * sim.dt;
    rec.exit_state = SpectralField(x);
    rec.censored = true;
    return {std::move(traj), std::move(rec)};
}

ExitEnsembleStats ensemble_exit(const ModelSpec& spec, const SimConfig& templ, std::size_t n_paths,
                                std::size_t threads) {
    if (n_paths == 0) throw std::invalid_argument("ensemble_exit: n_paths must be >= 1");
    validate(spec, templ);
    if (!in_domain(spec, templ.x0)) throw std::invalid_argument("ensemble_exit: x0 must lie inside G");

    ExitEnsembleStats stats;
    stats.n_paths = n_paths;
    stats.epsilon = templ.epsilon;
    stats.records.resize(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t i) {
        SimConfig sim = templ;
        sim.stream = i;
        sim.keep_trajectory = false;
        stats.records[i] = run_to_exit(spec, sim).second;
    });

    double sum = 0.0;
    std::size_t censored = 0;
    const auto points = spec.is_sup_grid() ? spec.grid_points() : spec.mode_count;
    stats.place.argmax_histogram.assign(points, 0);
    for (const auto& r : stats.records) {
        sum += r.exit_time;
        if (r.censored) {
            ++censored;
            continue;
        }
        const auto boundary = project_to_boundary(spec, r.exit_state);
        if (boundary[0] >= 0.0) ++stats.place.positive_mode1;
        else ++stats.place.negative_mode1;
        ++stats.place.argmax_histogram[argmax_abs(pointwise_values(spec, boundary))];
    }
    const double n = static_cast<double>(n_paths);
    stats.mean_exit_time = sum / n;
    double ss = 0.0;
    for (const auto& r : stats.records) ss += (r.exit_time - stats.mean_exit_time) * (r.exit_time - stats.mean_exit_time);
    const double var = n > 1 ? ss / (n - 1) : 0.0;
    stats.stderr_exit_time = std::sqrt(var / n);
    stats.eps_log_mean = templ.epsilon * std::log(stats.mean_exit_time);
    stats.censor_fraction = static_cast<double>(censored) / n;
    stats.reliable = stats.censor_fraction <= 0.5;
    return stats;
}

namespace {

// Random state with |x|_E = norm.
SpectralField random_state(const ModelSpec& spec, double norm, Philox4x32& rng) {
    SpectralField x = random_field(spec, 1.0, rng);
    const double current = sup_norm(spec, x);
    if (current > 0.0) x *= norm / current;
    return x;
}

nlohmann::json field_json(const SpectralField& x) { return nlohmann::json(x.coeffs()); }

}  // namespace

HypothesisReport attraction_check(const ModelSpec& spec, const AttractionSettings& settings, std::uint64_t seed) {
    HypothesisReport report;
    report.hypothesis = "attraction";
    report.samples = settings.samples;
    const double c_norm = semigroup_norm_constant(spec);
    const double tol = grid_tolerance(spec);
    const double omega = spec.omega();
    const auto steps = static_cast<std::size_t>(std::ceil(settings.horizon / settings.dt - 1e-9));
    report.details = {{"semigroup_constant", c_norm}, {"grid_tolerance", tol}, {"horizon", settings.horizon},
                      {"dt", settings.dt}};
    Philox4x32 rng(seed, 2);
    Stepper stepper(spec, settings.dt, 0.0);
    const auto n = spec.mode_count;
    std::vector<double> x(n), next(n);
    double worst_ratio = 0.0;
    for (std::size_t s = 0; s < settings.samples; ++s) {
        const double r0 = spec.domain_radius * (0.05 + 0.949 * rng.uniform());
        const SpectralField start = random_state(spec, r0, rng);
        std::copy(start.coeffs().begin(), start.coeffs().end(), x.begin());
        double running_min = r0;
        for (std::size_t i = 1; i <= steps; ++i) {
            stepper.drift_step(x, next);
            std::swap(x, next);
            const double t = settings.dt * static_cast<double>(i);
            const double r = stepper.dynamics().norm(x);
            const double decay_bound = c_norm * std::exp(-omega * t) * r0;
            const double monotone_bound = (1.0 + tol) * running_min;
            const double violation = std::max(r - decay_bound, r - monotone_bound) - 1e-12;
            worst_ratio = std::max(worst_ratio, r / std::min(decay_bound, monotone_bound));
            if (!std::isfinite(r) || violation > report.max_violation) {
                report.max_violation = std::isfinite(r) ? violation : std::numeric_limits<double>::infinity();
                report.witness = nlohmann::json{{"x0", field_json(start)}, {"t", t}, {"norm", r},
                                                {"decay_bound", decay_bound}, {"monotone_bound", monotone_bound}};
            }
            if (!std::isfinite(r)) break;
            running_min = std::min(running_min, r);
        }
    }
    report.max_ratio = worst_ratio;
    report.passed = report.max_violation <= report.tolerance;
    return report;
}

HypothesisReport contraction_check(const ModelSpec& spec, const AttractionSettings& settings, double epsilon,
                                   std::uint64_t seed) {
    HypothesisReport report;
    report.hypothesis = "contraction";
    report.samples = settings.samples;
    const auto steps = static_cast<std::size_t>(std::ceil(settings.horizon / settings.dt - 1e-9));
    const double slack = 10.0 * settings.dt;
    report.details = {{"epsilon", epsilon}, {"slack", slack}, {"horizon", settings.horizon}, {"dt", settings.dt}};
    Philox4x32 pick(seed, 3);
    Stepper a(spec, settings.dt, epsilon), b(spec, settings.dt, epsilon);
    const auto n = spec.mode_count;
    std::vector<double> x1(n), x2(n), n1(n), n2(n), diff(n), g(n);
    double worst_ratio = 0.0;
    for (std::size_t s = 0; s < settings.samples; ++s) {
        const SpectralField s1 = random_state(spec, spec.domain_radius * pick.uniform(), pick);
        const SpectralField s2 = random_state(spec, spec.domain_radius * pick.uniform(), pick);
        std::copy(s1.coeffs().begin(), s1.coeffs().end(), x1.begin());
        std::copy(s2.coeffs().begin(), s2.coeffs().end(), x2.begin());
        for (std::size_t k = 0; k < n; ++k) diff[k] = x1[k] - x2[k];
        const double d0 = a.dynamics().norm(diff);
        Philox4x32 noise(seed ^ 0x5bd1e995u, 1000 + s);
        double sup = d0;
        for (std::size_t i = 1; i <= steps; ++i) {
            for (auto& v : g) v = noise.normal();
            a.step(x1, g, n1);
            b.step(x2, g, n2);
            std::swap(x1, n1);
            std::swap(x2, n2);
            for (std::size_t k = 0; k < n; ++k) diff[k] = x1[k] - x2[k];
            const double d = a.dynamics().norm(diff);
            if (!std::isfinite(d)) {
                sup = std::numeric_limits<double>::infinity();
                break;
            }
            sup = std::max(sup, d);
        }
        const double violation = sup - (d0 + slack);
        worst_ratio = std::max(worst_ratio, d0 > 0.0 ? sup / d0 : 0.0);
        if (violation > report.max_violation) {
            report.max_violation = violation;
            report.witness = nlohmann::json{{"x1", field_json(s1)}, {"x2", field_json(s2)}, {"initial_distance", d0},
                                            {"sup_distance", sup}, {"noise_stream", 1000 + s}};
        }
    }
    report.max_ratio = worst_ratio;
    report.passed = report.max_violation <= report.tolerance;
    return report;
}

}  // namespace ldp
