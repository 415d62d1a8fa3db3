#include "ldpexit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ldp {

using nlohmann::json;

Dynamics::Dynamics(const ModelSpec& spec)
    : spec_(spec),
      grid_(spec.is_sup_grid() ? &collocation_for(spec) : nullptr),
      points_(spec.is_sup_grid() ? spec.grid_points() : spec.mode_count),
      g_(points_), h_(points_), w_(points_), u_(points_) {}

bool Dynamics::linear_drift() const noexcept { return !std::holds_alternative<CubicDrift>(spec_.f_kind); }

void Dynamics::to_points(std::span<const double> coeffs, std::span<double> values) const {
    if (grid_) grid_->to_grid(coeffs, values);
    else std::copy(coeffs.begin(), coeffs.begin() + static_cast<std::ptrdiff_t>(points_), values.begin());
}

void Dynamics::from_points(std::span<const double> values, std::span<double> coeffs) const {
    if (grid_) grid_->to_coeffs(values, coeffs);
    else std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(points_), coeffs.begin());
}

void Dynamics::from_points_adjoint(std::span<const double> coeffs, std::span<double> values) const {
    if (grid_) grid_->to_coeffs_transpose(coeffs, values);
    else std::copy(coeffs.begin(), coeffs.begin() + static_cast<std::ptrdiff_t>(points_), values.begin());
}

void Dynamics::to_points_adjoint(std::span<const double> values, std::span<double> coeffs) const {
    if (grid_) grid_->to_grid_transpose(values, coeffs);
    else std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(points_), coeffs.begin());
}

void Dynamics::drift(std::span<const double> x, std::span<double> out) {
    const auto n = spec_.mode_count;
    if (std::holds_alternative<ZeroDrift>(spec_.f_kind)) {
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    } else if (const auto* d = std::get_if<LinearDamping>(&spec_.f_kind)) {
        for (std::size_t k = 0; k < n; ++k) out[k] = -d->lambda * x[k];
    } else {
        const double c = std::get<CubicDrift>(spec_.f_kind).coefficient;
        to_points(x, g_);
        for (std::size_t j = 0; j < points_; ++j) u_[j] = c * g_[j] * g_[j] * g_[j];
        from_points(u_, out);
    }
}

void Dynamics::drift_adjoint(std::span<const double> x, std::span<const double> w, std::span<double> out) {
    const auto n = spec_.mode_count;
    if (std::holds_alternative<ZeroDrift>(spec_.f_kind)) {
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    } else if (const auto* d = std::get_if<LinearDamping>(&spec_.f_kind)) {
        for (std::size_t k = 0; k < n; ++k) out[k] = -d->lambda * w[k];
    } else {
        const double c = std::get<CubicDrift>(spec_.f_kind).coefficient;
        to_points(x, g_);
        from_points_adjoint(w, w_);
        for (std::size_t j = 0; j < points_; ++j) u_[j] = 3.0 * c * g_[j] * g_[j] * w_[j];
        to_points_adjoint(u_, out);
    }
}

void Dynamics::noise(std::span<const double> x, std::span<const double> h, std::span<double> out) {
    const auto n = spec_.mode_count;
    if (const auto* m = std::get_if<MultiplicativeNoise>(&spec_.b_kind)) {
        to_points(x, g_);
        to_points(h, h_);
        for (std::size_t j = 0; j < points_; ++j) u_[j] = m->b(g_[j]) * h_[j];
        from_points(u_, out);
        for (std::size_t k = 0; k < n; ++k) out[k] *= spec_.q_weights[k];
    } else {
        for (std::size_t k = 0; k < n; ++k) out[k] = spec_.q_weights[k] * h[k];
    }
}

void Dynamics::noise_adjoint(std::span<const double> x, std::span<const double> w, std::span<double> out) {
    const auto n = spec_.mode_count;
    if (const auto* m = std::get_if<MultiplicativeNoise>(&spec_.b_kind)) {
        for (std::size_t k = 0; k < n; ++k) out[k] = spec_.q_weights[k] * w[k];
        from_points_adjoint(out, w_);
        to_points(x, g_);
        for (std::size_t j = 0; j < points_; ++j) u_[j] = m->b(g_[j]) * w_[j];
        to_points_adjoint(u_, out);
    } else {
        for (std::size_t k = 0; k < n; ++k) out[k] = spec_.q_weights[k] * w[k];
    }
}

void Dynamics::noise_state_adjoint(std::span<const double> x, std::span<const double> h, std::span<const double> w,
                                   std::span<double> out) {
    const auto n = spec_.mode_count;
    const auto* m = std::get_if<MultiplicativeNoise>(&spec_.b_kind);
    if (!m) {
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
        return;
    }
    for (std::size_t k = 0; k < n; ++k) out[k] = spec_.q_weights[k] * w[k];
    from_points_adjoint(out, w_);
    to_points(x, g_);
    to_points(h, h_);
    for (std::size_t j = 0; j < points_; ++j) u_[j] = m->b.derivative(g_[j]) * h_[j] * w_[j];
    to_points_adjoint(u_, out);
}

double Dynamics::norm(std::span<const double> x) {
    if (!grid_) {
        double s = 0.0;
        for (std::size_t k = 0; k < spec_.mode_count; ++k) s += x[k] * x[k];
        return std::sqrt(s);
    }
    grid_->to_grid(x, g_);
    double m = 0.0;
    for (double v : g_) m = std::max(m, std::abs(v));
    return m;
}

void Dynamics::norm_gradient(std::span<const double> x, std::span<double> out) {
    const auto n = spec_.mode_count;
    if (!grid_) {
        const double r = norm(x);
        for (std::size_t k = 0; k < n; ++k) out[k] = r > 0.0 ? x[k] / r : 0.0;
        return;
    }
    grid_->to_grid(x, g_);
    const auto j = argmax_abs(g_);
    const double s = g_[j] >= 0.0 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) out[k] = s * grid_->basis(j, k);
}

// ---------------------------------------------------------------------------

SpectralField apply_F(const ModelSpec& spec, const SpectralField& x) {
    if (x.size() != spec.mode_count) throw std::invalid_argument("apply_F: size mismatch");
    Dynamics d(spec);
    SpectralField out(spec.mode_count);
    d.drift(x.coeffs(), out.coeffs());
    return out;
}

SpectralField apply_B(const ModelSpec& spec, const SpectralField& x, const SpectralField& h) {
    if (x.size() != spec.mode_count || h.size() != spec.mode_count)
        throw std::invalid_argument("apply_B: size mismatch");
    Dynamics d(spec);
    SpectralField out(spec.mode_count);
    d.noise(x.coeffs(), h.coeffs(), out.coeffs());
    return out;
}

std::vector<double> noise_matrix(const ModelSpec& spec, const SpectralField& x) {
    const auto n = spec.mode_count;
    Dynamics d(spec);
    std::vector<double> m(n * n);
    SpectralField e(n), col(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::fill(e.coeffs().begin(), e.coeffs().end(), 0.0);
        e[k] = 1.0;
        d.noise(x.coeffs(), e.coeffs(), col.coeffs());
        for (std::size_t r = 0; r < n; ++r) m[r * n + k] = col[r];
    }
    return m;
}

double pointwise_max(const ModelSpec& spec, const SpectralField& x) {
    double m = 0.0;
    for (double v : pointwise_values(spec, x)) m = std::max(m, std::abs(v));
    return m;
}

SpectralField random_field(const ModelSpec& spec, double radius, Philox4x32& rng) {
    SpectralField f(spec.mode_count);
    for (std::size_t k = 0; k < spec.mode_count; ++k) f[k] = rng.normal() / static_cast<double>(k + 1);
    const double m = pointwise_max(spec, f);
    if (m == 0.0) return f;
    f *= radius / m;
    return f;
}

void to_json(json& j, const HypothesisReport& r) {
    j = json{{"hypothesis", r.hypothesis},
             {"samples", r.samples},
             {"max_violation", r.max_violation},
             {"max_ratio", r.max_ratio},
             {"tolerance", r.tolerance},
             {"passed", r.passed},
             {"applicable", r.applicable}};
    if (!r.note.empty()) j["note"] = r.note;
    if (r.witness) j["witness"] = *r.witness;
    if (!r.details.empty()) j["details"] = r.details;
}

DissipativityConstants dissipativity_constants(const ModelSpec& spec) {
    DissipativityConstants c;
    if (const auto* d = std::get_if<LinearDamping>(&spec.f_kind)) {
        c.lambda = d->lambda;
        c.exponent = 1;
        c.kappa = 0.0;
    } else {
        // -a^3/2 + 3 a b^2 + 3 a^2 b <= g(s*) b^3 with a = s b, maximised at s* = 2 + sqrt(6).
        const double a = std::abs(std::holds_alternative<CubicDrift>(spec.f_kind)
                                      ? std::get<CubicDrift>(spec.f_kind).coefficient
                                      : 1.0);
        const double s = 2.0 + std::sqrt(6.0);
        c.lambda = 0.5 * a;
        c.exponent = 3;
        c.kappa = a * (-0.5 * s * s * s + 3.0 * s * s + 3.0 * s);
    }
    return c;
}

HypothesisReport check_dissipativity(const ModelSpec& spec, std::size_t samples, double radius, std::uint64_t seed) {
    if (!(radius > 0.0)) throw std::invalid_argument("check_dissipativity: radius must be positive");
    if (std::holds_alternative<ZeroDrift>(spec.f_kind)) {
        HypothesisReport skipped;
        skipped.hypothesis = "polynomial_dissipativity";
        skipped.applicable = false;
        skipped.note = "zero drift: the linear part alone provides the dissipation";
        return skipped;
    }

    const auto constants = dissipativity_constants(spec);
    HypothesisReport report;
    report.hypothesis = "polynomial_dissipativity";
    report.samples = samples;
    report.max_violation = -std::numeric_limits<double>::infinity();
    report.details = {{"lambda", constants.lambda}, {"exponent", constants.exponent}, {"kappa", constants.kappa},
                      {"radius", radius}};

    // Evaluate F pointwise (the Nemytskii map on the nodes), not its projection.
    auto pointwise_F = [&](double v) {
        if (const auto* d = std::get_if<LinearDamping>(&spec.f_kind)) return -d->lambda * v;
        return std::get<CubicDrift>(spec.f_kind).coefficient * v * v * v;
    };

    Philox4x32 rng(seed, 0);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples; ++i) {
        // Magnitudes log-uniform over three decades below the radius.
        const auto x = random_field(spec, radius * std::pow(1e-3, rng.uniform()), rng);
        const auto h = random_field(spec, radius * std::pow(1e-3, rng.uniform()), rng);
        const auto gx = pointwise_values(spec, x);
        const auto gh = pointwise_values(spec, h);
        const auto star = argmax_abs(gh);
        const double hn = std::abs(gh[star]);
        double xn = 0.0;
        for (double v : gx) xn = std::max(xn, std::abs(v));
        const double sign = gh[star] >= 0.0 ? 1.0 : -1.0;
        const double lhs = sign * (pointwise_F(gx[star] + gh[star]) - pointwise_F(gx[star]));
        const double m = constants.exponent;
        const double rhs = -constants.lambda * std::pow(hn, m) + constants.kappa * (1.0 + std::pow(xn, m));
        const double violation = lhs - rhs;
        if (violation > worst) {
            worst = violation;
            if (violation > report.tolerance)
                report.witness = json{{"x", x.vec()}, {"h", h.vec()}, {"lhs", lhs}, {"rhs", rhs}};
        }
    }
    report.max_violation = samples ? worst : 0.0;
    report.passed = report.max_violation <= report.tolerance;
    if (report.passed) report.witness.reset();
    return report;
}

HypothesisReport check_B_lipschitz(const ModelSpec& spec, std::size_t samples, std::uint64_t seed) {
    HypothesisReport report;
    report.hypothesis = "noise_lipschitz";
    report.samples = samples;
    double q_max = 0.0;
    for (double q : spec.q_weights) q_max = std::max(q_max, q);

    const auto* mult = std::get_if<MultiplicativeNoise>(&spec.b_kind);
    const double lip = mult ? mult->b.lipschitz() : 0.0;
    const double growth = mult ? mult->b.growth() : 1.0;
    const double kappa = std::max(lip, growth) * q_max;
    report.details = {{"lipschitz", lip * q_max}, {"growth", growth * q_max}, {"kappa", kappa}};

    Dynamics dyn(spec);
    Philox4x32 rng(seed, 1);
    const auto n = spec.mode_count;
    SpectralField bx(n), by(n);
    double worst = -std::numeric_limits<double>::infinity();
    double max_ratio = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double scale = 3.0 * spec.domain_radius;
        const auto x = random_field(spec, scale * rng.uniform(), rng);
        const auto y = random_field(spec, scale * rng.uniform(), rng);
        auto h = random_field(spec, 1.0, rng);
        if (i == 0) h = SpectralField(n);
        dyn.noise(x.coeffs(), h.coeffs(), bx.coeffs());
        dyn.noise(y.coeffs(), h.coeffs(), by.coeffs());
        const double diff = (bx - by).l2_norm();
        const double dist = pointwise_max(spec, x - y);
        const double hn = h.l2_norm();
        const double lip_rhs = lip * q_max * dist * hn;
        const double growth_lhs = bx.l2_norm();
        const double growth_rhs = growth * q_max * (1.0 + pointwise_max(spec, x)) * hn;
        const double violation = std::max(diff - lip_rhs, growth_lhs - growth_rhs);
        if (dist * hn > 0.0) max_ratio = std::max(max_ratio, diff / (dist * hn));
        if (violation > worst) {
            worst = violation;
            if (violation > report.tolerance)
                report.witness = json{{"x", x.vec()}, {"y", y.vec()}, {"h", h.vec()}, {"difference", diff},
                                      {"bound", lip_rhs}};
        }
    }
    report.max_violation = samples ? worst : 0.0;
    report.max_ratio = max_ratio;
    report.passed = report.max_violation <= report.tolerance;
    if (report.passed) report.witness.reset();
    return report;
}

}  // namespace ldp
