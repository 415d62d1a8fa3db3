#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldpexit/model.hpp"
#include "ldpexit/random.hpp"

namespace ldp {

/// Evaluator for the drift F and noise coefficient Q B of one model.
///
/// Holds scratch buffers, so a single instance must not be shared between
/// threads; construct one per worker (construction is cheap).
class Dynamics {
public:
    explicit Dynamics(const ModelSpec& spec);

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t modes() const noexcept { return spec_.mode_count; }

    /// out = F(x)
    void drift(std::span<const double> x, std::span<double> out);
    /// out = DF(x)^T w
    void drift_adjoint(std::span<const double> x, std::span<const double> w, std::span<double> out);

    /// out = Q B(x) h
    void noise(std::span<const double> x, std::span<const double> h, std::span<double> out);
    /// out = (Q B(x))^T w
    void noise_adjoint(std::span<const double> x, std::span<const double> w, std::span<double> out);
    /// out = (d/dx [Q B(x) h])^T w; zero for additive noise.
    void noise_state_adjoint(std::span<const double> x, std::span<const double> h, std::span<const double> w,
                             std::span<double> out);

    /// |x|_E as evaluated by the model (grid sup norm or euclidean).
    double norm(std::span<const double> x);
    /// Gradient of |x|_E: sign(x(xi*)) e_k(xi*) at the argmax node, or x/|x|.
    void norm_gradient(std::span<const double> x, std::span<double> out);

    bool linear_drift() const noexcept;

private:
    void to_points(std::span<const double> coeffs, std::span<double> values) const;
    void from_points(std::span<const double> values, std::span<double> coeffs) const;
    void from_points_adjoint(std::span<const double> coeffs, std::span<double> values) const;
    void to_points_adjoint(std::span<const double> values, std::span<double> coeffs) const;

    ModelSpec spec_;
    const Collocation* grid_ = nullptr;
    std::size_t points_;
    std::vector<double> g_, h_, w_, u_;
};

SpectralField apply_F(const ModelSpec& spec, const SpectralField& x);
SpectralField apply_B(const ModelSpec& spec, const SpectralField& x, const SpectralField& h);

/// N x N matrix of Q B(x) restricted to the truncated space, row-major; column k is Q B(x) e_k.
std::vector<double> noise_matrix(const ModelSpec& spec, const SpectralField& x);

struct HypothesisReport {
    std::string hypothesis;
    std::size_t samples = 0;
    double max_violation = 0.0;  // max of lhs - rhs; <= tolerance means pass
    double max_ratio = 0.0;      // check-specific diagnostic
    double tolerance = 1e-9;
    bool passed = true;
    bool applicable = true;
    std::string note;
    std::optional<nlohmann::json> witness;
    nlohmann::json details = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const HypothesisReport& r);

/// Constants of the polynomial dissipativity bound
/// sign(h(xi*)) (F(x+h) - F(x))(xi*) <= -lambda |h|^m + kappa (1 + |x|^m).
struct DissipativityConstants {
    double lambda = 0.5;
    int exponent = 3;
    double kappa = 0.0;
};

/// Constants for the model's drift: lambda = |c|/2, m = 3 and the Young-inequality kappa for a cubic;
/// lambda = damping, m = 1, kappa = 0 for linear damping.
DissipativityConstants dissipativity_constants(const ModelSpec& spec);

/// Random pairs (x, h) with pointwise norms log-uniform in [1e-3 radius, radius]; the subgradient of |h| is the point mass at
/// the node of max |h|. Violations beyond 1e-9 fail the report and record the worst pair.
HypothesisReport check_dissipativity(const ModelSpec& spec, std::size_t samples, double radius, std::uint64_t seed);

/// Random triples (x, y, h): |(B(x) - B(y)) h|_H <= kappa |x - y|_E |h|_H and
/// |B(x) h|_H <= kappa (1 + |x|_E) |h|_H, with kappa from b and scaled by max q_k.
HypothesisReport check_B_lipschitz(const ModelSpec& spec, std::size_t samples, std::uint64_t seed);

/// Draw a random field with decaying spectrum and pointwise norm exactly `radius`.
SpectralField random_field(const ModelSpec& spec, double radius, Philox4x32& rng);

/// max |value| over the point values of x (grid nodes or coordinates).
double pointwise_max(const ModelSpec& spec, const SpectralField& x);

}  // namespace ldp
