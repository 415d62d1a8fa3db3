#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ldpexit/model.hpp"
#include "ldpexit/simulate.hpp"

namespace ldp {

/// Piecewise-constant control psi on the uniform grid t_i = i dt, i = 0..steps-1.
class ControlPath {
public:
    ControlPath() = default;
    ControlPath(std::size_t steps, std::size_t modes, double dt);

    std::size_t steps() const noexcept { return steps_; }
    std::size_t modes() const noexcept { return modes_; }
    double dt() const noexcept { return dt_; }
    double horizon() const noexcept { return dt_ * static_cast<double>(steps_); }
    double time(std::size_t i) const noexcept { return dt_ * static_cast<double>(i); }

    std::span<double> at(std::size_t i) noexcept { return {values_.data() + i * modes_, modes_}; }
    std::span<const double> at(std::size_t i) const noexcept { return {values_.data() + i * modes_, modes_}; }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool is_finite() const noexcept;

private:
    std::size_t steps_ = 0;
    std::size_t modes_ = 0;
    double dt_ = 0.0;
    std::vector<double> values_;
};

/// 1/2 sum_i dt |psi(t_i)|^2 (left-endpoint rule).
double action_value(const ControlPath& psi);

/// Deterministic controlled system
///   X_{i+1} = S(dt)(X_i + dt F(X_i)) + phi1(dt) Q B(X_i) psi_i,   phi1_k = (1 - e^{mu_k dt}) / (-mu_k),
/// i.e. the exponential-Euler step with the control integrated exactly over the step.
Trajectory controlled_trajectory(const ModelSpec& spec, const SpectralField& x0, const ControlPath& psi);

/// Control that reproduces phi on its grid, recovered by inverting the step; phi must be uniformly
/// sampled from t = 0. Additive noise with q_k > 0 only (std::domain_error otherwise).
ControlPath control_of_path(const ModelSpec& spec, const Trajectory& phi);
double rate_function_of_path(const ModelSpec& spec, const Trajectory& phi);

/// Closed-form quasipotential of a linear additive model, sum_k |mu_k| y_k^2 / q_k^2, with linear
/// damping folded into mu. Returns +infinity when y_k != 0 for some q_k == 0.
double quasipotential_linear(const ModelSpec& spec, const SpectralField& y);
/// min of quasipotential_linear over the boundary of the ball of radius R: R^2 min_k |mu_k| / q_k^2 for
/// the euclidean norm, R^2 / max_j sum_k e_k(xi_j)^2 q_k^2 / |mu_k| on the grid.
double quasipotential_linear_boundary(const ModelSpec& spec, double radius);

/// Restricts a boundary target to points whose coordinate `mode` (1-based) lies in [lower, upper]
/// (after taking |.| when `absolute`).
struct RegionConstraint {
    std::size_t mode = 1;
    double lower = 0.0;
    double upper = 0.0;
    bool absolute = false;

    bool contains(const SpectralField& x) const noexcept;
    friend bool operator==(const RegionConstraint&, const RegionConstraint&) = default;
};

struct PointTarget {
    SpectralField y;
    friend bool operator==(const PointTarget&, const PointTarget&) = default;
};
struct BoundaryTarget {
    double radius = 1.0;
    std::optional<RegionConstraint> region;
    friend bool operator==(const BoundaryTarget&, const BoundaryTarget&) = default;
};
using TargetSpec = std::variant<PointTarget, BoundaryTarget>;

struct MinimizeOptions {
    double initial_penalty = 10.0;
    double max_penalty = 1e10;
    double residual_tol = 1e-4;  // relative to |y| or R
    double grad_tol = 1e-7;      // relative L2 gradient norm that ends a penalty stage
    std::size_t max_iterations = 200000;
    std::size_t max_stage_iterations = 20000;
    std::size_t threads = 1;
};

struct QuasipotentialResult {
    double value = 0.0;
    ControlPath control;
    SpectralField terminal_state;
    double target_residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double penalty = 0.0;
    std::size_t starts = 1;
};

void to_json(nlohmann::json& j, const QuasipotentialResult& r);

/// Minimises action_value(psi) + penalty dist(X^psi_0(T), target)^2 by gradient descent with
/// adjoint gradients, Barzilai-Borwein steps and nonmonotone backtracking; the penalty doubles
/// between stages until the target residual is within tolerance. Without `init`, boundary targets
/// run several starts along the low modes and keep the smallest action.
QuasipotentialResult quasipotential_minimize(const ModelSpec& spec, const TargetSpec& target, double horizon,
                                             double dt, const std::optional<ControlPath>& init = std::nullopt,
                                             const MinimizeOptions& opts = {});

/// Gradient of J(psi) = action + penalty * dist^2 with respect to the control values (euclidean,
/// not L2-weighted); exposed for finite-difference tests. Returns J.
double penalized_objective(const ModelSpec& spec, const TargetSpec& target, double penalty, const ControlPath& psi,
                           std::vector<double>* gradient);

}  // namespace ldp
