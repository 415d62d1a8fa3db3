#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ldpexit/dynamics.hpp"
#include "ldpexit/model.hpp"
#include "ldpexit/random.hpp"

namespace ldp {

/// How exits from G are detected between grid times.
enum class ExitRule {
    grid,    // first grid time whose state lies outside G
    bridge,  // additionally flag a crossing between grid times with the Brownian-bridge probability
};

struct SimConfig {
    double dt = 1e-3;
    double epsilon = 0.1;
    double t_max = 100.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // path index within the seed's family of streams
    SpectralField x0;
    ExitRule exit_rule = ExitRule::grid;
    bool keep_trajectory = false;
};

void validate(const ModelSpec& spec, const SimConfig& sim);

struct Trajectory {
    std::vector<double> times;
    std::vector<SpectralField> states;
    bool truncated = false;
};

struct ExitRecord {
    double exit_time = 0.0;
    SpectralField exit_state;
    bool censored = false;
};

/// One exponential-Euler step of the mild formulation,
///   x' = S(dt) x + dt S(dt) F(x) + sqrt(eps) Q B(x) (sigma(dt) * g),
/// where sigma_k(dt)^2 = (1 - e^{2 mu_k dt}) / (-2 mu_k) is the exact variance of the
/// per-mode stochastic convolution over one step.
class Stepper {
public:
    Stepper(const ModelSpec& spec, double dt, double epsilon);

    const ModelSpec& spec() const noexcept { return dyn_.spec(); }
    double dt() const noexcept { return dt_; }
    std::span<const double> decay() const noexcept { return decay_; }
    std::span<const double> sigma() const noexcept { return sigma_; }

    /// Deterministic part: out = S(dt)(x + dt F(x)).
    void drift_step(std::span<const double> x, std::span<double> out);
    /// Full stochastic step; gaussians must hold N standard normals (ignored when eps == 0).
    void step(std::span<const double> x, std::span<const double> gaussians, std::span<double> out);

    /// Per-step variance of the noise increment along the linear functional ell, with B frozen at x.
    double increment_variance(std::span<const double> x, std::span<const double> ell);

    Dynamics& dynamics() noexcept { return dyn_; }

private:
    Dynamics dyn_;
    double dt_;
    double noise_scale_;
    std::vector<double> decay_, sigma_, fx_, scaled_, bx_;
};

/// Per-mode sigma_k(dt) = sqrt((1 - e^{2 mu dt}) / (-2 mu)).
double convolution_stddev(double mu, double dt);

SpectralField step(const ModelSpec& spec, const SimConfig& sim, const SpectralField& x,
                   std::span<const double> gaussians);

/// Simulates from x0 until the first exit from G or t_max. Throws if x0 is outside G.
std::pair<std::optional<Trajectory>, ExitRecord> run_to_exit(const ModelSpec& spec, const SimConfig& sim);

/// Exit-place summary of one ensemble.
struct ExitPlace {
    std::size_t positive_mode1 = 0;  // exits with <x, e_1> >= 0
    std::size_t negative_mode1 = 0;
    std::vector<std::size_t> argmax_histogram;  // by node (or coordinate) attaining the norm
};

struct ExitEnsembleStats {
    std::size_t n_paths = 0;
    double epsilon = 0.0;
    double mean_exit_time = 0.0;  // censored paths enter at t_max
    double stderr_exit_time = 0.0;
    double eps_log_mean = 0.0;
    double censor_fraction = 0.0;
    bool reliable = true;  // false when more than half the paths were censored
    ExitPlace place;
    std::vector<ExitRecord> records;
};

/// Runs n_paths replicas of `templ`, replica i on stream i of templ.seed. The result does not
/// depend on `threads`.
ExitEnsembleStats ensemble_exit(const ModelSpec& spec, const SimConfig& templ, std::size_t n_paths,
                                std::size_t threads = 1);

/// Radial projection of a state onto the boundary {|x|_E = R}.
SpectralField project_to_boundary(const ModelSpec& spec, const SpectralField& x);

/// Censoring cap 50 exp((V + 0.5) / eps) used when a quasipotential estimate is known.
double default_t_max(double quasipotential, double epsilon);

struct AttractionSettings {
    std::size_t samples = 100;
    double horizon = 5.0;
    double dt = 1e-3;
};

/// Deterministic (eps = 0) flow from random x in G: |X(t)| <= C e^{-omega t} |x| (1 + grid tol)
/// and |X| non-increasing up to the grid tolerance.
HypothesisReport attraction_check(const ModelSpec& spec, const AttractionSettings& settings, std::uint64_t seed);

/// Two solutions driven by the same noise: sup_t |X1(t) - X2(t)| <= |x1 - x2| + 10 dt.
HypothesisReport contraction_check(const ModelSpec& spec, const AttractionSettings& settings, double epsilon,
                                   std::uint64_t seed);

}  // namespace ldp
