#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ldpexit/dynamics.hpp"
#include "ldpexit/model.hpp"

namespace ldp {

/// Discretisation of L_t psi = int_0^t S(s) Q psi(s) ds acting on controls sampled at
/// t_i = i dt and weighted by sqrt(dt): block i is sqrt(dt) diag(e^{mu_k (t - t_i)} q_k).
struct DiscretizedOperator {
    Eigen::MatrixXd matrix;  // N x (N * steps)
    double t = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;

    /// Terminal state of the linear controlled system for a sampled control (steps x N, row-major).
    Eigen::VectorXd apply(std::span<const double> samples) const;
};

DiscretizedOperator build_Lt(const ModelSpec& spec, double t, double dt);
/// L truncated at t_inf = 20 / omega.
DiscretizedOperator build_L_infinite(const ModelSpec& spec, double dt);
/// Bound on the discarded tail of L beyond t_inf: e^{-omega t_inf} ||L_1||.
double infinite_horizon_tail_bound(const ModelSpec& spec, double dt);

struct SingularValueProfile {
    std::vector<double> values;        // descending
    std::size_t one_percent_index = 0;  // first index with sigma_i < 0.01 sigma_1 (== size when none)
};

SingularValueProfile singular_value_profile(const DiscretizedOperator& op);

/// Operator norm with the sup-on-grid E norm: max over nodes of the l2 norm of the node's row.
double sup_grid_operator_norm(const ModelSpec& spec, const DiscretizedOperator& op);

/// ||L_t|| with the E-side norm of the model.
double operator_norm(const ModelSpec& spec, const DiscretizedOperator& op);

enum class DecayVerdict { decaying, stagnating, non_monotone };
const char* to_string(DecayVerdict v);

struct NormDecayRow {
    double t = 0.0;
    double norm = 0.0;
    double euclidean_norm = 0.0;
    std::vector<double> sigma;
    bool resolved = true;  // t * max|mu| >= 1
};

struct NormDecayReport {
    std::vector<NormDecayRow> rows;
    double threshold = 0.0;
    DecayVerdict verdict = DecayVerdict::decaying;
    bool passed = true;
};

void to_json(nlohmann::json& j, const NormDecayReport& r);

/// Computes ||L_t|| along t_list (must be decreasing) with step t * relative_dt; passes when the
/// norms strictly decrease and the last one is below `threshold`. A sequence whose last norm keeps
/// more than 90% of the first, or whose norms stay within 10% of the first at every t with
/// t * max|mu| >= 1, is reported as stagnating.
NormDecayReport norm_decay_check(const ModelSpec& spec, std::span<const double> t_list, double relative_dt,
                                 double threshold, std::size_t max_sigma = 8);

/// Sum over the truncated modes of int_0^T |S(t) Q e_k|_E^2 dt plus a power-law tail estimate.
HypothesisReport summability_check(const ModelSpec& spec, double horizon);

struct AprioriSettings {
    std::size_t samples = 1000;
    double horizon = 1.0;
    double dt = 1e-3;
    double x_radius = 2.0;
    double control_radius = 3.0;  // bound on the L2 norm of psi
};

/// Smallest c for which every pilot sample satisfies the a priori bound.
double fit_apriori_constant(const ModelSpec& spec, const AprioriSettings& settings, std::uint64_t seed);

/// Random (x, psi): sup_t |X^psi_x(t)|_E^2 <= c (|x|_E^2 + 1 + |psi|^2) e^{c |psi|^2}, plus the
/// psi = 0 attraction bound |X^0_x(t)| <= C e^{-omega t} |x|.
HypothesisReport apriori_bound_check(const ModelSpec& spec, const AprioriSettings& settings, double c,
                                     std::uint64_t seed);

}  // namespace ldp
