#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ldpexit/action.hpp"
#include "ldpexit/csv.hpp"
#include "ldpexit/model.hpp"
#include "ldpexit/simulate.hpp"

namespace ldp {

/// Raised for malformed or inconsistent experiment configurations (exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Time discretisation of a control problem; unset fields get model-dependent defaults
/// (horizon 8 / omega, dt = min(0.01, 0.1 / max|mu|)).
struct ControlGrid {
    std::optional<double> horizon;
    std::optional<double> dt;
    friend bool operator==(const ControlGrid&, const ControlGrid&) = default;
};

struct SimulateParams {
    double epsilon = 0.1;
    double dt = 1e-3;
    double t_max = 10.0;
    std::optional<SpectralField> x0;
    ExitRule exit_rule = ExitRule::grid;
    friend bool operator==(const SimulateParams&, const SimulateParams&) = default;
};

struct ExitMcParams {
    double epsilon = 0.25;
    double dt = 1e-3;
    std::size_t n_paths = 1000;
    std::optional<double> t_max;  // default 50 exp((V + 0.5) / eps)
    std::optional<SpectralField> x0;
    ExitRule exit_rule = ExitRule::bridge;
    ControlGrid control;
    friend bool operator==(const ExitMcParams&, const ExitMcParams&) = default;
};

struct FwScalingParams {
    std::vector<double> epsilons;
    double dt = 1e-3;
    std::size_t n_paths = 1000;
    std::optional<double> t_max;
    std::optional<SpectralField> x0;
    ExitRule exit_rule = ExitRule::bridge;
    ControlGrid control;
    double slope_tolerance = 0.15;
    friend bool operator==(const FwScalingParams&, const FwScalingParams&) = default;
};

struct ExitPlaceParams {
    std::vector<double> epsilons;
    double dt = 1e-3;
    std::size_t n_paths = 1000;
    std::optional<double> t_max;
    std::optional<SpectralField> x0;
    ExitRule exit_rule = ExitRule::bridge;
    RegionConstraint region;
    ControlGrid control;
    std::optional<double> max_final_fraction;
    friend bool operator==(const ExitPlaceParams&, const ExitPlaceParams&) = default;
};

struct QuasipotentialParams {
    TargetSpec target = BoundaryTarget{};
    ControlGrid control;
    friend bool operator==(const QuasipotentialParams&, const QuasipotentialParams&) = default;
};

struct OperatorNormParams {
    std::vector<double> t_list{1.0, 0.1, 0.01, 1e-3, 1e-4};
    double relative_dt = 1.0 / 200.0;
    double threshold = 0.1;
    std::size_t max_sigma = 8;
    friend bool operator==(const OperatorNormParams&, const OperatorNormParams&) = default;
};

struct ValidateParams {
    std::size_t samples = 1000;  // dissipativity and noise Lipschitz
    double dissipativity_radius = 3.0;
    std::size_t attraction_samples = 100;
    double attraction_horizon = 5.0;
    double attraction_dt = 1e-3;
    double contraction_epsilon = 0.01;
    OperatorNormParams norms;
    double summability_horizon = 1.0;
    std::size_t apriori_samples = 1000;
    std::size_t pilot_samples = 200;
    double apriori_c = 4.0;
    double apriori_horizon = 1.0;
    double apriori_dt = 1e-3;
    double apriori_x_radius = 2.0;
    double apriori_control_radius = 3.0;
    double boundary_delta = 0.01;  // relative to R
    double boundary_tolerance = 0.1;
    ControlGrid control;
    friend bool operator==(const ValidateParams&, const ValidateParams&) = default;
};

using ExperimentParams = std::variant<SimulateParams, ExitMcParams, FwScalingParams, ExitPlaceParams,
                                      QuasipotentialParams, OperatorNormParams, ValidateParams>;

struct ExperimentConfig {
    ModelSpec model;
    ExperimentParams params;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// "simulate", "exit-mc", "fw-scaling", "exit-place", "quasipotential", "operator-norms", "validate".
std::string kind_name(const ExperimentParams& params);
std::vector<std::string> kind_names();

/// Strict parse; the model may be an object or a preset name. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Semantic checks beyond the schema (positivity, dimensions, x0 in G, eps list sizes).
void validate(const ExperimentConfig& config);

nlohmann::json target_to_json(const TargetSpec& target);
TargetSpec target_from_json(const nlohmann::json& j);

struct ExperimentOutput {
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::pair<std::string, CsvWriter>> tables;
    std::vector<std::string> warnings;
    bool passed = true;
};

/// Runs one experiment; the output depends only on the config, not on `threads`.
ExperimentOutput run_experiment(const ExperimentConfig& config, std::size_t threads = 1);

/// Writes summary.json and every table under `dir` (created if missing).
void write_output(const ExperimentOutput& out, const std::filesystem::path& dir);

/// Weighted least-squares fit of y = a + b x with weights w; returns (b, standard error of b).
std::pair<double, double> weighted_slope(const std::vector<double>& x, const std::vector<double>& y,
                                         const std::vector<double>& w);

/// Default control grid for a model (see ControlGrid).
std::pair<double, double> resolve_control_grid(const ModelSpec& spec, const ControlGrid& grid);

/// V(boundary of G_R): Gramian closed form for linear additive euclidean models, otherwise by minimisation.
double boundary_quasipotential(const ModelSpec& spec, double radius, const ControlGrid& grid, std::size_t threads);

}  // namespace ldp
