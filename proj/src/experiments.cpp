#include "ldpexit/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ldpexit/dynamics.hpp"
#include "ldpexit/operator_analysis.hpp"

namespace ldp {

using nlohmann::json;

namespace {

// Strict reader over one JSON object: every key must be consumed.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json& raw(const char* key) {
        used_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) fail(std::string("missing '") + key + "'");
        return *it;
    }

    double number(const char* key) {
        const auto& v = raw(key);
        if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
        return v.get<double>();
    }
    double number(const char* key, double fallback) { return has(key) ? number(key) : fallback; }
    std::optional<double> optional_number(const char* key) {
        if (!has(key)) return std::nullopt;
        return number(key);
    }

    std::size_t count(const char* key, std::size_t fallback) {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_number_unsigned()) fail(std::string("'") + key + "' must be a nonnegative integer");
        return v.get<std::size_t>();
    }

    bool flag(const char* key, bool fallback) {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_boolean()) fail(std::string("'") + key + "' must be a boolean");
        return v.get<bool>();
    }

    std::string text(const char* key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_string()) fail(std::string("'") + key + "' must be a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const char* key) {
        const auto& v = raw(key);
        if (!v.is_array()) fail(std::string("'") + key + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(std::string("'") + key + "' must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!used_.count(key)) fail("unknown key '" + key + "'");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

ExitRule exit_rule_from(const std::string& s) {
    if (s == "grid") return ExitRule::grid;
    if (s == "bridge") return ExitRule::bridge;
    throw ConfigError("exit_rule must be 'grid' or 'bridge'");
}

const char* exit_rule_name(ExitRule r) { return r == ExitRule::grid ? "grid" : "bridge"; }

ControlGrid control_from(Fields& f) {
    ControlGrid g;
    if (!f.has("control")) return g;
    Fields c(f.raw("control"), "control");
    g.horizon = c.optional_number("horizon");
    g.dt = c.optional_number("dt");
    c.finish();
    return g;
}

json control_json(const ControlGrid& g) {
    json j = json::object();
    if (g.horizon) j["horizon"] = *g.horizon;
    if (g.dt) j["dt"] = *g.dt;
    return j;
}

RegionConstraint region_from(const json& j) {
    Fields f(j, "region");
    RegionConstraint r;
    r.mode = f.count("mode", 1);
    r.lower = f.number("lower");
    r.upper = f.number("upper");
    r.absolute = f.flag("absolute", false);
    f.finish();
    return r;
}

json region_json(const RegionConstraint& r) {
    return {{"mode", r.mode}, {"lower", r.lower}, {"upper", r.upper}, {"absolute", r.absolute}};
}

std::optional<SpectralField> x0_from(Fields& f) {
    if (!f.has("x0")) return std::nullopt;
    return SpectralField(f.numbers("x0"));
}

void put_x0(json& j, const std::optional<SpectralField>& x0) {
    if (x0) j["x0"] = x0->vec();
}

void put_optional(json& j, const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
}

OperatorNormParams norms_from(Fields& f) {
    OperatorNormParams p;
    if (f.has("t_list")) p.t_list = f.numbers("t_list");
    p.relative_dt = f.number("relative_dt", p.relative_dt);
    p.threshold = f.number("threshold", p.threshold);
    p.max_sigma = f.count("max_sigma", p.max_sigma);
    return p;
}

void put_norms(json& j, const OperatorNormParams& p) {
    j["t_list"] = p.t_list;
    j["relative_dt"] = p.relative_dt;
    j["threshold"] = p.threshold;
    j["max_sigma"] = p.max_sigma;
}

ExperimentParams params_from(const std::string& kind, Fields& f, const ModelSpec& model) {
    if (kind == "simulate") {
        SimulateParams p;
        p.epsilon = f.number("epsilon", p.epsilon);
        p.dt = f.number("dt", p.dt);
        p.t_max = f.number("t_max", p.t_max);
        p.x0 = x0_from(f);
        p.exit_rule = exit_rule_from(f.text("exit_rule", "grid"));
        return p;
    }
    if (kind == "exit-mc") {
        ExitMcParams p;
        p.epsilon = f.number("epsilon", p.epsilon);
        p.dt = f.number("dt", p.dt);
        p.n_paths = f.count("n_paths", p.n_paths);
        p.t_max = f.optional_number("t_max");
        p.x0 = x0_from(f);
        p.exit_rule = exit_rule_from(f.text("exit_rule", "bridge"));
        p.control = control_from(f);
        return p;
    }
    if (kind == "fw-scaling") {
        FwScalingParams p;
        p.epsilons = f.numbers("epsilons");
        p.dt = f.number("dt", p.dt);
        p.n_paths = f.count("n_paths", p.n_paths);
        p.t_max = f.optional_number("t_max");
        p.x0 = x0_from(f);
        p.exit_rule = exit_rule_from(f.text("exit_rule", "bridge"));
        p.control = control_from(f);
        p.slope_tolerance = f.number("slope_tolerance", p.slope_tolerance);
        return p;
    }
    if (kind == "exit-place") {
        ExitPlaceParams p;
        p.epsilons = f.numbers("epsilons");
        p.dt = f.number("dt", p.dt);
        p.n_paths = f.count("n_paths", p.n_paths);
        p.t_max = f.optional_number("t_max");
        p.x0 = x0_from(f);
        p.exit_rule = exit_rule_from(f.text("exit_rule", "bridge"));
        p.region = region_from(f.raw("region"));
        p.control = control_from(f);
        p.max_final_fraction = f.optional_number("max_final_fraction");
        return p;
    }
    if (kind == "quasipotential") {
        QuasipotentialParams p;
        p.target = f.has("target") ? target_from_json(f.raw("target")) : TargetSpec{BoundaryTarget{model.domain_radius, {}}};
        p.control = control_from(f);
        return p;
    }
    if (kind == "operator-norms") return norms_from(f);
    if (kind == "validate" || kind == "validate-hypotheses") {
        ValidateParams p;
        p.samples = f.count("samples", p.samples);
        p.dissipativity_radius = f.number("dissipativity_radius", p.dissipativity_radius);
        p.attraction_samples = f.count("attraction_samples", p.attraction_samples);
        p.attraction_horizon = f.number("attraction_horizon", p.attraction_horizon);
        p.attraction_dt = f.number("attraction_dt", p.attraction_dt);
        p.contraction_epsilon = f.number("contraction_epsilon", p.contraction_epsilon);
        p.norms = norms_from(f);
        p.summability_horizon = f.number("summability_horizon", p.summability_horizon);
        p.apriori_samples = f.count("apriori_samples", p.apriori_samples);
        p.pilot_samples = f.count("pilot_samples", p.pilot_samples);
        p.apriori_c = f.number("apriori_c", p.apriori_c);
        p.apriori_horizon = f.number("apriori_horizon", p.apriori_horizon);
        p.apriori_dt = f.number("apriori_dt", p.apriori_dt);
        p.apriori_x_radius = f.number("apriori_x_radius", p.apriori_x_radius);
        p.apriori_control_radius = f.number("apriori_control_radius", p.apriori_control_radius);
        p.boundary_delta = f.number("boundary_delta", p.boundary_delta);
        p.boundary_tolerance = f.number("boundary_tolerance", p.boundary_tolerance);
        p.control = control_from(f);
        return p;
    }
    throw ConfigError("unknown experiment kind '" + kind + "'");
}

struct ParamsToJson {
    json& j;
    void operator()(const SimulateParams& p) const {
        j["epsilon"] = p.epsilon;
        j["dt"] = p.dt;
        j["t_max"] = p.t_max;
        put_x0(j, p.x0);
        j["exit_rule"] = exit_rule_name(p.exit_rule);
    }
    void operator()(const ExitMcParams& p) const {
        j["epsilon"] = p.epsilon;
        j["dt"] = p.dt;
        j["n_paths"] = p.n_paths;
        put_optional(j, "t_max", p.t_max);
        put_x0(j, p.x0);
        j["exit_rule"] = exit_rule_name(p.exit_rule);
        j["control"] = control_json(p.control);
    }
    void operator()(const FwScalingParams& p) const {
        j["epsilons"] = p.epsilons;
        j["dt"] = p.dt;
        j["n_paths"] = p.n_paths;
        put_optional(j, "t_max", p.t_max);
        put_x0(j, p.x0);
        j["exit_rule"] = exit_rule_name(p.exit_rule);
        j["control"] = control_json(p.control);
        j["slope_tolerance"] = p.slope_tolerance;
    }
    void operator()(const ExitPlaceParams& p) const {
        j["epsilons"] = p.epsilons;
        j["dt"] = p.dt;
        j["n_paths"] = p.n_paths;
        put_optional(j, "t_max", p.t_max);
        put_x0(j, p.x0);
        j["exit_rule"] = exit_rule_name(p.exit_rule);
        j["region"] = region_json(p.region);
        j["control"] = control_json(p.control);
        put_optional(j, "max_final_fraction", p.max_final_fraction);
    }
    void operator()(const QuasipotentialParams& p) const {
        j["target"] = target_to_json(p.target);
        j["control"] = control_json(p.control);
    }
    void operator()(const OperatorNormParams& p) const { put_norms(j, p); }
    void operator()(const ValidateParams& p) const {
        j["samples"] = p.samples;
        j["dissipativity_radius"] = p.dissipativity_radius;
        j["attraction_samples"] = p.attraction_samples;
        j["attraction_horizon"] = p.attraction_horizon;
        j["attraction_dt"] = p.attraction_dt;
        j["contraction_epsilon"] = p.contraction_epsilon;
        put_norms(j, p.norms);
        j["summability_horizon"] = p.summability_horizon;
        j["apriori_samples"] = p.apriori_samples;
        j["pilot_samples"] = p.pilot_samples;
        j["apriori_c"] = p.apriori_c;
        j["apriori_horizon"] = p.apriori_horizon;
        j["apriori_dt"] = p.apriori_dt;
        j["apriori_x_radius"] = p.apriori_x_radius;
        j["apriori_control_radius"] = p.apriori_control_radius;
        j["boundary_delta"] = p.boundary_delta;
        j["boundary_tolerance"] = p.boundary_tolerance;
        j["control"] = control_json(p.control);
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string kind_name(const ExperimentParams& params) {
    static const char* names[] = {"simulate",       "exit-mc",        "fw-scaling", "exit-place",
                                  "quasipotential", "operator-norms", "validate"};
    return names[params.index()];
}

std::vector<std::string> kind_names() {
    return {"simulate", "exit-mc", "fw-scaling", "exit-place", "quasipotential", "operator-norms", "validate"};
}

json target_to_json(const TargetSpec& target) {
    if (const auto* p = std::get_if<PointTarget>(&target)) return {{"type", "point"}, {"y", p->y.vec()}};
    const auto& b = std::get<BoundaryTarget>(target);
    json j{{"type", "boundary"}, {"radius", b.radius}};
    if (b.region) j["region"] = region_json(*b.region);
    return j;
}

TargetSpec target_from_json(const json& j) {
    Fields f(j, "target");
    const auto type = f.text("type", "");
    if (type == "point") {
        PointTarget t{SpectralField(f.numbers("y"))};
        f.finish();
        return t;
    }
    if (type == "boundary") {
        BoundaryTarget t;
        t.radius = f.number("radius");
        if (f.has("region")) t.region = region_from(f.raw("region"));
        f.finish();
        return t;
    }
    f.fail("type must be 'point' or 'boundary'");
}

ExperimentConfig config_from_json(const json& j) {
    Fields f(j, "config");
    ExperimentConfig c;
    const auto& m = f.raw("model");
    try {
        c.model = m.is_string() ? presets::by_name(m.get<std::string>()) : model_from_json(m);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    const auto kind = f.text("kind", "");
    if (kind.empty()) f.fail("missing 'kind'");
    if (f.has("seed")) {
        const auto& s = f.raw("seed");
        if (!s.is_number_unsigned()) f.fail("'seed' must be a nonnegative integer");
        c.seed = s.get<std::uint64_t>();
    }
    c.output_dir = f.text("output_dir", c.output_dir);
    c.params = params_from(kind, f, c.model);
    f.finish();
    validate(c);
    return c;
}

json to_json(const ExperimentConfig& config) {
    json j;
    json model;
    to_json(model, config.model);
    j["model"] = model;
    j["kind"] = kind_name(config.params);
    j["seed"] = config.seed;
    j["output_dir"] = config.output_dir;
    std::visit(ParamsToJson{j}, config.params);
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

void check_x0(const ModelSpec& spec, const std::optional<SpectralField>& x0) {
    if (!x0) return;
    require(x0->size() == spec.mode_count, "x0 must have mode_count entries");
    require(x0->is_finite(), "x0 must be finite");
    require(in_domain(spec, *x0), "x0 must lie inside G");
}

void check_control(const ControlGrid& g) {
    if (g.horizon) require(positive(*g.horizon), "control.horizon must be positive");
    if (g.dt) require(positive(*g.dt), "control.dt must be positive");
    if (g.horizon && g.dt) require(*g.dt <= *g.horizon, "control.dt must not exceed control.horizon");
}

void check_epsilons(const std::vector<double>& eps, std::size_t min_count) {
    require(eps.size() >= min_count, "need at least " + std::to_string(min_count) + " epsilon values");
    for (double e : eps) require(positive(e), "epsilon values must be positive");
    std::set<double> distinct(eps.begin(), eps.end());
    require(distinct.size() == eps.size(), "epsilon values must be distinct");
}

void check_norms(const OperatorNormParams& p) {
    require(!p.t_list.empty(), "t_list must not be empty");
    for (double t : p.t_list) require(positive(t), "t_list values must be positive");
    require(positive(p.relative_dt) && p.relative_dt <= 1.0, "relative_dt must lie in (0, 1]");
    const double inv = 1.0 / p.relative_dt;
    require(std::abs(inv - std::round(inv)) < 1e-9 * inv, "1 / relative_dt must be an integer");
    require(p.max_sigma >= 1, "max_sigma must be at least 1");
}

void check_target(const ModelSpec& spec, const TargetSpec& target) {
    if (const auto* p = std::get_if<PointTarget>(&target)) {
        require(p->y.size() == spec.mode_count, "target.y must have mode_count entries");
        require(p->y.is_finite(), "target.y must be finite");
    } else {
        const auto& b = std::get<BoundaryTarget>(target);
        require(positive(b.radius), "target.radius must be positive");
        if (b.region) require(b.region->mode >= 1 && b.region->mode <= spec.mode_count, "region.mode out of range");
    }
}

struct Validator {
    const ModelSpec& spec;
    void operator()(const SimulateParams& p) const {
        require(positive(p.epsilon) || p.epsilon == 0.0, "epsilon must be nonnegative");
        require(positive(p.dt) && positive(p.t_max) && p.dt <= p.t_max, "need 0 < dt <= t_max");
        check_x0(spec, p.x0);
    }
    void operator()(const ExitMcParams& p) const {
        require(positive(p.epsilon), "epsilon must be positive");
        require(positive(p.dt), "dt must be positive");
        require(p.n_paths >= 1, "n_paths must be at least 1");
        if (p.t_max) require(positive(*p.t_max) && p.dt <= *p.t_max, "need 0 < dt <= t_max");
        check_x0(spec, p.x0);
        check_control(p.control);
    }
    void operator()(const FwScalingParams& p) const {
        check_epsilons(p.epsilons, 3);
        require(positive(p.dt), "dt must be positive");
        require(p.n_paths >= 2, "n_paths must be at least 2");
        if (p.t_max) require(positive(*p.t_max) && p.dt <= *p.t_max, "need 0 < dt <= t_max");
        check_x0(spec, p.x0);
        check_control(p.control);
        require(positive(p.slope_tolerance), "slope_tolerance must be positive");
    }
    void operator()(const ExitPlaceParams& p) const {
        check_epsilons(p.epsilons, 2);
        require(positive(p.dt), "dt must be positive");
        require(p.n_paths >= 1, "n_paths must be at least 1");
        if (p.t_max) require(positive(*p.t_max) && p.dt <= *p.t_max, "need 0 < dt <= t_max");
        check_x0(spec, p.x0);
        check_control(p.control);
        require(p.region.mode >= 1 && p.region.mode <= spec.mode_count, "region.mode out of range");
        if (p.max_final_fraction)
            require(*p.max_final_fraction >= 0.0 && *p.max_final_fraction <= 1.0,
                    "max_final_fraction must lie in [0, 1]");
    }
    void operator()(const QuasipotentialParams& p) const {
        check_target(spec, p.target);
        check_control(p.control);
    }
    void operator()(const OperatorNormParams& p) const { check_norms(p); }
    void operator()(const ValidateParams& p) const {
        require(p.samples >= 1 && p.attraction_samples >= 1 && p.apriori_samples >= 1 && p.pilot_samples >= 1,
                "sample counts must be positive");
        require(positive(p.dissipativity_radius), "dissipativity_radius must be positive");
        require(positive(p.attraction_horizon) && positive(p.attraction_dt), "attraction settings must be positive");
        require(positive(p.contraction_epsilon) || p.contraction_epsilon == 0.0,
                "contraction_epsilon must be nonnegative");
        check_norms(p.norms);
        require(positive(p.summability_horizon), "summability_horizon must be positive");
        require(positive(p.apriori_c) && positive(p.apriori_horizon) && positive(p.apriori_dt) &&
                    positive(p.apriori_x_radius) && positive(p.apriori_control_radius),
                "a priori settings must be positive");
        require(positive(p.boundary_delta) && positive(p.boundary_tolerance), "boundary regularity settings must be positive");
        check_control(p.control);
    }
};

}  // namespace

void validate(const ExperimentConfig& config) {
    try {
        validate(config.model);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require(!config.output_dir.empty(), "output_dir must not be empty");
    std::visit(Validator{config.model}, config.params);
}

// ---------------------------------------------------------------------------
// Shared numerics

std::pair<double, double> weighted_slope(const std::vector<double>& x, const std::vector<double>& y,
                                         const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
        throw std::invalid_argument("weighted_slope: need at least two matching points");
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sw += w[i], sx += w[i] * x[i], sy += w[i] * y[i];
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("weighted_slope: x values are all equal");
    return {sxy / sxx, std::sqrt(1.0 / sxx)};
}

std::pair<double, double> resolve_control_grid(const ModelSpec& spec, const ControlGrid& grid) {
    const double horizon = grid.horizon.value_or(8.0 / spec.omega());
    double dt = grid.dt.value_or(std::min(0.01, 0.1 / spec.max_rate()));
    // Snap dt so that it divides the horizon.
    dt = horizon / std::ceil(horizon / dt - 1e-9);
    return {horizon, dt};
}

namespace {

bool linear_additive(const ModelSpec& spec) {
    return spec.is_additive() && !std::holds_alternative<CubicDrift>(spec.f_kind);
}

}  // namespace

double boundary_quasipotential(const ModelSpec& spec, double radius, const ControlGrid& grid, std::size_t threads) {
    if (linear_additive(spec)) return quasipotential_linear_boundary(spec, radius);
    const auto [horizon, dt] = resolve_control_grid(spec, grid);
    MinimizeOptions opts;
    opts.threads = threads;
    return quasipotential_minimize(spec, BoundaryTarget{radius, {}}, horizon, dt, std::nullopt, opts).value;
}

namespace {

SpectralField start_point(const ModelSpec& spec, const std::optional<SpectralField>& x0) {
    return x0.value_or(SpectralField(spec.mode_count));
}

json place_json(const ExitPlace& p) {
    return {{"positive_mode1", p.positive_mode1},
            {"negative_mode1", p.negative_mode1},
            {"argmax_histogram", p.argmax_histogram}};
}

json stats_json(const ExitEnsembleStats& s) {
    return {{"n_paths", s.n_paths},
            {"epsilon", s.epsilon},
            {"mean_exit_time", s.mean_exit_time},
            {"stderr", s.stderr_exit_time},
            {"eps_log_mean", s.eps_log_mean},
            {"censor_frac", s.censor_fraction},
            {"reliable", s.reliable},
            {"exit_place", place_json(s.place)}};
}

void warn_ratio(ExperimentOutput& out, double v, double eps) {
    if (std::isfinite(v) && v / eps > 8.0) {
        std::ostringstream msg;
        msg << "V/eps = " << v / eps << " at eps = " << eps << " exceeds 8; plain Monte Carlo will be slow";
        out.warnings.push_back(msg.str());
    }
}

SimConfig sim_config(double eps, double dt, double t_max, std::uint64_t seed, const SpectralField& x0,
                     ExitRule rule) {
    SimConfig c;
    c.epsilon = eps;
    c.dt = dt;
    c.t_max = t_max;
    c.seed = seed;
    c.x0 = x0;
    c.exit_rule = rule;
    return c;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Exits are attributed to the boundary point reached by radial projection.
SpectralField boundary_point(const ModelSpec& spec, const ExitRecord& r) {
    return r.exit_state.size() ? project_to_boundary(spec, r.exit_state) : r.exit_state;
}

// ---------------------------------------------------------------------------
// Commands

ExperimentOutput run_simulate(const ExperimentConfig& c, const SimulateParams& p) {
    const auto& spec = c.model;
    auto sim = sim_config(p.epsilon, p.dt, p.t_max, c.seed, start_point(spec, p.x0), p.exit_rule);
    sim.keep_trajectory = true;
    const auto [traj, record] = run_to_exit(spec, sim);
    std::vector<std::string> header{"time"};
    for (auto& col : numbered_columns("c", spec.mode_count)) header.push_back(col);
    CsvWriter csv(header);
    if (traj) {
        for (std::size_t i = 0; i < traj->times.size(); ++i) {
            std::vector<double> row{traj->times[i]};
            row.insert(row.end(), traj->states[i].coeffs().begin(), traj->states[i].coeffs().end());
            csv.add_row(row);
        }
    }
    ExperimentOutput out;
    out.summary["exit_time"] = record.exit_time;
    out.summary["censored"] = record.censored;
    out.summary["exit_state"] = record.exit_state.vec();
    out.summary["steps"] = csv.rows();
    out.tables.emplace_back("trajectory.csv", std::move(csv));
    return out;
}

ExperimentOutput run_exit_mc(const ExperimentConfig& c, const ExitMcParams& p, std::size_t threads) {
    const auto& spec = c.model;
    ExperimentOutput out;
    double v_hat = std::numeric_limits<double>::quiet_NaN();
    if (!p.t_max) {
        v_hat = boundary_quasipotential(spec, spec.domain_radius, p.control, threads);
        warn_ratio(out, v_hat, p.epsilon);
    }
    const double t_max = p.t_max.value_or(default_t_max(v_hat, p.epsilon));
    const auto sim = sim_config(p.epsilon, p.dt, t_max, c.seed, start_point(spec, p.x0), p.exit_rule);
    const auto stats = ensemble_exit(spec, sim, p.n_paths, threads);

    std::vector<std::string> header{"path_id", "exit_time", "censored"};
    for (auto& col : numbered_columns("c", spec.mode_count)) header.push_back(col);
    CsvWriter csv(header);
    for (std::size_t i = 0; i < stats.records.size(); ++i) {
        const auto& r = stats.records[i];
        std::vector<std::string> row{std::to_string(i), format_double(r.exit_time), r.censored ? "1" : "0"};
        for (double v : r.exit_state.coeffs()) row.push_back(format_double(v));
        csv.add_row(row);
    }
    out.summary = stats_json(stats);
    out.summary["t_max"] = t_max;
    if (std::isfinite(v_hat)) out.summary["quasipotential"] = v_hat;
    out.tables.emplace_back("paths.csv", std::move(csv));
    return out;
}

ExperimentOutput run_fw_scaling(const ExperimentConfig& c, const FwScalingParams& p, std::size_t threads) {
    const auto& spec = c.model;
    ExperimentOutput out;
    const double v_hat = boundary_quasipotential(spec, spec.domain_radius, p.control, threads);
    auto eps = p.epsilons;
    std::sort(eps.begin(), eps.end(), std::greater<>());

    CsvWriter csv({"epsilon", "mean_exit_time", "stderr", "eps_log_mean", "censor_frac", "included", "log_tau_q10",
                   "log_tau_q50", "log_tau_q90"});
    std::vector<double> xs, ys, ws;
    json rows = json::array();
    json excluded = json::array();
    for (std::size_t i = 0; i < eps.size(); ++i) {
        warn_ratio(out, v_hat, eps[i]);
        const double t_max = p.t_max.value_or(default_t_max(v_hat, eps[i]));
        // Each epsilon gets its own seed family so that adding a value leaves the others unchanged.
        const auto sim = sim_config(eps[i], p.dt, t_max, c.seed + 0x9e3779b97f4a7c15ULL * (i + 1), start_point(spec, p.x0),
                                    p.exit_rule);
        const auto stats = ensemble_exit(spec, sim, p.n_paths, threads);
        std::vector<double> logs;
        for (const auto& r : stats.records)
            if (!r.censored && r.exit_time > 0.0) logs.push_back(std::log(r.exit_time));
        const bool included = stats.reliable && stats.mean_exit_time > 0.0;
        if (included) {
            xs.push_back(1.0 / eps[i]);
            ys.push_back(std::log(stats.mean_exit_time));
            const double rel = stats.stderr_exit_time / stats.mean_exit_time;
            ws.push_back(rel > 0.0 ? 1.0 / (rel * rel) : 1.0);
        } else {
            excluded.push_back(eps[i]);
        }
        const double q10 = quantile(logs, 0.1), q50 = quantile(logs, 0.5), q90 = quantile(logs, 0.9);
        csv.add_row({format_double(eps[i]), format_double(stats.mean_exit_time), format_double(stats.stderr_exit_time),
                     format_double(stats.eps_log_mean), format_double(stats.censor_fraction), included ? "1" : "0",
                     format_double(q10), format_double(q50), format_double(q90)});
        auto row = stats_json(stats);
        row["included"] = included;
        row["t_max"] = t_max;
        row["log_tau_quantiles"] = {q10, q50, q90};
        rows.push_back(row);
    }
    out.summary["rows"] = rows;
    out.summary["excluded_epsilons"] = excluded;
    out.summary["quasipotential"] = v_hat;
    if (xs.size() >= 2) {
        const auto [slope, se] = weighted_slope(xs, ys, ws);
        const double gap = std::abs(slope - v_hat) / v_hat;
        out.summary["slope"] = slope;
        out.summary["slope_stderr"] = se;
        out.summary["slope_ci95"] = {slope - 1.96 * se, slope + 1.96 * se};
        out.summary["relative_gap"] = gap;
        out.passed = gap <= p.slope_tolerance;
    } else {
        out.summary["slope"] = nullptr;
        out.warnings.push_back("fewer than two epsilon values survived the censoring filter; no fit");
        out.passed = false;
    }
    out.summary["slope_tolerance"] = p.slope_tolerance;
    out.tables.emplace_back("fw_scaling.csv", std::move(csv));
    return out;
}

ExperimentOutput run_exit_place(const ExperimentConfig& c, const ExitPlaceParams& p, std::size_t threads) {
    const auto& spec = c.model;
    const double radius = spec.domain_radius;
    ExperimentOutput out;
    const double v_boundary = boundary_quasipotential(spec, radius, p.control, threads);
    const bool empty = p.region.lower > p.region.upper;
    double v_region = std::numeric_limits<double>::infinity();
    if (!empty) {
        const auto [horizon, dt] = resolve_control_grid(spec, p.control);
        MinimizeOptions opts;
        opts.threads = threads;
        const auto res = quasipotential_minimize(spec, BoundaryTarget{radius, p.region}, horizon, dt, std::nullopt, opts);
        v_region = res.converged ? res.value : std::numeric_limits<double>::quiet_NaN();
        out.summary["region_minimizer"] = res;
    }
    if (linear_additive(spec) && !spec.is_sup_grid()) {
        json modes = json::array();
        for (std::size_t k = 0; k < spec.mode_count; ++k)
            modes.push_back(quasipotential_linear(spec, radius * SpectralField::unit(spec.mode_count, k + 1)));
        out.summary["gramian_mode_values"] = modes;
    }

    auto eps = p.epsilons;
    std::sort(eps.begin(), eps.end(), std::greater<>());
    CsvWriter csv({"epsilon", "n_paths", "in_region", "fraction", "positive_mode1", "negative_mode1", "mean_exit_time",
                   "censor_frac"});
    std::vector<double> fractions;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        warn_ratio(out, v_boundary, eps[i]);
        const double t_max = p.t_max.value_or(default_t_max(v_boundary, eps[i]));
        const auto sim = sim_config(eps[i], p.dt, t_max, c.seed + 0x9e3779b97f4a7c15ULL * (i + 1),
                                    start_point(spec, p.x0), p.exit_rule);
        const auto stats = ensemble_exit(spec, sim, p.n_paths, threads);
        std::size_t inside = 0, exited = 0;
        for (const auto& r : stats.records) {
            if (r.censored) continue;
            ++exited;
            if (!empty && p.region.contains(boundary_point(spec, r))) ++inside;
        }
        const double fraction = exited ? static_cast<double>(inside) / static_cast<double>(exited) : 0.0;
        fractions.push_back(fraction);
        csv.add_row({format_double(eps[i]), std::to_string(p.n_paths), std::to_string(inside), format_double(fraction),
                     std::to_string(stats.place.positive_mode1), std::to_string(stats.place.negative_mode1),
                     format_double(stats.mean_exit_time), format_double(stats.censor_fraction)});
    }

    std::string verdict;
    if (empty) {
        verdict = "empty_region";
        out.passed = std::all_of(fractions.begin(), fractions.end(), [](double f) { return f == 0.0; });
    } else if (!std::isfinite(v_region) || std::abs(v_region - v_boundary) <= 0.02 * v_boundary) {
        verdict = "inconclusive";
    } else if (v_region < v_boundary) {
        verdict = "inconclusive";
        out.warnings.push_back("V(region) below V(boundary): optimizer did not find the boundary minimum");
    } else {
        bool decreasing = true;
        for (std::size_t i = 1; i < fractions.size(); ++i)
            if (fractions[i] > fractions[i - 1]) decreasing = false;
        if (fractions.back() >= fractions.front()) decreasing = false;
        const bool small = !p.max_final_fraction || fractions.back() < *p.max_final_fraction;
        out.passed = decreasing && small;
        verdict = out.passed ? "concentrating" : "not_concentrating";
    }
    out.summary["verdict"] = verdict;
    out.summary["fractions"] = fractions;
    out.summary["epsilons"] = eps;
    out.summary["v_boundary"] = v_boundary;
    out.summary["v_region"] = std::isfinite(v_region) ? json(v_region) : json(nullptr);
    out.tables.emplace_back("exit_place.csv", std::move(csv));
    return out;
}

ExperimentOutput run_quasipotential(const ExperimentConfig& c, const QuasipotentialParams& p, std::size_t threads) {
    const auto& spec = c.model;
    const auto [horizon, dt] = resolve_control_grid(spec, p.control);
    MinimizeOptions opts;
    opts.threads = threads;
    const auto res = quasipotential_minimize(spec, p.target, horizon, dt, std::nullopt, opts);
    ExperimentOutput out;
    out.summary["result"] = res;
    out.summary["target"] = target_to_json(p.target);
    if (linear_additive(spec)) {
        double oracle = std::numeric_limits<double>::quiet_NaN();
        if (const auto* t = std::get_if<PointTarget>(&p.target)) oracle = quasipotential_linear(spec, t->y);
        else if (!std::get<BoundaryTarget>(p.target).region)
            oracle = quasipotential_linear_boundary(spec, std::get<BoundaryTarget>(p.target).radius);
        if (std::isfinite(oracle)) {
            out.summary["oracle"] = oracle;
            out.summary["relative_error"] = oracle > 0.0 ? std::abs(res.value - oracle) / oracle : res.value;
        }
    }
    std::vector<std::string> header{"t"};
    for (auto& col : numbered_columns("psi_", spec.mode_count)) header.push_back(col);
    CsvWriter csv(header);
    for (std::size_t i = 0; i < res.control.steps(); ++i) {
        std::vector<double> row{res.control.time(i)};
        const auto v = res.control.at(i);
        row.insert(row.end(), v.begin(), v.end());
        csv.add_row(row);
    }
    out.tables.emplace_back("control.csv", std::move(csv));
    out.passed = res.converged;
    return out;
}

ExperimentOutput run_operator_norms(const ExperimentConfig& c, const OperatorNormParams& p) {
    const auto& spec = c.model;
    const auto report = norm_decay_check(spec, p.t_list, p.relative_dt, p.threshold, p.max_sigma);
    const std::size_t m = std::min(p.max_sigma, spec.mode_count);
    std::vector<std::string> header{"t", "norm"};
    for (auto& col : numbered_columns("sigma_", m)) header.push_back(col);
    CsvWriter csv(header);
    for (const auto& row : report.rows) {
        std::vector<double> cells{row.t, row.norm};
        cells.insert(cells.end(), row.sigma.begin(), row.sigma.end());
        csv.add_row(cells);
    }
    ExperimentOutput out;
    out.summary = report;
    out.passed = report.passed;
    out.tables.emplace_back("norms.csv", std::move(csv));
    return out;
}

HypothesisReport linear_report(const ModelSpec& spec) {
    HypothesisReport r;
    r.hypothesis = "linear";
    r.samples = spec.mode_count;
    double top = -std::numeric_limits<double>::infinity();
    for (double mu : spec.eigenvalues) top = std::max(top, mu);
    r.max_violation = top;
    r.tolerance = 0.0;
    r.passed = top < 0.0;
    r.details = {{"largest_eigenvalue", top}, {"omega", spec.omega()}};
    return r;
}

HypothesisReport norm_report(const ModelSpec& spec, const OperatorNormParams& p) {
    const auto nd = norm_decay_check(spec, p.t_list, p.relative_dt, p.threshold, p.max_sigma);
    HypothesisReport r;
    r.hypothesis = "norm_decay";
    r.samples = nd.rows.size();
    r.passed = nd.passed;
    r.max_ratio = nd.rows.back().norm / nd.rows.front().norm;
    r.details = nd;
    if (!nd.passed) {
        r.note = std::string("verdict: ") + to_string(nd.verdict);
        r.max_violation = nd.rows.back().norm - nd.threshold;
    }
    return r;
}

HypothesisReport boundary_regularity_report(const ModelSpec& spec, const ValidateParams& p, std::size_t threads) {
    HypothesisReport r;
    r.hypothesis = "boundary_regularity";
    r.samples = 2;
    const double radius = spec.domain_radius;
    const double v_in = boundary_quasipotential(spec, radius, p.control, threads);
    const double v_out = boundary_quasipotential(spec, radius * (1.0 + p.boundary_delta), p.control, threads);
    const double gap = (v_out - v_in) / v_in;
    r.details = {{"v_boundary", v_in}, {"v_outside", v_out}, {"delta", p.boundary_delta}, {"relative_gap", gap}};
    r.max_ratio = gap;
    r.tolerance = p.boundary_tolerance;
    r.passed = std::isfinite(v_in) && std::isfinite(v_out) && std::abs(gap) <= p.boundary_tolerance;
    if (!r.passed) r.max_violation = std::isfinite(gap) ? std::abs(gap) : std::numeric_limits<double>::infinity();
    return r;
}

ExperimentOutput run_validate(const ExperimentConfig& c, const ValidateParams& p, std::size_t threads) {
    const auto& spec = c.model;
    std::vector<HypothesisReport> reports;
    reports.push_back(linear_report(spec));
    reports.push_back(summability_check(spec, p.summability_horizon));
    reports.push_back(check_dissipativity(spec, p.samples, p.dissipativity_radius, c.seed));
    if (spec.is_additive()) {
        HypothesisReport skipped;
        skipped.hypothesis = "noise_lipschitz";
        skipped.applicable = false;
        skipped.note = "additive noise";
        reports.push_back(skipped);
    } else {
        reports.push_back(check_B_lipschitz(spec, p.samples, c.seed));
    }
    const AttractionSettings attraction{p.attraction_samples, p.attraction_horizon, p.attraction_dt};
    reports.push_back(attraction_check(spec, attraction, c.seed));
    reports.push_back(contraction_check(spec, attraction, p.contraction_epsilon, c.seed));
    reports.push_back(norm_report(spec, p.norms));

    AprioriSettings apriori{p.apriori_samples, p.apriori_horizon, p.apriori_dt, p.apriori_x_radius,
                            p.apriori_control_radius};
    auto pilot = apriori;
    pilot.samples = p.pilot_samples;
    const double fitted = fit_apriori_constant(spec, pilot, c.seed + 1);
    auto ap = apriori_bound_check(spec, apriori, p.apriori_c, c.seed);
    ap.details["pilot_fit"] = std::isfinite(fitted) ? json(fitted) : json("inf");
    reports.push_back(std::move(ap));
    reports.push_back(boundary_regularity_report(spec, p, threads));

    ExperimentOutput out;
    json list = json::array();
    CsvWriter csv({"hypothesis", "applicable", "passed", "samples", "max_violation", "max_ratio"});
    for (const auto& r : reports) {
        list.push_back(r);
        csv.add_row({r.hypothesis, r.applicable ? "1" : "0", r.passed ? "1" : "0", std::to_string(r.samples),
                     format_double(r.max_violation), format_double(r.max_ratio)});
        if (r.applicable && !r.passed) out.passed = false;
    }
    out.summary["hypotheses"] = list;
    out.tables.emplace_back("hypotheses.csv", std::move(csv));
    return out;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& config, std::size_t threads) {
    validate(config);
    threads = std::max<std::size_t>(threads, 1);
    ExperimentOutput out = std::visit(
        [&](const auto& p) -> ExperimentOutput {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, SimulateParams>) return run_simulate(config, p);
            else if constexpr (std::is_same_v<P, ExitMcParams>) return run_exit_mc(config, p, threads);
            else if constexpr (std::is_same_v<P, FwScalingParams>) return run_fw_scaling(config, p, threads);
            else if constexpr (std::is_same_v<P, ExitPlaceParams>) return run_exit_place(config, p, threads);
            else if constexpr (std::is_same_v<P, QuasipotentialParams>) return run_quasipotential(config, p, threads);
            else if constexpr (std::is_same_v<P, OperatorNormParams>) return run_operator_norms(config, p);
            else return run_validate(config, p, threads);
        },
        config.params);
    json summary = json::object();
    summary["kind"] = kind_name(config.params);
    summary["seed"] = config.seed;
    summary["config"] = to_json(config);
    summary["passed"] = out.passed;
    summary["warnings"] = out.warnings;
    summary["report"] = std::move(out.summary);
    out.summary = std::move(summary);
    return out;
}

void write_output(const ExperimentOutput& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "summary.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
        f << out.summary.dump(2) << '\n';
    }
    for (const auto& [name, table] : out.tables) table.save(dir / name);
}

}  // namespace ldp
