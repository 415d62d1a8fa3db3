#include "ldpexit/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>
#include <limits>
#include <stdexcept>

namespace ldp {

using nlohmann::json;

SpectralField::SpectralField(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {}

SpectralField::SpectralField(std::initializer_list<double> coeffs) : coeffs_(coeffs) {}

SpectralField SpectralField::unit(std::size_t n, std::size_t mode) {
    if (mode == 0 || mode > n) throw std::out_of_range("SpectralField::unit: mode out of range");
    SpectralField f(n);
    f[mode - 1] = 1.0;
    return f;
}

bool SpectralField::is_finite() const noexcept {
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](double v) { return std::isfinite(v); });
}

double SpectralField::l2_norm() const noexcept {
    double s = 0.0;
    for (double v : coeffs_) s += v * v;
    return std::sqrt(s);
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
    if (o.size() != size()) throw std::invalid_argument("SpectralField: size mismatch");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
    if (o.size() != size()) throw std::invalid_argument("SpectralField: size mismatch");
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
}

SpectralField& SpectralField::operator*=(double s) {
    for (double& v : coeffs_) v *= s;
    return *this;
}

// ---------------------------------------------------------------------------

double ScalarFunction::operator()(double r) const noexcept {
    switch (type) {
        case Type::constant: return value;
        case Type::affine: return slope * r + intercept;
        case Type::sine: return amplitude * std::sin(frequency * r) + offset;
    }
    return 0.0;
}

double ScalarFunction::derivative(double r) const noexcept {
    switch (type) {
        case Type::constant: return 0.0;
        case Type::affine: return slope;
        case Type::sine: return amplitude * frequency * std::cos(frequency * r);
    }
    return 0.0;
}

double ScalarFunction::lipschitz() const noexcept {
    switch (type) {
        case Type::constant: return 0.0;
        case Type::affine: return std::abs(slope);
        case Type::sine: return std::abs(amplitude * frequency);
    }
    return 0.0;
}

double ScalarFunction::growth() const noexcept {
    switch (type) {
        case Type::constant: return std::abs(value);
        case Type::affine: return std::max(std::abs(slope), std::abs(intercept));
        case Type::sine: {
            const double a = std::abs(amplitude), c = std::abs(offset);
            return std::min(a + c, std::max(c, a * std::abs(frequency)));
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

std::size_t ModelSpec::grid_points() const noexcept {
    if (const auto* g = std::get_if<SupOnGrid>(&norm_kind)) return g->points;
    return 0;
}

double ModelSpec::omega() const noexcept {
    double w = std::numeric_limits<double>::infinity();
    for (double mu : eigenvalues) w = std::min(w, -mu);
    return w;
}

double ModelSpec::max_rate() const noexcept {
    double w = 0.0;
    for (double mu : eigenvalues) w = std::max(w, -mu);
    return w;
}

void validate(const ModelSpec& spec) {
    const auto n = spec.mode_count;
    if (n == 0) throw std::invalid_argument("model: mode_count must be >= 1");
    if (spec.eigenvalues.size() != n)
        throw std::invalid_argument("model: eigenvalues must have mode_count entries");
    if (spec.q_weights.size() != n)
        throw std::invalid_argument("model: q_weights must have mode_count entries");
    for (double mu : spec.eigenvalues)
        if (!std::isfinite(mu) || !(mu < 0.0))
            throw std::invalid_argument("model: every eigenvalue must be finite and negative");
    for (double q : spec.q_weights)
        if (!std::isfinite(q) || q < 0.0)
            throw std::invalid_argument("model: q_weights must be finite and nonnegative");
    if (!std::isfinite(spec.domain_radius) || !(spec.domain_radius > 0.0))
        throw std::invalid_argument("model: domain_radius must be positive");
    if (const auto* g = std::get_if<SupOnGrid>(&spec.norm_kind)) {
        if (g->points < 2 * n + 1)
            throw std::invalid_argument("model: sup_on_grid needs at least 2N+1 collocation points");
    }
    if (const auto* d = std::get_if<LinearDamping>(&spec.f_kind)) {
        if (!std::isfinite(d->lambda)) throw std::invalid_argument("model: lambda must be finite");
    }
    if (const auto* c = std::get_if<CubicDrift>(&spec.f_kind)) {
        if (!std::isfinite(c->coefficient))
            throw std::invalid_argument("model: cubic coefficient must be finite");
    }
}

ModelSpec make_model(ModelSpec spec) {
    if (auto* g = std::get_if<SupOnGrid>(&spec.norm_kind); g && g->points == 0)
        g->points = 4 * spec.mode_count + 1;
    validate(spec);
    return spec;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
}

const json& require(const json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end()) throw std::invalid_argument(std::string(where) + ": missing '" + key + "'");
    return *it;
}

double number(const json& j, const char* key, const char* where) {
    const auto& v = require(j, key, where);
    if (!v.is_number()) throw std::invalid_argument(std::string(where) + ": '" + key + "' must be a number");
    return v.get<double>();
}

std::string type_of(const json& j, const char* where) {
    if (j.is_string()) return j.get<std::string>();
    const auto& t = require(j, "type", where);
    if (!t.is_string()) throw std::invalid_argument(std::string(where) + ": 'type' must be a string");
    return t.get<std::string>();
}

json scalar_function_json(const ScalarFunction& b) {
    switch (b.type) {
        case ScalarFunction::Type::constant: return {{"type", "constant"}, {"value", b.value}};
        case ScalarFunction::Type::affine:
            return {{"type", "affine"}, {"slope", b.slope}, {"intercept", b.intercept}};
        case ScalarFunction::Type::sine:
            return {{"type", "sine"},
                    {"amplitude", b.amplitude},
                    {"frequency", b.frequency},
                    {"offset", b.offset}};
    }
    return {};
}

ScalarFunction scalar_function_from_json(const json& j) {
    constexpr const char* where = "b";
    ScalarFunction b;
    const auto t = type_of(j, where);
    if (t == "constant") {
        reject_unknown(j, {"type", "value"}, where);
        b.type = ScalarFunction::Type::constant;
        b.value = number(j, "value", where);
    } else if (t == "affine") {
        reject_unknown(j, {"type", "slope", "intercept"}, where);
        b.type = ScalarFunction::Type::affine;
        b.slope = number(j, "slope", where);
        b.intercept = j.contains("intercept") ? number(j, "intercept", where) : 0.0;
    } else if (t == "sine") {
        reject_unknown(j, {"type", "amplitude", "frequency", "offset"}, where);
        b.type = ScalarFunction::Type::sine;
        b.amplitude = j.contains("amplitude") ? number(j, "amplitude", where) : 1.0;
        b.frequency = j.contains("frequency") ? number(j, "frequency", where) : 1.0;
        b.offset = j.contains("offset") ? number(j, "offset", where) : 0.0;
    } else {
        throw std::invalid_argument("b: unknown function type '" + t + "'");
    }
    return b;
}

std::vector<double> number_array(const json& j, const char* key) {
    const auto& v = require(j, key, "model");
    if (!v.is_array()) throw std::invalid_argument(std::string("model: '") + key + "' must be an array");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw std::invalid_argument(std::string("model: '") + key + "' must hold numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace

void to_json(json& j, const ModelSpec& spec) {
    json f = std::visit(
        [](const auto& k) -> json {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ZeroDrift>) return {{"type", "zero"}};
            else if constexpr (std::is_same_v<K, LinearDamping>)
                return {{"type", "linear_damping"}, {"lambda", k.lambda}};
            else return {{"type", "cubic"}, {"coefficient", k.coefficient}};
        },
        spec.f_kind);
    json b = std::visit(
        [](const auto& k) -> json {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, AdditiveNoise>) return {{"type", "additive"}};
            else return {{"type", "multiplicative"}, {"b", scalar_function_json(k.b)}};
        },
        spec.b_kind);
    json norm = std::visit(
        [](const auto& k) -> json {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, SupOnGrid>) return {{"type", "sup_on_grid"}, {"points", k.points}};
            else return {{"type", "euclidean"}};
        },
        spec.norm_kind);
    j = json{{"mode_count", spec.mode_count},
             {"eigenvalues", spec.eigenvalues},
             {"q_weights", spec.q_weights},
             {"f_kind", f},
             {"b_kind", b},
             {"domain_radius", spec.domain_radius},
             {"norm_kind", norm}};
}

ModelSpec model_from_json(const json& j) {
    reject_unknown(j, {"mode_count", "eigenvalues", "q_weights", "f_kind", "b_kind", "domain_radius", "norm_kind"},
                   "model");
    ModelSpec spec;
    const auto& n = require(j, "mode_count", "model");
    if (!n.is_number_integer() || n.get<long long>() < 1)
        throw std::invalid_argument("model: mode_count must be a positive integer");
    spec.mode_count = n.get<std::size_t>();
    spec.eigenvalues = number_array(j, "eigenvalues");
    spec.q_weights = number_array(j, "q_weights");
    spec.domain_radius = number(j, "domain_radius", "model");

    const auto& f = require(j, "f_kind", "model");
    const auto ft = type_of(f, "f_kind");
    if (ft == "zero") {
        if (f.is_object()) reject_unknown(f, {"type"}, "f_kind");
        spec.f_kind = ZeroDrift{};
    } else if (ft == "linear_damping") {
        reject_unknown(f, {"type", "lambda"}, "f_kind");
        spec.f_kind = LinearDamping{number(f, "lambda", "f_kind")};
    } else if (ft == "cubic") {
        CubicDrift c;
        if (f.is_object()) {
            reject_unknown(f, {"type", "coefficient"}, "f_kind");
            if (f.contains("coefficient")) c.coefficient = number(f, "coefficient", "f_kind");
        }
        spec.f_kind = c;
    } else {
        throw std::invalid_argument("f_kind: unknown type '" + ft + "'");
    }

    const auto& b = require(j, "b_kind", "model");
    const auto bt = type_of(b, "b_kind");
    if (bt == "additive") {
        if (b.is_object()) reject_unknown(b, {"type"}, "b_kind");
        spec.b_kind = AdditiveNoise{};
    } else if (bt == "multiplicative") {
        reject_unknown(b, {"type", "b"}, "b_kind");
        spec.b_kind = MultiplicativeNoise{scalar_function_from_json(require(b, "b", "b_kind"))};
    } else {
        throw std::invalid_argument("b_kind: unknown type '" + bt + "'");
    }

    const auto& nk = require(j, "norm_kind", "model");
    const auto nt = type_of(nk, "norm_kind");
    if (nt == "euclidean") {
        if (nk.is_object()) reject_unknown(nk, {"type"}, "norm_kind");
        spec.norm_kind = Euclidean{};
    } else if (nt == "sup_on_grid") {
        SupOnGrid g;
        if (nk.is_object()) {
            reject_unknown(nk, {"type", "points"}, "norm_kind");
            if (nk.contains("points")) {
                const auto& p = nk["points"];
                if (!p.is_number_integer() || p.get<long long>() < 1)
                    throw std::invalid_argument("norm_kind: points must be a positive integer");
                g.points = p.get<std::size_t>();
            }
        }
        spec.norm_kind = g;
    } else {
        throw std::invalid_argument("norm_kind: unknown type '" + nt + "'");
    }
    return make_model(std::move(spec));
}

// ---------------------------------------------------------------------------

namespace presets {

ModelSpec ornstein_uhlenbeck(double omega, double q, double radius) {
    ModelSpec s;
    s.mode_count = 1;
    s.eigenvalues = {-omega};
    s.q_weights = {q};
    s.domain_radius = radius;
    s.norm_kind = Euclidean{};
    return make_model(s);
}

ModelSpec linear_heat(std::size_t modes, double radius, bool sup_norm) {
    ModelSpec s;
    s.mode_count = modes;
    for (std::size_t k = 1; k <= modes; ++k) {
        s.eigenvalues.push_back(-static_cast<double>(k * k));
        s.q_weights.push_back(1.0);
    }
    s.domain_radius = radius;
    if (sup_norm) s.norm_kind = SupOnGrid{};
    return make_model(s);
}

ModelSpec cubic_heat(std::size_t modes, double radius) {
    auto s = linear_heat(modes, radius, true);
    s.f_kind = CubicDrift{-1.0};
    return make_model(s);
}

ModelSpec wrong_sign_cubic_heat(std::size_t modes, double radius) {
    auto s = linear_heat(modes, radius, true);
    s.f_kind = CubicDrift{+1.0};
    return make_model(s);
}

ModelSpec multiplicative_heat(std::size_t modes, double radius) {
    auto s = cubic_heat(modes, radius);
    ScalarFunction b;
    b.type = ScalarFunction::Type::sine;
    b.amplitude = 0.5;
    b.frequency = 1.0;
    b.offset = 1.0;
    s.b_kind = MultiplicativeNoise{b};
    return make_model(s);
}

ModelSpec scalar_cubic(double radius) {
    auto s = ornstein_uhlenbeck(1.0, 1.0, radius);
    s.f_kind = CubicDrift{-1.0};
    return make_model(s);
}

ModelSpec stagnation(std::size_t modes) {
    ModelSpec s;
    s.mode_count = modes;
    for (std::size_t k = 1; k <= modes; ++k) {
        const auto kk = static_cast<double>(k);
        s.eigenvalues.push_back(-kk * kk);
        s.q_weights.push_back(kk);
    }
    s.domain_radius = 1.0;
    return make_model(s);
}

std::vector<std::string> names() {
    return {"ou", "linear_heat", "cubic_heat", "wrong_sign_cubic_heat", "multiplicative_heat", "scalar_cubic",
            "stagnation"};
}

ModelSpec by_name(const std::string& name) {
    if (name == "ou") return ornstein_uhlenbeck();
    if (name == "linear_heat") return linear_heat(8, 1.0, true);
    if (name == "cubic_heat") return cubic_heat();
    if (name == "wrong_sign_cubic_heat") return wrong_sign_cubic_heat();
    if (name == "multiplicative_heat") return multiplicative_heat();
    if (name == "scalar_cubic") return scalar_cubic();
    if (name == "stagnation") return stagnation();
    throw std::invalid_argument("unknown model preset '" + name + "'");
}

}  // namespace presets

// ---------------------------------------------------------------------------

Collocation::Collocation(std::size_t modes, std::size_t points)
    : modes_(modes), points_(points), weight_(std::numbers::pi / static_cast<double>(points + 1)),
      basis_(modes * points) {
    const double norm = std::sqrt(2.0 / std::numbers::pi);
    for (std::size_t j = 0; j < points_; ++j)
        for (std::size_t k = 0; k < modes_; ++k)
            basis_[j * modes_ + k] = norm * std::sin(static_cast<double>(k + 1) * node(j));
}

double Collocation::node(std::size_t j) const noexcept {
    return static_cast<double>(j + 1) * std::numbers::pi / static_cast<double>(points_ + 1);
}

void Collocation::to_grid(std::span<const double> coeffs, std::span<double> values) const {
    for (std::size_t j = 0; j < points_; ++j) {
        const double* row = &basis_[j * modes_];
        double v = 0.0;
        for (std::size_t k = 0; k < modes_; ++k) v += row[k] * coeffs[k];
        values[j] = v;
    }
}

void Collocation::to_coeffs(std::span<const double> values, std::span<double> coeffs) const {
    std::fill(coeffs.begin(), coeffs.begin() + static_cast<std::ptrdiff_t>(modes_), 0.0);
    for (std::size_t j = 0; j < points_; ++j) {
        const double* row = &basis_[j * modes_];
        const double v = values[j] * weight_;
        for (std::size_t k = 0; k < modes_; ++k) coeffs[k] += row[k] * v;
    }
}

void Collocation::to_grid_transpose(std::span<const double> values, std::span<double> coeffs) const {
    std::fill(coeffs.begin(), coeffs.begin() + static_cast<std::ptrdiff_t>(modes_), 0.0);
    for (std::size_t j = 0; j < points_; ++j) {
        const double* row = &basis_[j * modes_];
        for (std::size_t k = 0; k < modes_; ++k) coeffs[k] += row[k] * values[j];
    }
}

void Collocation::to_coeffs_transpose(std::span<const double> coeffs, std::span<double> values) const {
    to_grid(coeffs, values);
    for (std::size_t j = 0; j < points_; ++j) values[j] *= weight_;
}

std::vector<double> Collocation::to_grid(const SpectralField& x) const {
    std::vector<double> v(points_);
    to_grid(x.coeffs(), v);
    return v;
}

SpectralField Collocation::to_coeffs(std::span<const double> values) const {
    SpectralField c(modes_);
    to_coeffs(values, c.coeffs());
    return c;
}

const Collocation& collocation_for(const ModelSpec& spec) {
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<Collocation>> cache;
    const auto key = std::make_pair(spec.mode_count, spec.grid_points());
    std::lock_guard lock(mutex);
    auto& slot = cache[key];
    if (!slot) slot = std::make_unique<Collocation>(key.first, key.second);
    return *slot;
}

// ---------------------------------------------------------------------------

SpectralField semigroup_apply(const ModelSpec& spec, double t, const SpectralField& x) {
    if (!(t >= 0.0)) throw std::invalid_argument("semigroup_apply: t must be nonnegative");
    if (x.size() != spec.mode_count) throw std::invalid_argument("semigroup_apply: size mismatch");
    SpectralField y = x;
    for (std::size_t k = 0; k < spec.mode_count; ++k) y[k] *= std::exp(spec.eigenvalues[k] * t);
    return y;
}

std::size_t argmax_abs(std::span<const double> values) noexcept {
    std::size_t best = 0;
    double m = -1.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
        const double a = std::abs(values[j]);
        if (a > m) {
            m = a;
            best = j;
        }
    }
    return best;
}

double sup_norm(const ModelSpec& spec, const SpectralField& x) {
    if (!spec.is_sup_grid()) return x.l2_norm();
    const auto values = collocation_for(spec).to_grid(x);
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

bool in_domain(const ModelSpec& spec, const SpectralField& x) {
    return sup_norm(spec, x) < spec.domain_radius;
}

std::vector<double> pointwise_values(const ModelSpec& spec, const SpectralField& x) {
    if (!spec.is_sup_grid()) return x.vec();
    return collocation_for(spec).to_grid(x);
}

SpectralField from_pointwise(const ModelSpec& spec, std::span<const double> values) {
    if (!spec.is_sup_grid()) return SpectralField(std::vector<double>(values.begin(), values.end()));
    return collocation_for(spec).to_coeffs(values);
}

double grid_tolerance(const ModelSpec& spec) {
    if (!spec.is_sup_grid()) return 0.0;
    // An odd trigonometric polynomial of degree N sampled at 2(M+1) equispaced nodes per period
    // satisfies |p|_inf <= sec(N pi / (2 (M+1))) max_j |p(xi_j)|.
    const double angle = static_cast<double>(spec.mode_count) * std::numbers::pi /
                         (2.0 * static_cast<double>(spec.grid_points() + 1));
    return 1.0 / std::cos(angle) - 1.0;
}

double semigroup_norm_constant(const ModelSpec& spec) {
    if (!spec.is_sup_grid()) return 1.0;
    const auto& grid = collocation_for(spec);
    const auto n = spec.mode_count;
    const auto m = grid.points();
    const double omega = spec.omega();
    const double w = grid.quadrature_weight();
    // Phi S(t) Phi^+ on the grid; sample t log-uniformly up to 10 / omega (plus t = 0).
    std::vector<double> times{0.0};
    const double t_lo = 1e-3 / spec.max_rate(), t_hi = 10.0 / omega;
    constexpr int samples = 120;
    for (int i = 0; i <= samples; ++i)
        times.push_back(t_lo * std::pow(t_hi / t_lo, static_cast<double>(i) / samples));
    double best = 0.0;
    std::vector<double> scaled(n);
    for (double t : times) {
        for (std::size_t k = 0; k < n; ++k) scaled[k] = std::exp(spec.eigenvalues[k] * t) * w;
        double norm = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double row = 0.0;
            for (std::size_t l = 0; l < m; ++l) {
                double v = 0.0;
                for (std::size_t k = 0; k < n; ++k) v += grid.basis(j, k) * scaled[k] * grid.basis(l, k);
                row += std::abs(v);
            }
            norm = std::max(norm, row);
        }
        best = std::max(best, std::exp(omega * t) * norm);
    }
    return best;
}

}  // namespace ldp
