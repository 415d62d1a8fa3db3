#include "ldpexit/action.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "ldpexit/dynamics.hpp"
#include "ldpexit/parallel.hpp"

namespace ldp {

using nlohmann::json;

ControlPath::ControlPath(std::size_t steps, std::size_t modes, double dt)
    : steps_(steps), modes_(modes), dt_(dt), values_(steps * modes, 0.0) {
    if (!(dt > 0.0)) throw std::invalid_argument("ControlPath: dt must be positive");
}

bool ControlPath::is_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double action_value(const ControlPath& psi) {
    double s = 0.0;
    for (double v : psi.values()) s += v * v;
    return 0.5 * psi.dt() * s;
}

namespace {

double phi1(double mu, double dt) { return -std::expm1(mu * dt) / (-mu); }

/// Forward/adjoint sweeps of the controlled exponential-Euler map.
class ControlledSystem {
public:
    ControlledSystem(const ModelSpec& spec, double dt)
        : dyn_(spec), n_(spec.mode_count), dt_(dt), decay_(n_), phi_(n_), f_(n_), b_(n_), w_(n_), a_(n_), c_(n_),
          lam_(n_), next_(n_) {
        for (std::size_t k = 0; k < n_; ++k) {
            decay_[k] = std::exp(spec.eigenvalues[k] * dt);
            phi_[k] = phi1(spec.eigenvalues[k], dt);
        }
    }

    Dynamics& dynamics() noexcept { return dyn_; }
    std::span<const double> decay() const noexcept { return decay_; }
    std::span<const double> phi() const noexcept { return phi_; }

    /// states has (steps + 1) * N entries; states[0..N) must hold x0.
    void forward(const ControlPath& psi, std::vector<double>& states) {
        for (std::size_t i = 0; i < psi.steps(); ++i) {
            std::span<const double> x{states.data() + i * n_, n_};
            std::span<double> out{states.data() + (i + 1) * n_, n_};
            dyn_.drift(x, f_);
            dyn_.noise(x, psi.at(i), b_);
            for (std::size_t k = 0; k < n_; ++k) out[k] = decay_[k] * (x[k] + dt_ * f_[k]) + phi_[k] * b_[k];
        }
    }

    /// Backward sweep from lambda_T = terminal; writes the euclidean gradient of the terminal
    /// functional with respect to psi into grad (without the action term).
    void backward(const ControlPath& psi, const std::vector<double>& states, std::span<const double> terminal,
                  std::span<double> grad) {
        std::copy(terminal.begin(), terminal.end(), lam_.begin());
        for (std::size_t i = psi.steps(); i-- > 0;) {
            std::span<const double> x{states.data() + i * n_, n_};
            for (std::size_t k = 0; k < n_; ++k) {
                w_[k] = phi_[k] * lam_[k];
                a_[k] = decay_[k] * lam_[k];
            }
            dyn_.noise_adjoint(x, w_, {grad.data() + i * n_, n_});
            dyn_.drift_adjoint(x, a_, f_);
            dyn_.noise_state_adjoint(x, psi.at(i), w_, c_);
            for (std::size_t k = 0; k < n_; ++k) lam_[k] = a_[k] + dt_ * f_[k] + c_[k];
        }
    }

private:
    Dynamics dyn_;
    std::size_t n_;
    double dt_;
    std::vector<double> decay_, phi_, f_, b_, w_, a_, c_, lam_, next_;
};

/// Squared distance to the target and its gradient.
double target_distance(Dynamics& dyn, const TargetSpec& target, std::span<const double> x, std::span<double> grad) {
    const auto n = dyn.modes();
    if (const auto* p = std::get_if<PointTarget>(&target)) {
        double d = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double diff = x[k] - p->y[k];
            d += diff * diff;
            grad[k] = 2.0 * diff;
        }
        return d;
    }
    const auto& b = std::get<BoundaryTarget>(target);
    const double r = dyn.norm(x);
    dyn.norm_gradient(x, grad);
    const double gap = r - b.radius;
    for (std::size_t k = 0; k < n; ++k) grad[k] *= 2.0 * gap;
    double d = gap * gap;
    if (b.region) {
        const auto m = b.region->mode - 1;
        const double v = x[m];
        const double a = b.region->absolute ? std::abs(v) : v;
        double viol = 0.0;
        if (a < b.region->lower) viol = a - b.region->lower;
        else if (a > b.region->upper) viol = a - b.region->upper;
        d += viol * viol;
        const double da = b.region->absolute ? (v >= 0.0 ? 1.0 : -1.0) : 1.0;
        grad[m] += 2.0 * viol * da;
    }
    return d;
}

double target_scale(const TargetSpec& target) {
    if (const auto* p = std::get_if<PointTarget>(&target)) return p->y.l2_norm();
    return std::get<BoundaryTarget>(target).radius;
}

void check_target(const ModelSpec& spec, const TargetSpec& target) {
    if (const auto* p = std::get_if<PointTarget>(&target)) {
        if (p->y.size() != spec.mode_count) throw std::invalid_argument("target: point has the wrong number of modes");
        if (!p->y.is_finite()) throw std::invalid_argument("target: point must be finite");
        return;
    }
    const auto& b = std::get<BoundaryTarget>(target);
    if (!(b.radius > 0.0)) throw std::invalid_argument("target: boundary radius must be positive");
    if (b.region) {
        if (b.region->mode == 0 || b.region->mode > spec.mode_count)
            throw std::invalid_argument("target: region mode out of range");
        if (b.region->lower > b.region->upper) throw std::invalid_argument("target: empty region");
    }
}

double dot_l2(std::span<const double> a, std::span<const double> b, double dt) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return dt * s;
}

struct Evaluator {
    Evaluator(const ModelSpec& spec, const TargetSpec& target, std::size_t steps, double dt)
        : spec(spec), target(target), sys(spec, dt), states((steps + 1) * spec.mode_count, 0.0),
          terminal(spec.mode_count) {}

    /// Returns J; fills the L2 gradient when requested.
    double operator()(const ControlPath& psi, double penalty, std::vector<double>* l2_grad) {
        const auto n = spec.mode_count;
        sys.forward(psi, states);
        std::span<const double> xT{states.data() + psi.steps() * n, n};
        const double d = target_distance(sys.dynamics(), target, xT, terminal);
        last_distance = d;
        const double j = action_value(psi) + penalty * d;
        if (l2_grad) {
            l2_grad->assign(psi.values().size(), 0.0);
            for (auto& t : terminal) t *= penalty;
            sys.backward(psi, states, terminal, *l2_grad);
            const double inv_dt = 1.0 / psi.dt();
            const auto v = psi.values();
            for (std::size_t i = 0; i < v.size(); ++i) (*l2_grad)[i] = v[i] + inv_dt * (*l2_grad)[i];
        }
        return j;
    }

    SpectralField terminal_state(std::size_t steps) const {
        const auto n = spec.mode_count;
        return SpectralField(std::vector<double>(states.begin() + static_cast<std::ptrdiff_t>(steps * n),
                                                 states.begin() + static_cast<std::ptrdiff_t>((steps + 1) * n)));
    }

    const ModelSpec& spec;
    const TargetSpec& target;
    ControlledSystem sys;
    std::vector<double> states;
    std::vector<double> terminal;
    double last_distance = 0.0;
};

QuasipotentialResult minimize_from(const ModelSpec& spec, const TargetSpec& target, ControlPath psi,
                                   const MinimizeOptions& opts) {
    const double scale = target_scale(target);
    const double tol = opts.residual_tol * scale;
    const double dt = psi.dt();
    Evaluator eval(spec, target, psi.steps(), dt);

    QuasipotentialResult res;
    double penalty = opts.initial_penalty / (scale * scale);
    double alpha = 1.0;
    std::vector<double> g, g_trial;
    ControlPath trial = psi;
    std::size_t total = 0;

    while (true) {
        double j = eval(psi, penalty, &g);
        std::deque<double> history{j};
        for (std::size_t it = 0; it < opts.max_stage_iterations && total < opts.max_iterations; ++it, ++total) {
            const double gn2 = dot_l2(g, g, dt);
            const double psi_n = std::sqrt(dot_l2(psi.values(), psi.values(), dt));
            if (std::sqrt(gn2) <= opts.grad_tol * std::max(1.0, psi_n)) break;
            const double ref = *std::max_element(history.begin(), history.end());
            bool accepted = false;
            double j_trial = 0.0;
            for (int back = 0; back < 60; ++back) {
                auto tv = trial.values();
                const auto pv = psi.values();
                for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = pv[i] - alpha * g[i];
                j_trial = eval(trial, penalty, &g_trial);
                if (std::isfinite(j_trial) && j_trial <= ref - 1e-4 * alpha * gn2) {
                    accepted = true;
                    break;
                }
                alpha *= 0.25;
            }
            if (!accepted) break;
            // Barzilai-Borwein step from the accepted pair.
            double ss = 0.0, sy = 0.0;
            const auto pv = psi.values();
            const auto tv = trial.values();
            for (std::size_t i = 0; i < tv.size(); ++i) {
                const double s = tv[i] - pv[i];
                ss += s * s;
                sy += s * (g_trial[i] - g[i]);
            }
            alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : std::min(alpha * 4.0, 1e12);
            std::swap(psi, trial);
            std::swap(g, g_trial);
            j = j_trial;
            history.push_back(j);
            if (history.size() > 10) history.pop_front();
        }
        eval(psi, penalty, nullptr);
        const double residual = std::sqrt(eval.last_distance);
        res.target_residual = residual;
        res.penalty = penalty;
        if (residual <= tol) {
            res.converged = true;
            break;
        }
        if (penalty * 2.0 > opts.max_penalty || total >= opts.max_iterations) break;
        penalty *= 2.0;
    }
    res.iterations = total;
    res.terminal_state = eval.terminal_state(psi.steps());
    res.value = action_value(psi);
    res.control = std::move(psi);
    return res;
}

}  // namespace

Trajectory controlled_trajectory(const ModelSpec& spec, const SpectralField& x0, const ControlPath& psi) {
    if (x0.size() != spec.mode_count || psi.modes() != spec.mode_count)
        throw std::invalid_argument("controlled_trajectory: size mismatch");
    const auto n = spec.mode_count;
    ControlledSystem sys(spec, psi.dt());
    std::vector<double> states((psi.steps() + 1) * n);
    std::copy(x0.coeffs().begin(), x0.coeffs().end(), states.begin());
    sys.forward(psi, states);
    Trajectory traj;
    traj.times.reserve(psi.steps() + 1);
    traj.states.reserve(psi.steps() + 1);
    for (std::size_t i = 0; i <= psi.steps(); ++i) {
        traj.times.push_back(psi.time(i));
        traj.states.emplace_back(std::vector<double>(states.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                     states.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
    }
    return traj;
}

ControlPath control_of_path(const ModelSpec& spec, const Trajectory& phi) {
    if (!spec.is_additive()) throw std::domain_error("rate_function_of_path: additive noise only");
    for (double q : spec.q_weights)
        if (q == 0.0) throw std::domain_error("rate_function_of_path: Q is singular, the control is undefined");
    if (phi.states.size() < 2 || phi.times.size() != phi.states.size())
        throw std::invalid_argument("rate_function_of_path: need at least two samples");
    const double dt = phi.times[1] - phi.times[0];
    if (!(dt > 0.0)) throw std::invalid_argument("rate_function_of_path: times must increase");
    for (std::size_t i = 1; i < phi.times.size(); ++i)
        if (std::abs((phi.times[i] - phi.times[i - 1]) - dt) > 1e-9 * std::max(1.0, phi.times[i]))
            throw std::invalid_argument("rate_function_of_path: times must be uniformly spaced");

    const auto n = spec.mode_count;
    const auto steps = phi.states.size() - 1;
    ControlPath psi(steps, n, dt);
    Dynamics dyn(spec);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < steps; ++i) {
        const auto& x = phi.states[i];
        const auto& y = phi.states[i + 1];
        if (x.size() != n || y.size() != n) throw std::invalid_argument("rate_function_of_path: size mismatch");
        dyn.drift(x.coeffs(), f);
        auto out = psi.at(i);
        for (std::size_t k = 0; k < n; ++k) {
            const double mu = spec.eigenvalues[k];
            const double residual = y[k] - std::exp(mu * dt) * (x[k] + dt * f[k]);
            out[k] = residual / (phi1(mu, dt) * spec.q_weights[k]);
        }
    }
    return psi;
}

double rate_function_of_path(const ModelSpec& spec, const Trajectory& phi) {
    return action_value(control_of_path(spec, phi));
}

namespace {
double effective_rate(const ModelSpec& spec, std::size_t k) {
    double rate = -spec.eigenvalues[k];
    if (const auto* d = std::get_if<LinearDamping>(&spec.f_kind)) rate += d->lambda;
    return rate;
}

void require_linear_additive(const ModelSpec& spec) {
    if (std::holds_alternative<CubicDrift>(spec.f_kind) || !spec.is_additive())
        throw std::invalid_argument("quasipotential_linear: needs a linear drift and additive noise");
}
}  // namespace

double quasipotential_linear(const ModelSpec& spec, const SpectralField& y) {
    require_linear_additive(spec);
    if (y.size() != spec.mode_count) throw std::invalid_argument("quasipotential_linear: size mismatch");
    double v = 0.0;
    for (std::size_t k = 0; k < spec.mode_count; ++k) {
        if (y[k] == 0.0) continue;
        const double q = spec.q_weights[k];
        if (q == 0.0) return std::numeric_limits<double>::infinity();
        v += effective_rate(spec, k) * y[k] * y[k] / (q * q);
    }
    return v;
}

double quasipotential_linear_boundary(const ModelSpec& spec, double radius) {
    require_linear_additive(spec);
    // Infinite-horizon Gramian diag(q_k^2 / (2 rate_k)); over a half-space {<l, x> >= R} the minimum is
    // R^2 / (2 l^T Gamma l) and the complement of the ball is a union of such half-spaces.
    std::vector<double> gamma(spec.mode_count);
    for (std::size_t k = 0; k < spec.mode_count; ++k) {
        const double q = spec.q_weights[k];
        gamma[k] = q * q / (2.0 * effective_rate(spec, k));
    }
    double spread = 0.0;
    if (spec.is_sup_grid()) {
        const auto& grid = collocation_for(spec);
        for (std::size_t j = 0; j < grid.points(); ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < spec.mode_count; ++k) v += grid.basis(j, k) * grid.basis(j, k) * gamma[k];
            spread = std::max(spread, v);
        }
    } else {
        for (double g : gamma) spread = std::max(spread, g);
    }
    if (spread == 0.0) return std::numeric_limits<double>::infinity();
    return radius * radius / (2.0 * spread);
}

bool RegionConstraint::contains(const SpectralField& x) const noexcept {
    if (mode == 0 || mode > x.size()) return false;
    const double v = absolute ? std::abs(x[mode - 1]) : x[mode - 1];
    return v >= lower && v <= upper;
}

double penalized_objective(const ModelSpec& spec, const TargetSpec& target, double penalty, const ControlPath& psi,
                           std::vector<double>* gradient) {
    check_target(spec, target);
    Evaluator eval(spec, target, psi.steps(), psi.dt());
    const double j = eval(psi, penalty, gradient);
    if (gradient)
        for (auto& g : *gradient) g *= psi.dt();
    return j;
}

QuasipotentialResult quasipotential_minimize(const ModelSpec& spec, const TargetSpec& target, double horizon,
                                             double dt, const std::optional<ControlPath>& init,
                                             const MinimizeOptions& opts) {
    check_target(spec, target);
    if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon)
        throw std::invalid_argument("quasipotential_minimize: need 0 < dt <= T");
    const auto n = spec.mode_count;
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    if (steps == 0) throw std::invalid_argument("quasipotential_minimize: horizon shorter than one step");

    if (init) {
        if (init->modes() != n) throw std::invalid_argument("quasipotential_minimize: init has the wrong modes");
        return minimize_from(spec, target, *init, opts);
    }

    if (const auto* p = std::get_if<PointTarget>(&target); p && p->y.l2_norm() == 0.0) {
        QuasipotentialResult res;
        res.control = ControlPath(steps, n, dt);
        res.terminal_state = SpectralField(n);
        res.converged = true;
        return res;
    }

    std::vector<ControlPath> starts;
    if (std::holds_alternative<PointTarget>(target)) {
        starts.emplace_back(steps, n, dt);
    } else {
        const double radius = std::get<BoundaryTarget>(target).radius;
        const std::size_t directions = std::min<std::size_t>(n, 3);
        for (std::size_t k = 0; k < directions; ++k) {
            const double q = spec.q_weights[k];
            if (q == 0.0) continue;
            ControlPath psi(steps, n, dt);
            // Constant push whose linear response settles at half the radius along e_k, plus a tenth of
            // that in the other modes so that no start sits on a symmetry saddle.
            for (std::size_t m = 0; m < n; ++m) {
                const double qm = spec.q_weights[m];
                if (qm == 0.0) continue;
                const double amplitude = 0.5 * radius * (-spec.eigenvalues[m]) / qm * (m == k ? 1.0 : 0.1);
                for (std::size_t i = 0; i < steps; ++i) psi.at(i)[m] = amplitude;
            }
            starts.push_back(std::move(psi));
        }
        if (starts.empty()) throw std::invalid_argument("quasipotential_minimize: no controllable mode");
    }

    std::vector<QuasipotentialResult> results(starts.size());
    parallel_for(starts.size(), opts.threads,
                 [&](std::size_t i) { results[i] = minimize_from(spec, target, std::move(starts[i]), opts); });

    auto better = [](const QuasipotentialResult& a, const QuasipotentialResult& b) {
        if (a.converged != b.converged) return a.converged;
        if (a.converged) return a.value < b.value;
        return a.target_residual < b.target_residual;
    };
    auto best = std::min_element(results.begin(), results.end(), better);
    QuasipotentialResult out = std::move(*best);
    out.starts = results.size();
    return out;
}

void to_json(json& j, const QuasipotentialResult& r) {
    j = json{{"value", r.value},
             {"target_residual", r.target_residual},
             {"iterations", r.iterations},
             {"converged", r.converged},
             {"penalty", r.penalty},
             {"starts", r.starts},
             {"horizon", r.control.horizon()},
             {"dt", r.control.dt()},
             {"terminal_state", r.terminal_state.vec()}};
}

}  // namespace ldp
