#pragma once

// Reference computations that share no code with the library.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Mean exit time from (-R, R) of dX = -omega X dt + sqrt(eps) sigma dW started at 0:
/// u(0) = (1/D) int_0^R int_0^y exp((omega / (2D)) (y^2 - z^2)) dz dy, D = eps sigma^2 / 2.
inline double ou_mean_exit_time(double eps, double omega = 1.0, double sigma = 1.0, double radius = 1.0) {
    const double d = 0.5 * eps * sigma * sigma;
    const double a = omega / (2.0 * d);
    auto inner = [&](double y) {
        return simpson([&](double z) { return std::exp(a * (y * y - z * z)); }, 0.0, y, 400);
    };
    return simpson(inner, 0.0, radius, 400) / d;
}

/// Orthonormal sine basis on [0, pi].
inline double sine_basis(std::size_t k, double xi) {
    return std::sqrt(2.0 / std::numbers::pi) * std::sin(static_cast<double>(k) * xi);
}

/// <g, e_m> by the midpoint rule with many cells, g given pointwise.
inline std::vector<double> project(const std::function<double(double)>& g, std::size_t modes, int cells = 20000) {
    std::vector<double> out(modes, 0.0);
    const double h = std::numbers::pi / cells;
    for (int i = 0; i < cells; ++i) {
        const double xi = (i + 0.5) * h;
        const double v = g(xi);
        for (std::size_t m = 0; m < modes; ++m) out[m] += v * sine_basis(m + 1, xi) * h;
    }
    return out;
}

inline double field_value(const std::vector<double>& c, double xi) {
    double v = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) v += c[k] * sine_basis(k + 1, xi);
    return v;
}

/// Minimal action of the discrete diagonal linear system
///   X_{i+1} = e^{mu dt} X_i + ((1 - e^{mu dt}) / (-mu)) q psi_i,  action = dt/2 sum psi_i^2,
/// steering 0 to y in n steps: sum_k y_k^2 dt / (2 sum_i g_{k,i}^2) with g_{k,i} the response of step i.
inline double discrete_min_action(const std::vector<double>& mu, const std::vector<double>& q,
                                  const std::vector<double>& y, double dt, std::size_t n) {
    double v = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double decay = std::exp(mu[k] * dt);
        const double input = (1.0 - decay) / (-mu[k]) * q[k];
        double energy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = std::pow(decay, static_cast<double>(n - 1 - i)) * input;
            energy += g * g;
        }
        v += y[k] * y[k] * dt / (2.0 * energy);
    }
    return v;
}

/// Central finite difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

/// Brute-force max over s >= 0 of -s^3/2 + 3 s^2 + 3 s (Young constant of the cubic bound).
inline double cubic_young_constant() {
    double best = 0.0;
    for (int i = 0; i <= 2000000; ++i) {
        const double s = i * 1e-5;
        best = std::max(best, -0.5 * s * s * s + 3.0 * s * s + 3.0 * s);
    }
    return best;
}

}  // namespace oracle
