#pragma once

// Smooth Sparse Unit: phi(x; alpha) = alpha*f(x) / (alpha*f(x) + f(1-x))
// with f(x) = exp(-1/x) for x > 0 and 0 otherwise. phi pins values to exact
// 0 for x <= 0 and exact 1 for x >= 1, and its backward is redefined to 1 on
// (0, sup) and (inf, 1) to counter vanishing gradients near the pins.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "bgslf/tensor.hpp"

namespace bgslf {

// f(x) = e^(-1/x) for x > 0, else 0. Guard below 1e-12 where the value
// underflows and 1/x would blow up.
inline double f_bump(double x) {
    if (x < 1e-12) return 0.0;
    return std::exp(-1.0 / x);
}

inline double ssu_phi(double x, double alpha) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double num = alpha * f_bump(x);
    const double den = num + f_bump(1.0 - x);
    if (den == 0.0) return 0.0;  // unreachable for x in (0,1), kept total
    return num / den;
}

// Analytic derivative of phi on (0,1):
//   phi' = alpha*u*v*(1/x^2 + 1/(1-x)^2) / (alpha*u + v)^2,
// with u = f(x), v = f(1-x).
inline double ssu_phi_deriv(double x, double alpha) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    const double u = f_bump(x);
    const double v = f_bump(1.0 - x);
    const double den = alpha * u + v;
    if (den == 0.0) return 0.0;
    const double omx = 1.0 - x;
    return alpha * u * v * (1.0 / (x * x) + 1.0 / (omx * omx)) / (den * den);
}

// g(x) = f(1-x)/f(x) = e^(1/x - 1/(1-x)), strictly decreasing on (0,1)
inline double ssu_g(double x) { return std::exp(1.0 / x - 1.0 / (1.0 - x)); }

// Solve g(x) = target on (0,1) by bisection (g strictly decreasing).
inline double ssu_g_inverse(double target, double tol = 1e-12) {
    if (!(target > 0.0)) throw std::invalid_argument("ssu_g_inverse: target must be positive");
    double lo = tol, hi = 1.0 - tol;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (ssu_g(mid) > target)
            lo = mid;  // g too large -> move right
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct SsuThresholds {
    double sup;
    double inf;
};

// sup = g^-1(alpha*(1/eps - 1)), inf = g^-1(alpha*(1/(1-eps) - 1)).
// phi < eps exactly on (0, sup); phi > 1-eps exactly on (inf, 1).
inline SsuThresholds ssu_thresholds(double alpha, double eps) {
    if (!(alpha > 0.0)) throw std::invalid_argument("ssu_thresholds: alpha must be positive");
    if (!(eps > 0.0 && eps <= 0.5)) throw std::invalid_argument("ssu_thresholds: eps must be in (0, 0.5]");
    SsuThresholds t;
    t.sup = ssu_g_inverse(alpha * (1.0 / eps - 1.0));
    t.inf = ssu_g_inverse(alpha * (1.0 / (1.0 - eps) - 1.0));
    return t;
}

struct SsuConfig {
    double alpha = 1.0;
    double eps = 0.05;
    double sup = 0.0;
    double inf = 0.0;

    static SsuConfig make(double alpha, double eps) {
        SsuConfig c;
        c.alpha = alpha;
        c.eps = eps;
        const SsuThresholds t = ssu_thresholds(alpha, eps);
        c.sup = t.sup;
        c.inf = t.inf;
        return c;
    }
};

// Redefined backward: exactly 1 on (0, sup) and (inf, 1), the analytic
// derivative on [sup, inf], and 0 outside (0, 1).
inline double ssu_grad(double x, double alpha, double sup, double inf) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    if (x < sup || x > inf) return 1.0;
    return ssu_phi_deriv(x, alpha);
}

// Elementwise SSU on a taped tensor, wired through custom_unary so the
// redefined backward replaces the analytic one.
inline Tensor ssu_forward(const Tensor& g, const SsuConfig& cfg) {
    const double a = cfg.alpha, sup = cfg.sup, inf = cfg.inf;
    return custom_unary(
        g, [a](double x) { return ssu_phi(x, a); }, [a, sup, inf](double x) { return ssu_grad(x, a, sup, inf); });
}

// Fraction of entries strictly below eps.
inline double sparsity_report(const Tensor& a, double eps) {
    if (a.numel() == 0) return 0.0;
    int64_t n = 0;
    for (double v : a.values())
        if (v < eps) ++n;
    return static_cast<double>(n) / static_cast<double>(a.numel());
}

}  // namespace bgslf
