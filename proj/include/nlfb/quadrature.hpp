#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace nlfb::quad {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline GaussLegendreRule build_rule(int n)
{
    GaussLegendreRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Tricomi initial guess, then Newton on P_n.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        // recompute derivative at the converged root
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    return rule;
}

} // namespace detail

/// Cached rule of the given order. References stay valid for the program lifetime.
inline const GaussLegendreRule& gauss_legendre(int order)
{
    if (order < 1) {
        throw std::invalid_argument("gauss_legendre: order must be >= 1");
    }
    static std::mutex mutex;
    static std::map<int, GaussLegendreRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(order);
    if (it == cache.end()) {
        it = cache.emplace(order, detail::build_rule(order)).first;
    }
    return it->second;
}

template <class F>
double integrate(F&& f, double a, double b, int order = 64)
{
    if (b == a) {
        return 0.0;
    }
    const auto& rule = gauss_legendre(order);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    }
    return sum * half;
}

/// Composite rule over consecutive breakpoints (must be sorted).
template <class F>
double integrate_panels(F&& f, std::span<const double> breaks, int order = 64)
{
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        sum += integrate(f, breaks[i], breaks[i + 1], order);
    }
    return sum;
}

/// Integral over [a, b] after the substitution x = a + (b-a)(1-cos t)/2, which
/// removes square-root behaviour at both endpoints.
template <class F>
double integrate_cosine_mapped(F&& f, double a, double b, int order = 64)
{
    if (b <= a) {
        return 0.0;
    }
    const double half = 0.5 * (b - a);
    return integrate(
        [&](double t) { return f(a + half * (1.0 - std::cos(t))) * half * std::sin(t); },
        0.0, std::numbers::pi, order);
}

namespace detail {
template <class F>
double adaptive_step(F& f, double a, double b, double whole, double tol, int order, int depth)
{
    const double m = 0.5 * (a + b);
    const double left = integrate_cosine_mapped(f, a, m, order);
    const double right = integrate_cosine_mapped(f, m, b, order);
    if (depth <= 0 || std::abs(left + right - whole) <= tol) {
        return left + right;
    }
    return adaptive_step(f, a, m, left, 0.5 * tol, order, depth - 1) +
           adaptive_step(f, m, b, right, 0.5 * tol, order, depth - 1);
}
} // namespace detail

/// Cosine-mapped panels bisected until halving agrees to rel_tol; locates kinks
/// that the caller does not know about.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-13, int order = 24, int depth = 40)
{
    if (b <= a) {
        return 0.0;
    }
    const double whole = integrate_cosine_mapped(f, a, b, order);
    const double tol = rel_tol * std::max(std::abs(whole), 1e-300);
    return detail::adaptive_step(f, a, b, whole, tol, order, depth);
}

/// Integral over [a, inf) for an integrand decaying like amplitude * x^(-power),
/// power > 1. Geometric panels up to a far horizon, then the analytic remainder.
template <class F>
double integrate_to_infinity(F&& f, double a, double length_scale, double amplitude, double power,
                             int order = 24, int doublings = 48)
{
    if (power <= 1.0) {
        throw std::domain_error("integrate_to_infinity: integrand tail is not integrable");
    }
    const double step = std::max(length_scale, 1e-300);
    double lo = a;
    double hi = a + step;
    double sum = 0.0;
    for (int k = 0; k < doublings; ++k) {
        sum += integrate(f, lo, hi, order);
        lo = hi;
        hi = a + (hi - a) * 2.0;
        // the remainder formula is off by a relative O((step / lo)^2)
        const double rem = amplitude * std::pow(lo, 1.0 - power) / (power - 1.0);
        const double ratio = step / lo;
        if (rem * ratio * ratio < 1e-15 * std::abs(sum)) {
            break;
        }
    }
    sum += amplitude * std::pow(lo, 1.0 - power) / (power - 1.0);
    return sum;
}

} // namespace nlfb::quad
