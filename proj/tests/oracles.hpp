#pragma once

// Test-only reference integrators, deliberately independent of nlfb::quad.

#include <cmath>
#include <algorithm>
#include <functional>
#include <numbers>

namespace oracle {

namespace detail {
inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                           double fm, double fb, double whole, double tol, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
} // namespace detail

/// Adaptive Simpson on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      double tol = 1e-12, int depth = 50)
{
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, depth);
}

/// Adaptive Simpson after x = a + (b-a)(1-cos t)/2 to tame square-root endpoints.
inline double simpson_cos(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-12)
{
    const double half = 0.5 * (b - a);
    const double pi = std::acos(-1.0);
    return simpson([&](double t) { return f(a + half * (1.0 - std::cos(t))) * half * std::sin(t); },
                   0.0, pi, tol);
}

// area of B_R(0) cut with a unit disc centred at distance c
inline double lens_area(double R, double c)
{
    if (c >= R + 1.0) {
        return 0.0;
    }
    if (c <= std::abs(R - 1.0)) {
        const double m = std::min(R, 1.0);
        return std::numbers::pi * m * m;
    }
    return R * R * std::acos((c * c + R * R - 1.0) / (2.0 * c * R)) +
           std::acos((c * c + 1.0 - R * R) / (2.0 * c)) -
           0.5 * std::sqrt((-c + R + 1.0) * (c + R - 1.0) * (c - R + 1.0) * (c + R + 1.0));
}

// volume of B_R(0) cut with a unit ball centred at distance c
inline double lens_volume(double R, double c)
{
    if (c >= R + 1.0) {
        return 0.0;
    }
    if (c <= std::abs(R - 1.0)) {
        const double m = std::min(R, 1.0);
        return 4.0 / 3.0 * std::numbers::pi * m * m * m;
    }
    return std::numbers::pi * (R + 1.0 - c) * (R + 1.0 - c) * (c * c + 2.0 * c - 3.0 + 2.0 * c * R + 6.0 * R - 3.0 * R * R) /
           (12.0 * c);
}

// mu / h^{N-1} int_0^h r^{N-1} u(r) T(r, h) dr with T from the lens geometry of
// the unit disc/ball kernel
inline double brute_force_hdot(int dim, double h, double mu, const std::function<double(double)>& u)
{
    auto T = [&](double r) {
        if (r <= 0.0) {
            return h >= 1.0 ? 0.0 : 1.0;
        }
        return dim == 2 ? 1.0 - lens_area(h, r) / std::numbers::pi : 1.0 - lens_volume(h, r) / (4.0 / 3.0 * std::numbers::pi);
    };
    // T vanishes for r <= h - 1; starting there keeps the adaptive rule from
    // sampling only zeros
    const double integral =
        simpson([&](double r) { return std::pow(r, dim - 1) * u(r) * T(r); }, std::max(0.0, h - 1.0), h, 1e-13, 40);
    return mu * integral / std::pow(h, dim - 1);
}

} // namespace oracle
