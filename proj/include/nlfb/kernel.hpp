#pragma once

// Radial dispersal kernels J(|x|) on R^N and the derived kernels
//   J~(r, rho) = integral of J(|x - y|) over the sphere |y| = rho, |x| = r,
//   J*(l)      = integral of J(|(l, x')|) over x' in R^{N-1},
// together with exterior masses, moments and the flux functional used by the
// free boundary law.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "nlfb/errors.hpp"
#include "nlfb/quadrature.hpp"

namespace nlfb {

/// Surface area of the unit sphere in R^k (omega_1 = 2, omega_2 = 2 pi, omega_3 = 4 pi).
inline double sphere_area(int k)
{
    return 2.0 * std::pow(std::numbers::pi, 0.5 * k) / std::tgamma(0.5 * k);
}

inline double beta_function(double a, double b)
{
    return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

enum class KernelKind { compact, fat_tail };

class RadialKernel {
public:
    using Profile = std::function<double(double)>;

    /// Uniform density on the ball of the given radius (the "disc" kernel for N = 2).
    static RadialKernel uniform(int dim, double radius = 1.0)
    {
        check_dim(dim);
        if (!(radius > 0.0)) {
            throw ModelInputError("uniform kernel: radius must be positive");
        }
        const double value = 1.0 / (sphere_area(dim) / dim * std::pow(radius, dim));
        RadialKernel k(dim, KernelKind::compact, radius, [value](double) { return value; });
        k.name_ = "uniform";
        return k;
    }

    /// J(r) = C (1 + (r/scale)^2)^(-beta/2), normalized to unit mass; requires beta > N.
    static RadialKernel fat_tail(int dim, double beta, double scale = 1.0)
    {
        check_dim(dim);
        if (!(beta > dim)) {
            throw ModelInputError("fat-tail kernel: beta must exceed N for a normalizable kernel");
        }
        if (!(scale > 0.0)) {
            throw ModelInputError("fat-tail kernel: scale must be positive");
        }
        const double mass = sphere_area(dim) * std::pow(scale, dim) * 0.5 *
                            beta_function(0.5 * dim, 0.5 * (beta - dim));
        const double c = 1.0 / mass;
        RadialKernel k(dim, KernelKind::fat_tail, std::numeric_limits<double>::infinity(),
                       [c, beta, scale](double r) {
                           const double q = r / scale;
                           return c * std::pow(1.0 + q * q, -0.5 * beta);
                       });
        k.name_ = "fat_tail";
        k.beta_ = beta;
        k.scale_ = scale;
        k.tail_amplitude_ = c * std::pow(scale, beta);
        return k;
    }

    /// Arbitrary compactly supported profile; not rescaled (see normalized()).
    static RadialKernel compact(int dim, double support, Profile profile, std::string name = "custom")
    {
        check_dim(dim);
        if (!(support > 0.0) || !std::isfinite(support)) {
            throw ModelInputError("compact kernel: support radius must be positive and finite");
        }
        RadialKernel k(dim, KernelKind::compact, support, std::move(profile));
        k.name_ = std::move(name);
        return k;
    }

    double operator()(double r) const
    {
        if (r > support_) {
            return 0.0;
        }
        return factor_ * profile_(r);
    }

    int dim() const { return dim_; }
    KernelKind kind() const { return kind_; }
    bool is_compact() const { return kind_ == KernelKind::compact; }
    double support_radius() const { return support_; }
    double beta() const { return beta_; }
    /// Length over which the profile varies appreciably.
    double length_scale() const { return is_compact() ? support_ : scale_; }
    /// C with J(r) ~ C r^(-beta) as r -> infinity (fat tails only).
    double tail_amplitude() const { return tail_amplitude_; }
    const std::string& name() const { return name_; }

    /// Mass omega_N * int_0^inf J(r) r^(N-1) dr.
    double mass() const;

    /// Copy with the profile multiplied by a constant.
    RadialKernel scaled(double factor) const
    {
        RadialKernel k = *this;
        k.factor_ *= factor;
        k.tail_amplitude_ *= factor;
        return k;
    }

    RadialKernel normalized() const { return scaled(1.0 / mass()); }

    /// FNV-1a over the kernel identity and a sample of the profile.
    std::uint64_t hash() const
    {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const void* data, std::size_t n) {
            const auto* bytes = static_cast<const unsigned char*>(data);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        };
        mix(name_.data(), name_.size());
        mix(&dim_, sizeof dim_);
        const int kind = static_cast<int>(kind_);
        mix(&kind, sizeof kind);
        const double reach = is_compact() ? support_ : 8.0 * scale_;
        for (int i = 0; i <= 64; ++i) {
            const double v = (*this)(reach * i / 64.0);
            mix(&v, sizeof v);
        }
        mix(&beta_, sizeof beta_);
        return h;
    }

private:
    RadialKernel(int dim, KernelKind kind, double support, Profile profile)
        : dim_(dim), kind_(kind), support_(support), profile_(std::move(profile))
    {
    }

    static void check_dim(int dim)
    {
        if (dim < 2) {
            throw ModelInputError("kernel: dimension N must be >= 2");
        }
    }

    int dim_;
    KernelKind kind_;
    double support_;
    Profile profile_;
    std::string name_;
    double factor_ = 1.0;
    double beta_ = 0.0;
    double scale_ = 1.0;
    double tail_amplitude_ = 0.0;
};

/// int_from^inf J(r) r^p dr. Throws DivergentMomentError when the tail is not integrable.
inline double kernel_moment(const RadialKernel& k, double p, double from = 0.0)
{
    auto integrand = [&](double r) { return k(r) * std::pow(r, p); };
    if (k.is_compact()) {
        const double top = k.support_radius();
        if (from >= top) {
            return 0.0;
        }
        return quad::integrate(integrand, from, top, 64);
    }
    const double power = k.beta() - p;
    if (power <= 1.0) {
        throw DivergentMomentError("kernel moment of order " + std::to_string(p) +
                                   " diverges for beta = " + std::to_string(k.beta()));
    }
    return quad::integrate_to_infinity(integrand, from, std::max(from, k.length_scale()),
                                       k.tail_amplitude(), power);
}

inline double RadialKernel::mass() const
{
    return sphere_area(dim_) * kernel_moment(*this, dim_ - 1.0);
}

/// Mass of the kernel outside the ball of radius R: omega_N int_R^inf J(r) r^(N-1) dr.
inline double mass_beyond(const RadialKernel& k, double radius)
{
    return sphere_area(k.dim()) * kernel_moment(k, k.dim() - 1.0, std::max(radius, 0.0));
}

/// Does (J1), int_0^inf J(r) r^N dr < inf, hold?
inline bool satisfies_j1(const RadialKernel& k)
{
    return k.is_compact() || k.beta() > k.dim() + 1.0;
}

// ---------------------------------------------------------------------------
// J*

/// J*(l) = omega_{N-1} int_0^inf J(sqrt(l^2 + s^2)) s^(N-2) ds.
inline double j_star(const RadialKernel& k, double l)
{
    l = std::abs(l);
    const int n = k.dim();
    const double omega = sphere_area(n - 1);
    auto integrand = [&](double s) { return k(std::sqrt(l * l + s * s)) * std::pow(s, n - 2); };
    if (k.is_compact()) {
        const double kr = k.support_radius();
        if (l >= kr) {
            return 0.0;
        }
        return omega * quad::integrate(integrand, 0.0, std::sqrt(kr * kr - l * l), 64);
    }
    const double power = k.beta() + 2.0 - n;
    return omega * quad::integrate_to_infinity(integrand, 0.0, std::max(l, k.length_scale()),
                                               k.tail_amplitude(), power);
}

/// Leading coefficient A of J*(l) ~ A l^(N-1-beta) for fat tails.
inline double j_star_tail_amplitude(const RadialKernel& k)
{
    const int n = k.dim();
    return sphere_area(n - 1) * k.tail_amplitude() * 0.5 *
           beta_function(0.5 * (n - 1), 0.5 * (k.beta() - n + 1));
}

// ---------------------------------------------------------------------------
// J~

struct QuadOptions {
    int order = 64;
    /// Double the order until consecutive results agree to rel_tol (up to max_order).
    bool adaptive = true;
    double rel_tol = 1e-9;
    int max_order = 512;
};

namespace detail {

/// theta at which |x - y| = eta on the sphere, clamped to [0, pi].
inline double angle_at_distance(double r, double rho, double eta)
{
    const double s2 = (eta * eta - (rho - r) * (rho - r)) / (4.0 * r * rho);
    if (s2 <= 0.0) {
        return 0.0;
    }
    if (s2 >= 1.0) {
        return std::numbers::pi;
    }
    return 2.0 * std::asin(std::sqrt(s2));
}

/// Panel breakpoints for the angular integral over [lo, hi].
inline std::vector<double> angular_breaks(const RadialKernel& k, double r, double rho, double lo,
                                          double hi)
{
    std::vector<double> breaks{lo};
    if (!k.is_compact()) {
        const double first = k.length_scale() / std::sqrt(r * rho);
        for (double b = first; b < hi; b *= 2.0) {
            if (b > lo) {
                breaks.push_back(b);
            }
        }
    }
    breaks.push_back(hi);
    return breaks;
}

template <class F>
double integrate_breaks(F&& f, const std::vector<double>& breaks, int order)
{
    return quad::integrate_panels(f, std::span<const double>(breaks), order);
}

template <class F>
double integrate_adaptive(F&& f, const std::vector<double>& breaks, const QuadOptions& opt)
{
    if (!opt.adaptive) {
        return integrate_breaks(f, breaks, opt.order);
    }
    int order = std::max(2, opt.order / 2);
    double prev = integrate_breaks(f, breaks, order);
    while (true) {
        order *= 2;
        const double next = integrate_breaks(f, breaks, order);
        if (std::abs(next - prev) <= opt.rel_tol * std::max(std::abs(next), 1e-300) ||
            order >= opt.max_order) {
            return next;
        }
        prev = next;
    }
}

/// omega_{N-1} rho^{N-1} int_{lo}^{hi} sin^{N-2}(theta) J(dist(theta)) dtheta
inline double angular_integral(const RadialKernel& k, double r, double rho, double lo, double hi,
                               const QuadOptions& opt)
{
    const int n = k.dim();
    if (k.is_compact()) {
        const double kr = k.support_radius();
        if (std::abs(rho - r) >= kr) {
            return 0.0;
        }
        hi = std::min(hi, angle_at_distance(r, rho, kr));
        if (hi <= lo) {
            return 0.0;
        }
    }
    const double diff2 = (rho - r) * (rho - r);
    auto integrand = [&](double theta) {
        const double s = std::sin(0.5 * theta);
        const double dist = std::sqrt(diff2 + 4.0 * r * rho * s * s);
        return std::pow(std::sin(theta), n - 2) * k(dist);
    };
    const auto breaks = angular_breaks(k, r, rho, lo, hi);
    return sphere_area(n - 1) * std::pow(rho, n - 1) * integrate_adaptive(integrand, breaks, opt);
}

} // namespace detail

/// J~(r, rho) via the angular representation.
inline double j_tilde(const RadialKernel& k, double r, double rho, const QuadOptions& opt = {})
{
    if (rho <= 0.0) {
        return 0.0;
    }
    if (r <= 0.0) {
        return sphere_area(k.dim()) * std::pow(rho, k.dim() - 1) * k(rho);
    }
    return detail::angular_integral(k, r, rho, 0.0, std::numbers::pi, opt);
}

struct SplitJTilde {
    double plus;  ///< near hemisphere, y.x >= 0
    double minus; ///< far hemisphere, y.x <= 0
};

inline SplitJTilde j_tilde_split(const RadialKernel& k, double r, double rho,
                                 const QuadOptions& opt = {})
{
    if (!(r > 0.0)) {
        throw ModelInputError("j_tilde_split: undefined at r = 0");
    }
    if (!(rho > 0.0)) {
        return {0.0, 0.0};
    }
    const double half = 0.5 * std::numbers::pi;
    return {detail::angular_integral(k, r, rho, 0.0, half, opt),
            detail::angular_integral(k, r, rho, half, std::numbers::pi, opt)};
}

// ---------------------------------------------------------------------------
// Exterior mass and flux

/// Fraction of the unit sphere in R^N with cos(angle to a fixed axis) > c.
inline double sphere_cap_fraction(int dim, double c)
{
    if (c <= -1.0) {
        return 1.0;
    }
    if (c >= 1.0) {
        return 0.0;
    }
    if (dim == 2) {
        return std::acos(c) / std::numbers::pi;
    }
    if (dim == 3) {
        return 0.5 * (1.0 - c);
    }
    const double whole = std::sqrt(std::numbers::pi) * std::tgamma(0.5 * (dim - 1)) /
                         std::tgamma(0.5 * dim);
    const double part = quad::integrate_cosine_mapped(
        [dim](double psi) { return std::pow(std::sin(psi), dim - 2); }, 0.0, std::acos(c), 32);
    return part / whole;
}

/// T(r, h) = int_{|y| > h} J(|x - y|) dy with |x| = r, which equals
/// 1 - int_0^h J~(r, rho) drho for a unit-mass kernel.
inline double exterior_mass(const RadialKernel& k, double r, double h)
{
    const int n = k.dim();
    h = std::max(h, 0.0);
    r = std::max(r, 0.0);
    if (r == 0.0) {
        return mass_beyond(k, h);
    }
    const double omega = sphere_area(n);
    const double lo = std::abs(h - r);
    double hi = h + r;
    const double reach = k.support_radius();
    // sphere of radius eta about x: fraction outside B_h
    auto outside = [&](double eta) {
        const double c = (h * h - r * r - eta * eta) / (2.0 * r * eta);
        return sphere_cap_fraction(n, c);
    };
    double partial = 0.0;
    const double top = std::min(hi, reach);
    if (top > lo) {
        std::vector<double> breaks{lo};
        if (!k.is_compact()) {
            const double width = std::max(k.length_scale(), lo);
            for (double b = lo + width; b < top; b = lo + 2.0 * (b - lo)) {
                breaks.push_back(b);
            }
        }
        breaks.push_back(top);
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
            partial += quad::integrate_cosine_mapped(
                [&](double eta) {
                    const double frac = r < h ? outside(eta) : 1.0 - outside(eta);
                    return std::pow(eta, n - 1) * k(eta) * frac;
                },
                breaks[i], breaks[i + 1], 64);
        }
        partial *= omega;
    }
    const double far = mass_beyond(k, hi);
    if (r < h) {
        return std::clamp(partial + far, 0.0, 1.0);
    }
    // x outside the ball: everything except the part of B_h
    return std::clamp(1.0 - partial, 0.0, 1.0);
}

/// F(h) = int_0^h int_h^inf J~(r, rho) drho dr = int_0^h T(r, h) dr.
inline double boundary_flux(const RadialKernel& k, double h)
{
    if (h <= 0.0) {
        return 0.0;
    }
    auto integrand = [&](double r) { return exterior_mass(k, r, h); };
    if (k.is_compact()) {
        return quad::integrate(integrand, std::max(0.0, h - k.support_radius()), h, 64);
    }
    // panels refine toward r = h
    double sum = 0.0;
    double width = std::min(k.length_scale(), h);
    double near = h;
    while (near > 0.0) {
        const double far = std::max(0.0, near - width);
        sum += quad::integrate(integrand, far, near, 24);
        near = far;
        width *= 2.0;
    }
    return sum;
}

struct FluxSample {
    double h;
    double flux;
};

inline std::vector<FluxSample> flux_limit_check(const RadialKernel& k, const std::vector<double>& hs)
{
    std::vector<FluxSample> out;
    out.reserve(hs.size());
    for (double h : hs) {
        out.push_back({h, boundary_flux(k, h)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validation and identities

struct ValidationReport {
    double normalization = 0.0;
    double j_at_zero = 0.0;
    double min_sampled = 0.0;
    bool nonnegative = false;
    /// int_0^inf J(r) r^N dr; +inf when (J1) fails.
    double moment_n = 0.0;
    bool moment_n_finite = false;
    bool accepted = false;
    std::vector<std::string> problems;
};

inline constexpr double kTolNorm = 1e-6;

inline ValidationReport validate_kernel(const RadialKernel& k, double tol_norm = kTolNorm)
{
    ValidationReport rep;
    rep.j_at_zero = k(0.0);
    const double horizon = k.is_compact() ? k.support_radius() : 64.0 * k.length_scale();
    rep.min_sampled = std::numeric_limits<double>::infinity();
    constexpr int kSamples = 4096;
    for (int i = 0; i <= kSamples; ++i) {
        rep.min_sampled = std::min(rep.min_sampled, k(horizon * i / kSamples));
    }
    // quadrature nodes as well, so narrow negative dips between samples are caught
    const auto& rule = quad::gauss_legendre(64);
    for (double x : rule.nodes) {
        rep.min_sampled = std::min(rep.min_sampled, k(0.5 * horizon * (1.0 + x)));
    }
    rep.nonnegative = rep.min_sampled >= 0.0;
    if (!rep.nonnegative) {
        rep.problems.emplace_back("kernel takes negative values (min " +
                                  std::to_string(rep.min_sampled) + ")");
    }
    if (!(rep.j_at_zero > 0.0)) {
        rep.problems.emplace_back("J(0) must be positive");
    }
    rep.normalization = k.mass();
    if (!(std::abs(rep.normalization - 1.0) <= tol_norm)) {
        rep.problems.emplace_back("normalization " + std::to_string(rep.normalization) +
                                  " differs from 1");
    }
    rep.moment_n_finite = satisfies_j1(k);
    rep.moment_n = rep.moment_n_finite ? kernel_moment(k, k.dim())
                                       : std::numeric_limits<double>::infinity();
    rep.accepted = rep.problems.empty();
    return rep;
}

/// Throws ModelInputError listing every failed check.
inline void require_valid(const RadialKernel& k)
{
    const auto rep = validate_kernel(k);
    if (!rep.accepted) {
        std::string msg = "invalid kernel '" + k.name() + "':";
        for (const auto& p : rep.problems) {
            msg += " " + p + ";";
        }
        throw ModelInputError(msg);
    }
}

struct MomentIdentity {
    double lhs; ///< int_0^inf l J*(l) dl
    double rhs; ///< omega_{N-1}/(N-1) int_0^inf J(r) r^N dr
    double rel_err;
};

inline MomentIdentity moment_identity_check(const RadialKernel& k)
{
    if (!satisfies_j1(k)) {
        throw DivergentMomentError("(J1) fails: int J(r) r^N dr diverges for beta <= N+1");
    }
    const int n = k.dim();
    const double rhs = sphere_area(n - 1) / (n - 1) * kernel_moment(k, n);
    double lhs = 0.0;
    if (k.is_compact()) {
        // l = K sin(phi) smooths the (K - l)^{(N-1)/2} edge of J*
        const double kr = k.support_radius();
        lhs = quad::integrate(
            [&](double phi) {
                const double l = kr * std::sin(phi);
                return l * j_star(k, l) * kr * std::cos(phi);
            },
            0.0, 0.5 * std::numbers::pi, 64);
    } else {
        lhs = quad::integrate_to_infinity([&](double l) { return l * j_star(k, l); }, 0.0,
                                          k.length_scale(), j_star_tail_amplitude(k),
                                          k.beta() - n, 24, 40);
    }
    return {lhs, rhs, std::abs(lhs - rhs) / std::abs(rhs)};
}

} // namespace nlfb
