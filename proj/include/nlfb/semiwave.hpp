#pragma once

// Semi-wave pair (c, phi) for an even kernel P on the real line:
//   d int_{-inf}^0 P(x - y) phi(y) dy - d phi + c phi' + f(phi) = 0,  x < 0,
//   phi(-inf) = u^, phi(0) = 0,
//   c = mu int_{-inf}^0 phi(x) int_0^inf P(x - y) dy dx.
//
// Inner solve (fixed c): Picard iteration on the convolution term; each sweep
// integrates the first-order equation from x = 0 leftward with a theta scheme.
// Outer solve: false position on g(c) = c - c_map(c) over (0, mu u^ int_0^inf x P].

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "nlfb/errors.hpp"
#include "nlfb/kernel.hpp"
#include "nlfb/nonlinearity.hpp"
#include "nlfb/quadrature.hpp"

namespace nlfb {

/// Even, nonnegative kernel on R, described on [0, inf).
class Kernel1D {
public:
    using Fn = std::function<double(double)>;

    /// P with support [-support, support]; support may be infinite, in which case
    /// P(x) ~ tail_amplitude * x^-tail_power must be supplied (tail_power > 1).
    static Kernel1D from_function(Fn p, double support, double scale, std::string name = "custom",
                                  double tail_amplitude = 0.0, double tail_power = 0.0)
    {
        Kernel1D k;
        k.p_ = std::move(p);
        k.support_ = support;
        k.scale_ = scale;
        k.name_ = std::move(name);
        k.amp_ = tail_amplitude;
        k.power_ = tail_power;
        if (!(scale > 0.0)) {
            throw ModelInputError("kernel1d: scale must be positive");
        }
        if (!std::isfinite(support) && !(tail_power > 1.0)) {
            throw ModelInputError("kernel1d: unbounded support needs an integrable tail law");
        }
        return k;
    }

    /// P = J* of a radial kernel.
    static Kernel1D j_star_of(const RadialKernel& k)
    {
        auto shared = std::make_shared<RadialKernel>(k);
        Fn fn = [shared](double x) { return j_star(*shared, x); };
        if (k.is_compact()) {
            return from_function(fn, k.support_radius(), k.support_radius(), "J*(" + k.name() + ")");
        }
        return from_function(fn, std::numeric_limits<double>::infinity(), k.length_scale(),
                             "J*(" + k.name() + ")", j_star_tail_amplitude(k), k.beta() + 1.0 - k.dim());
    }

    /// P restricted to [-cut, cut].
    Kernel1D truncated(double cut) const
    {
        Kernel1D k = *this;
        k.support_ = std::min(support_, cut);
        k.name_ = name_ + "|" + std::to_string(cut);
        return k;
    }

    double operator()(double x) const
    {
        x = std::abs(x);
        return x > support_ ? 0.0 : p_(x);
    }

    bool compact() const { return std::isfinite(support_); }
    double support() const { return support_; }
    double scale() const { return scale_; }
    const std::string& name() const { return name_; }

    /// int_s^inf P, s >= 0.
    double tail(double s) const
    {
        s = std::max(s, 0.0);
        if (compact()) {
            return s >= support_ ? 0.0 : integrate_span(s, support_);
        }
        return quad::integrate_to_infinity(*this, s, std::max(s, scale_), amp_, power_);
    }

    double mass() const { return 2.0 * tail(0.0); }

    /// int_s^inf x P(x) dx; throws when the first moment diverges.
    double moment1(double s = 0.0) const
    {
        s = std::max(s, 0.0);
        auto xp = [this](double x) { return x * (*this)(x); };
        if (compact()) {
            if (s >= support_) {
                return 0.0;
            }
            return quad::integrate_adaptive(xp, s, support_);
        }
        if (!(power_ > 2.0)) {
            throw DivergentMomentError("kernel1d: first moment diverges (tail power " +
                                       std::to_string(power_) + " <= 2)");
        }
        return quad::integrate_to_infinity(xp, s, std::max(s, scale_), amp_, power_ - 1.0);
    }

    /// int_m^inf (x - m) P(x) dx = int_m^inf tail.
    double tail_moment(double m) const { return moment1(m) - m * tail(m); }

    bool has_first_moment() const { return compact() || power_ > 2.0; }

private:
    double integrate_span(double a, double b) const
    {
        // panels of one scale length, cosine-mapped against edge singularities
        double sum = 0.0;
        const double width = scale_;
        for (double lo = a; lo < b; lo += width) {
            sum += quad::integrate_adaptive(*this, lo, std::min(b, lo + width));
        }
        return sum;
    }

    Fn p_;
    double support_ = 0.0;
    double scale_ = 1.0;
    std::string name_;
    double amp_ = 0.0;
    double power_ = 0.0;
};

struct SemiWaveOptions {
    /// Grid step; 0 selects min(0.02, scale / 50).
    double dx = 0.0;
    /// Initial truncation length, doubled until u^ - phi(-M) < tail_tol.
    double M = 20.0;
    double M_max = 640.0;
    double tail_tol = 1e-8;
    /// Picard stopping tolerance on ||S(phi) - phi||_inf.
    double picard_tol = 1e-13;
    double damping = 0.5;
    int max_picard = 20000;
    /// Relative bracket width for c.
    double c_tol = 1e-11;
    int max_outer = 200;
};

struct SemiWaveProblem {
    Kernel1D P;
    double d = 1.0;
    double mu = 1.0;
    Nonlinearity f = Nonlinearity::logistic();
    SemiWaveOptions opt;
};

struct SemiWaveSolution {
    double c0 = 0.0;
    std::vector<double> x;
    std::vector<double> phi;
    double u_star_hat = 0.0;
    double residual_pde = 0.0;
    double residual_speed = 0.0;
    double M = 0.0;
    double dx = 0.0;
    int outer_steps = 0;
    long picard_sweeps = 0;
};

namespace detail {

/// Discretized semi-wave operator on x_i = -M + i dx, i = 0..n.
class SemiWaveGrid {
public:
    SemiWaveGrid(const SemiWaveProblem& p, double M, double dx) : p_(p), dx_(dx)
    {
        n_ = static_cast<std::size_t>(std::llround(M / dx));
        if (n_ < 4) {
            throw ModelInputError("semiwave: truncation shorter than four grid cells");
        }
        M_ = static_cast<double>(n_) * dx_;
        u_hat_ = p.f.shifted_root(p.d * (p.P.mass() - 1.0));
        build_weights();
    }

    std::size_t n() const { return n_; }
    double M() const { return M_; }
    double dx() const { return dx_; }
    double u_hat() const { return u_hat_; }
    double x(std::size_t i) const { return -M_ + static_cast<double>(i) * dx_; }

    /// int_{-inf}^0 P(x_i - y) phi(y) dy with phi piecewise linear on the grid
    /// and phi = u^ left of -M.
    void convolve(const std::vector<double>& phi, std::vector<double>& out) const
    {
        const std::size_t n = n_;
        out.assign(n + 1, 0.0);
        const auto reach = static_cast<std::ptrdiff_t>(reach_);
        for (std::size_t i = 0; i <= n; ++i) {
            const auto ii = static_cast<std::ptrdiff_t>(i);
            double acc = far_[i] * u_hat_;
            acc += half(ii) * phi[0];
            acc += half(static_cast<std::ptrdiff_t>(n) - ii) * phi[n];
            if (spectrum_.empty()) {
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(1, ii - reach);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, ii + reach);
                for (std::ptrdiff_t j = lo; j <= hi; ++j) {
                    acc += full_[static_cast<std::size_t>(std::abs(ii - j))] * phi[static_cast<std::size_t>(j)];
                }
            }
            out[i] = acc;
        }
        if (!spectrum_.empty()) {
            // interior nodes 1..n-1 through a circular convolution long enough to avoid wrap
            std::vector<double> buf(fft_len_, 0.0);
            std::copy(phi.begin() + 1, phi.begin() + static_cast<std::ptrdiff_t>(n), buf.begin() + 1);
            std::vector<std::complex<double>> freq;
            fft_->fwd(freq, buf);
            for (std::size_t k = 0; k < freq.size(); ++k) {
                freq[k] *= spectrum_[k];
            }
            fft_->inv(buf, freq);
            for (std::size_t i = 0; i <= n; ++i) {
                out[i] += buf[i];
            }
        }
    }

    /// mu int_{-inf}^0 phi(x) tail(-x) dx.
    double c_map(const std::vector<double>& phi) const
    {
        double acc = far_speed_ * u_hat_;
        for (std::size_t i = 0; i <= n_; ++i) {
            acc += speed_w_[i] * phi[i];
        }
        return p_.mu * acc;
    }

    /// One leftward sweep with frozen convolution. theta = 1/2 is the trapezoid
    /// rule, theta = 1 backward Euler. Returns false if Newton fails.
    bool sweep(double c, const std::vector<double>& conv, std::vector<double>& out, double theta) const
    {
        const double d = p_.d;
        out.assign(n_ + 1, 0.0);
        out[n_] = 0.0;
        auto g = [&](std::size_t i, double u) { return d * conv[i] - d * u + p_.f(u); };
        for (std::size_t i = n_; i > 0; --i) {
            const double ui = out[i];
            const double gi = g(i, ui);
            // c (u_i - v) / dx + (1 - theta) g_i + theta g(v) = 0
            double v = std::clamp(ui + dx_ * gi / c, 0.0, 2.0 * std::max(u_hat_, 1e-300));
            bool ok = false;
            for (int it = 0; it < 60; ++it) {
                const double res = c * (ui - v) / dx_ + (1.0 - theta) * gi + theta * g(i - 1, v);
                const double jac = -c / dx_ + theta * (-d + p_.f.derivative(v));
                const double step = res / jac;
                v -= step;
                if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(v))) {
                    ok = true;
                    break;
                }
            }
            if (!ok || !std::isfinite(v)) {
                return false;
            }
            out[i - 1] = v;
        }
        return true;
    }

    /// max_i |c (phi_{i+1} - phi_i)/dx + (1-theta) G_{i+1} + theta G_i| with the
    /// convolution of phi itself.
    double residual(double c, const std::vector<double>& phi, double theta) const
    {
        std::vector<double> conv;
        convolve(phi, conv);
        const double d = p_.d;
        auto g = [&](std::size_t i) { return d * conv[i] - d * phi[i] + p_.f(phi[i]); };
        double worst = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double r = c * (phi[i + 1] - phi[i]) / dx_ + (1.0 - theta) * g(i + 1) + theta * g(i);
            worst = std::max(worst, std::abs(r));
        }
        return worst;
    }

private:
    // weight of the half hat at the grid end, offset k = i - j in cells
    double half(std::ptrdiff_t k) const
    {
        const auto idx = k + static_cast<std::ptrdiff_t>(n_);
        return half_[static_cast<std::size_t>(idx)];
    }

    // int_0^dx P(k dx - s)(1 - s/dx) ds
    double half_hat(std::ptrdiff_t k) const
    {
        const double a = static_cast<double>(k) * dx_;
        auto f = [&](double s) { return p_.P(a - s) * (1.0 - s / dx_); };
        // split at the support edges and at 0 where P may have kinks
        std::vector<double> breaks{0.0};
        for (double edge : {a, a - p_.P.support(), a + p_.P.support()}) {
            if (edge > 0.0 && edge < dx_) {
                breaks.push_back(edge);
            }
        }
        breaks.push_back(dx_);
        std::sort(breaks.begin(), breaks.end());
        if (breaks.size() == 2 && smooth_cell(std::abs(a) - dx_)) {
            return quad::integrate(f, 0.0, dx_, 4);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
            sum += quad::integrate_adaptive(f, breaks[i], breaks[i + 1], 1e-14, 12);
        }
        return sum;
    }

    // far from the origin P varies slowly on a cell
    bool smooth_cell(double from) const
    {
        return from > 4.0 * p_.P.scale() && (!std::isfinite(p_.P.support()) || from + 2.0 * dx_ < p_.P.support());
    }

    void build_weights()
    {
        const auto n = static_cast<std::ptrdiff_t>(n_);
        const double support = p_.P.support();
        reach_ = std::isfinite(support)
                     ? std::min<std::size_t>(n_, static_cast<std::size_t>(std::ceil(support / dx_)) + 1)
                     : n_;
        half_.assign(2 * n_ + 1, 0.0);
        for (std::ptrdiff_t k = -n; k <= n; ++k) {
            if (static_cast<std::size_t>(std::abs(k)) <= reach_ + 1) {
                half_[static_cast<std::size_t>(k + n)] = half_hat(k);
            }
        }
        full_.assign(n_ + 1, 0.0);
        for (std::size_t k = 0; k <= n_; ++k) {
            full_[k] = half_[n_ + k] + half_[n_ - k];
        }
        // tail(k dx) = int_{k dx}^inf P by summing cell integrals from the far end
        tails_.assign(n_ + 1, 0.0);
        const double end = static_cast<double>(n_) * dx_;
        tails_[n_] = end >= support ? 0.0 : p_.P.tail(end);
        for (std::size_t k = n_; k-- > 0;) {
            const double a = static_cast<double>(k) * dx_;
            double cell = 0.0;
            if (a < support) {
                const double b = std::min(a + dx_, support);
                cell = b == a + dx_ && smooth_cell(a) ? quad::integrate(p_.P, a, b, 4)
                                                      : quad::integrate_adaptive(p_.P, a, b, 1e-14, 12);
            }
            tails_[k] = tails_[k + 1] + cell;
        }
        // int_{-inf}^{-M} P(x_i - y) dy = tail(x_i + M)
        far_ = tails_;
        // trapezoid in x of phi(x) tail(-x), node i sits at -x = (n - i) dx
        speed_w_.resize(n_ + 1);
        for (std::size_t i = 0; i <= n_; ++i) {
            const double w = (i == 0 || i == n_) ? 0.5 * dx_ : dx_;
            speed_w_[i] = w * tails_[n_ - i];
        }
        far_speed_ = p_.P.tail_moment(M_);
        if (reach_ > kDirectReach) {
            fft_len_ = 1;
            while (fft_len_ < 2 * (n_ + 1)) {
                fft_len_ *= 2;
            }
            std::vector<double> ker(fft_len_, 0.0);
            for (std::size_t k = 0; k <= std::min(reach_, n_); ++k) {
                ker[k] = full_[k];
                if (k > 0) {
                    ker[fft_len_ - k] = full_[k];
                }
            }
            fft_ = std::make_shared<Eigen::FFT<double>>();
            fft_->fwd(spectrum_, ker);
        }
    }

    static constexpr std::size_t kDirectReach = 64;

    const SemiWaveProblem& p_;
    double dx_;
    double M_ = 0.0;
    std::size_t n_ = 0;
    std::size_t reach_ = 0;
    double u_hat_ = 1.0;
    std::vector<double> half_;
    std::vector<double> full_;
    std::vector<double> far_;
    std::vector<double> tails_;
    std::vector<double> speed_w_;
    double far_speed_ = 0.0;
    std::size_t fft_len_ = 0;
    std::shared_ptr<Eigen::FFT<double>> fft_;
    std::vector<std::complex<double>> spectrum_;
};

struct ProfileResult {
    bool ok = false;
    std::vector<double> phi;
    double theta = 0.5;
    long sweeps = 0;
};

/// Picard iteration for the profile at fixed c, warm-started from `start`.
inline ProfileResult solve_profile(const SemiWaveGrid& g, const SemiWaveOptions& opt, double c,
                                   std::vector<double> start, double d, double lip)
{
    ProfileResult out;
    // the trapezoid rule oscillates once the cell is stiff
    out.theta = (d + lip) * g.dx() / c > 1.0 ? 1.0 : 0.5;
    std::vector<double> phi = std::move(start);
    std::vector<double> conv;
    std::vector<double> next;
    for (int it = 0; it < opt.max_picard; ++it) {
        g.convolve(phi, conv);
        if (!g.sweep(c, conv, next, out.theta)) {
            return out;
        }
        ++out.sweeps;
        double change = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i) {
            change = std::max(change, std::abs(next[i] - phi[i]));
            phi[i] += opt.damping * (next[i] - phi[i]);
        }
        if (change < opt.picard_tol) {
            out.ok = true;
            out.phi = std::move(phi);
            return out;
        }
    }
    return out;
}

} // namespace detail

/// Solve for (c0, phi0). Requires (P1); throws DivergentMomentError otherwise.
inline SemiWaveSolution solve_semiwave(const SemiWaveProblem& p)
{
    if (!(p.d > 0.0) || !(p.mu > 0.0)) {
        throw ModelInputError("semiwave: d and mu must be positive");
    }
    if (!(p.P(0.0) > 0.0)) {
        throw ModelInputError("semiwave: P(0) must be positive");
    }
    if (!p.P.has_first_moment()) {
        throw DivergentMomentError("semiwave: int_0^inf x P(x) dx diverges, no finite semi-wave speed");
    }
    const SemiWaveOptions& opt = p.opt;
    const double dx = opt.dx > 0.0 ? opt.dx : std::min(0.02, p.P.scale() / 50.0);
    const double moment = p.P.moment1();

    double M = opt.M;
    bool trimmed = false;
    for (;;) {
        const detail::SemiWaveGrid g(p, M, dx);
        const double u_hat = g.u_hat();
        const double lip = p.f.lipschitz(u_hat);
        const double c_hi = p.mu * u_hat * moment;

        std::vector<double> warm(g.n() + 1, u_hat);
        warm.back() = 0.0;
        SemiWaveSolution sol;
        long sweeps = 0;

        // g(c) = c - c_map(c); profile failures count as g < 0 (they happen at tiny c)
        struct Eval {
            double c;
            double g;
            std::vector<double> phi;
            double theta;
        };
        auto eval = [&](double c) {
            auto pr = detail::solve_profile(g, opt, c, warm, p.d, lip);
            sweeps += pr.sweeps;
            if (!pr.ok) {
                return Eval{c, -std::numeric_limits<double>::infinity(), {}, pr.theta};
            }
            warm = pr.phi;
            return Eval{c, c - g.c_map(pr.phi), std::move(pr.phi), pr.theta};
        };

        Eval hi = eval(c_hi);
        if (!(hi.g > 0.0)) {
            throw NumericalError("semiwave: g(c_hi) is not positive; profile solve failed at the upper bracket");
        }
        Eval lo = eval(1e-3 * c_hi);
        if (lo.g >= 0.0) {
            throw NumericalError("semiwave: no sign change of c - c_map(c) on the bracket");
        }
        int steps = 0;
        int side = 0;
        double g_lo = lo.g;
        double g_hi = hi.g;
        Eval best = hi;
        while (hi.c - lo.c > opt.c_tol * hi.c && steps < opt.max_outer) {
            ++steps;
            double c;
            if (std::isfinite(g_lo)) {
                c = (lo.c * g_hi - hi.c * g_lo) / (g_hi - g_lo);
                c = std::clamp(c, lo.c + 0.01 * (hi.c - lo.c), hi.c - 0.01 * (hi.c - lo.c));
            } else {
                c = 0.5 * (lo.c + hi.c);
            }
            Eval mid = eval(c);
            if (mid.g == 0.0) {
                lo = hi = mid;
                break;
            }
            if (mid.g > 0.0) {
                hi = mid;
                g_hi = mid.g;
                if (side == 1) {
                    g_lo *= 0.5; // Illinois modification
                }
                side = 1;
            } else {
                lo = mid;
                g_lo = mid.g;
                if (side == -1) {
                    g_hi *= 0.5;
                }
                side = -1;
            }
            best = std::abs(hi.g) < std::abs(lo.g) || lo.phi.empty() ? hi : lo;
        }
        if (best.phi.empty()) {
            throw NumericalError("semiwave: profile solve failed near the root");
        }

        const double tail_gap = u_hat - best.phi.front();
        if (tail_gap >= opt.tail_tol && 2.0 * M <= opt.M_max) {
            M *= 2.0;
            continue;
        }
        if (!trimmed) {
            // a window much longer than the decay leaves phi = u^ to machine
            // precision; cut it where u^ - phi reaches tail_tol / 100
            const double target = 0.01 * opt.tail_tol;
            std::size_t cut = 0;
            for (std::size_t i = g.n(); i-- > 0;) {
                if (u_hat - best.phi[i] < target) {
                    cut = i;
                    break;
                }
            }
            const double keep = -g.x(cut);
            if (cut > 0 && keep < 0.8 * g.M()) {
                M = std::max(keep, 8.0 * dx);
                trimmed = true;
                continue;
            }
        }
        for (std::size_t i = 0; i + 1 < best.phi.size(); ++i) {
            if (!(best.phi[i] > best.phi[i + 1])) {
                throw NumericalError("semiwave: profile is not strictly decreasing at x = " +
                                     std::to_string(g.x(i)) + "; refine the grid");
            }
        }
        sol.c0 = best.c;
        sol.phi = best.phi;
        sol.x.resize(g.n() + 1);
        for (std::size_t i = 0; i <= g.n(); ++i) {
            sol.x[i] = g.x(i);
        }
        sol.u_star_hat = u_hat;
        sol.residual_pde = g.residual(best.c, best.phi, best.theta);
        sol.residual_speed = std::abs(best.c - g.c_map(best.phi));
        sol.M = g.M();
        sol.dx = dx;
        sol.outer_steps = steps;
        sol.picard_sweeps = sweeps;
        return sol;
    }
}

/// Finite c0, or the infinite-speed verdict when (J1) fails.
struct SpeedResult {
    bool finite = false;
    double c0 = std::numeric_limits<double>::infinity();
    std::optional<SemiWaveSolution> solution;
};

inline SpeedResult speed_from_kernel(const RadialKernel& k, double d, double mu, const Nonlinearity& f,
                                     const SemiWaveOptions& opt = {})
{
    require_valid(k);
    SpeedResult out;
    if (!satisfies_j1(k)) {
        return out;
    }
    SemiWaveProblem p{Kernel1D::j_star_of(k), d, mu, f, opt};
    auto sol = solve_semiwave(p);
    out.finite = true;
    out.c0 = sol.c0;
    out.solution = std::move(sol);
    return out;
}

} // namespace nlfb
