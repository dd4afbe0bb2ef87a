#pragma once

// Principal eigenvalue of  d int_{B_L} J(|x-y|) phi(y) dy - d phi + a phi = lambda phi
// restricted to radial phi, and the fixed-boundary steady state on B_L.
//
// Radial discretization: (K phi)(r_i) = sum_j J~(r_i, r_j) w_j phi_j with trapezoid
// weights w_j on the nodes 0, dr, 2dr, ... plus an endpoint node at L. With
// s_i = r_i^{N-1} w_i the matrix S^{1/2} K S^{-1/2} is symmetric; node 0 has no
// weight there and is recovered from the eigen relation afterwards.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "nlfb/errors.hpp"
#include "nlfb/kernel.hpp"
#include "nlfb/kernel_tables.hpp"
#include "nlfb/nonlinearity.hpp"

namespace nlfb {

struct EigenOptions {
    /// Largest grid step; small balls use L / n_min instead.
    double dr_max = 0.05;
    int n_min = 40;
    /// Bound on ||d K phi - d phi + a phi - lambda phi||_inf / ||phi||_inf.
    double tol = 1e-8;
    long max_iter = 100000;
    /// Power steps before switching to Rayleigh-quotient refinement.
    int warmup = 60;
    int order = 24;
};

struct EigenProblem {
    double d = 1.0;
    double a = 0.5;
    double L = 1.0;
};

struct EigenResult {
    double lambda1 = 0.0;
    std::vector<double> r;
    /// Radial eigenfunction on r, sup = 1.
    std::vector<double> eigenfunction;
    long iterations = 0;
    double residual = 0.0;
    /// Rayleigh quotient of the unsymmetrized operator with weights r^{N-1} w,
    /// expressed as an eigenvalue (d rho - d + a).
    double lambda_weighted = 0.0;
    double dr = 0.0;
};

/// Nodes and trapezoid weights for [0, L].
struct BallGrid {
    double dr = 0.0;
    std::vector<double> r;
    std::vector<double> w;
    /// Nodes [0, on_grid) sit exactly at i * dr.
    std::size_t on_grid = 0;
};

inline BallGrid ball_grid(double L, double dr)
{
    if (!(L > 0.0) || !(dr > 0.0)) {
        throw ModelInputError("ball grid: L and dr must be positive");
    }
    if (L < dr) {
        throw ModelInputError("ball grid: L is smaller than one grid cell");
    }
    BallGrid g;
    g.dr = dr;
    auto m = static_cast<std::size_t>(std::floor(L / dr + 1e-9));
    for (std::size_t i = 0; i <= m; ++i) {
        g.r.push_back(static_cast<double>(i) * dr);
    }
    g.on_grid = g.r.size();
    const double gap = L - g.r.back();
    if (gap <= 1e-9 * L) {
        g.r.back() = L;
        g.on_grid = gap == 0.0 ? g.r.size() : g.r.size() - 1;
    } else if (gap < 0.01 * dr) {
        // merge a sliver cell into the last node
        g.r.back() = L;
        g.on_grid = g.r.size() - 1;
    } else {
        g.r.push_back(L);
    }
    const std::size_t n = g.r.size();
    g.w.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = g.r[i + 1] - g.r[i];
        g.w[i] += 0.5 * h;
        g.w[i + 1] += 0.5 * h;
    }
    return g;
}

namespace detail {

/// Lower-triangle J~(r_i, r_j), j <= i, on a BallGrid, taking grid-aligned
/// entries from unnormalized tables when they are available.
class BallKernel {
public:
    BallKernel(const RadialKernel& k, const BallGrid& g, KernelTables* tables, int order)
        : k_(k), g_(g), tables_(tables), q_{order, false}
    {
        if (tables_ && (tables_->dr() != g.dr || tables_->options().normalize_rows ||
                        tables_->options().order != order)) {
            tables_ = nullptr;
        }
        if (tables_ && g.on_grid > 0) {
            tables_->ensure(g.on_grid);
        }
        band_ = k.is_compact() ? k.support_radius() : std::numeric_limits<double>::infinity();
    }

    /// J~(r_i, r_j) for j <= i.
    double lower(std::size_t i, std::size_t j) const
    {
        const double ri = g_.r[i];
        const double rj = g_.r[j];
        if (ri - rj > band_) {
            return 0.0;
        }
        if (tables_ && i < g_.on_grid) {
            return tables_->raw(i, j);
        }
        if (i == 0) {
            return 0.0;
        }
        return j_tilde(k_, ri, rj, q_);
    }

    /// First column j with r_i - r_j <= support.
    std::size_t first(std::size_t i) const
    {
        if (!std::isfinite(band_)) {
            return 0;
        }
        const double lo = g_.r[i] - band_;
        std::size_t j = 0;
        if (lo > 0.0) {
            j = static_cast<std::size_t>(std::max(0.0, std::floor(lo / g_.dr) - 1.0));
        }
        while (j < i && g_.r[i] - g_.r[j] > band_) {
            ++j;
        }
        return j;
    }

private:
    const RadialKernel& k_;
    const BallGrid& g_;
    KernelTables* tables_;
    QuadOptions q_;
    double band_;
};

struct TopPair {
    double mu = 0.0;
    Eigen::VectorXd v;
    long iterations = 0;
    bool converged = false;
};

inline bool strictly_positive(const Eigen::VectorXd& v)
{
    return (v.array() > 0.0).all();
}

/// Largest eigenvalue of the nonnegative symmetric matrix B: power iteration on
/// B + I, then Rayleigh-quotient iteration from the power iterate.
template <class Mat, class Factor>
TopPair top_eigenpair(const Mat& b, Factor&& factor, const EigenOptions& opt,
                      const std::function<bool(const TopPair&)>& accept)
{
    const auto n = b.rows();
    TopPair p;
    p.v = Eigen::VectorXd::Ones(n).normalized();
    Eigen::VectorXd bv(n);
    auto power_step = [&] {
        bv = b * p.v;
        p.mu = p.v.dot(bv);
        p.v = (bv + p.v).normalized();
        ++p.iterations;
    };
    for (int k = 0; k < opt.warmup && p.iterations < opt.max_iter; ++k) {
        power_step();
    }
    p.mu = p.v.dot(b * p.v);

    TopPair rq = p;
    for (int k = 0; k < 12; ++k) {
        Eigen::VectorXd y;
        if (!factor(rq.mu, rq.v, y) || !y.allFinite() || y.norm() == 0.0) {
            break;
        }
        rq.v = y.normalized();
        if (rq.v.sum() < 0.0) {
            rq.v = -rq.v;
        }
        bv = b * rq.v;
        rq.mu = rq.v.dot(bv);
        ++rq.iterations;
        if (strictly_positive(rq.v) && accept(rq)) {
            rq.converged = true;
            return rq;
        }
    }
    // plain power iteration from the warm-up vector
    while (p.iterations < opt.max_iter) {
        power_step();
        if (p.iterations % 50 == 0) {
            p.mu = p.v.dot(b * p.v);
            if (accept(p)) {
                p.converged = true;
                return p;
            }
        }
    }
    return p;
}

} // namespace detail

/// Principal eigenvalue on B_L. Shares `tables` (unnormalized, same dr) across calls
/// when supplied.
inline EigenResult lambda1(const RadialKernel& k, const EigenProblem& p, const EigenOptions& opt = {},
                           KernelTables* tables = nullptr)
{
    if (!(p.d > 0.0)) {
        throw ModelInputError("eigen: d must be positive");
    }
    if (!(p.L > 0.0)) {
        throw ModelInputError("eigen: L must be positive");
    }
    const double dr = std::min(opt.dr_max, p.L / opt.n_min);
    const BallGrid g = ball_grid(p.L, dr);
    const detail::BallKernel bk(k, g, tables, opt.order);
    const std::size_t n = g.r.size();
    const std::size_t m = n - 1; // unknowns at nodes 1..n-1
    const double half_pow = 0.5 * (k.dim() - 1);

    std::vector<double> sqrt_s(n);
    for (std::size_t i = 0; i < n; ++i) {
        sqrt_s[i] = std::sqrt(std::pow(g.r[i], k.dim() - 1) * g.w[i]);
    }
    auto sym_entry = [&](std::size_t i, std::size_t j, double jt) {
        return std::sqrt(g.w[i] * g.w[j]) * std::pow(g.r[i] / g.r[j], half_pow) * jt;
    };

    EigenResult res;
    res.dr = dr;
    res.r = g.r;

    // raw lower triangle, kept for the unsymmetrized residual
    std::vector<std::vector<double>> low(n);
    std::vector<std::size_t> first(n, 0);
    for (std::size_t i = 1; i < n; ++i) {
        first[i] = std::max<std::size_t>(1, bk.first(i));
        low[i].resize(i - first[i] + 1);
        for (std::size_t j = first[i]; j <= i; ++j) {
            low[i][j - first[i]] = bk.lower(i, j);
        }
    }
    const double omega = sphere_area(k.dim());
    std::vector<double> row0(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) {
        row0[j] = omega * std::pow(g.r[j], k.dim() - 1) * k(g.r[j]);
    }

    // phi from a symmetric-space vector, node 0 from the eigen relation
    auto unpack = [&](const detail::TopPair& tp) {
        std::vector<double> phi(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            phi[i] = tp.v[static_cast<Eigen::Index>(i - 1)] / sqrt_s[i];
        }
        double acc = 0.0;
        for (std::size_t j = 1; j < n; ++j) {
            acc += row0[j] * g.w[j] * phi[j];
        }
        phi[0] = tp.mu > 0.0 ? acc / tp.mu : phi[1];
        return phi;
    };
    auto apply_k = [&](const std::vector<double>& phi) {
        std::vector<double> out(n, 0.0);
        for (std::size_t j = 1; j < n; ++j) {
            out[0] += row0[j] * g.w[j] * phi[j];
        }
        for (std::size_t i = 1; i < n; ++i) {
            for (std::size_t j = first[i]; j <= i; ++j) {
                const double v = low[i][j - first[i]];
                out[i] += v * g.w[j] * phi[j];
                if (j < i) {
                    out[j] += v * std::pow(g.r[i] / g.r[j], k.dim() - 1) * g.w[i] * phi[i];
                }
            }
        }
        return out;
    };
    auto residual_of = [&](const std::vector<double>& phi, double mu) {
        const auto kphi = apply_k(phi);
        double worst = 0.0;
        double sup = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(p.d * (kphi[i] - mu * phi[i])));
            sup = std::max(sup, std::abs(phi[i]));
        }
        return sup > 0.0 ? worst / sup : std::numeric_limits<double>::infinity();
    };
    auto accept = [&](const detail::TopPair& tp) {
        return residual_of(unpack(tp), tp.mu) < opt.tol;
    };

    detail::TopPair top;
    if (m == 0) {
        throw ModelInputError("eigen: L is smaller than one grid cell");
    }
    if (k.is_compact()) {
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t i = 1; i < n; ++i) {
            for (std::size_t j = first[i]; j <= i; ++j) {
                const double v = sym_entry(i, j, low[i][j - first[i]]);
                const auto ii = static_cast<int>(i - 1);
                const auto jj = static_cast<int>(j - 1);
                trip.emplace_back(ii, jj, v);
                if (j < i) {
                    trip.emplace_back(jj, ii, v);
                }
            }
        }
        Eigen::SparseMatrix<double> b(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        b.setFromTriplets(trip.begin(), trip.end());
        b.makeCompressed();
        Eigen::SparseMatrix<double> eye(b.rows(), b.cols());
        eye.setIdentity();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.analyzePattern(b);
        auto factor = [&](double shift, const Eigen::VectorXd& rhs, Eigen::VectorXd& out) {
            Eigen::SparseMatrix<double> shifted = b - shift * eye;
            lu.factorize(shifted);
            if (lu.info() != Eigen::Success) {
                return false;
            }
            out = lu.solve(rhs);
            return lu.info() == Eigen::Success;
        };
        top = detail::top_eigenpair(b, factor, opt, accept);
    } else {
        Eigen::MatrixXd b(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (std::size_t i = 1; i < n; ++i) {
            for (std::size_t j = 1; j <= i; ++j) {
                const double v = sym_entry(i, j, low[i][j - first[i]]);
                b(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = v;
                b(static_cast<Eigen::Index>(j - 1), static_cast<Eigen::Index>(i - 1)) = v;
            }
        }
        auto factor = [&](double shift, const Eigen::VectorXd& rhs, Eigen::VectorXd& out) {
            Eigen::MatrixXd shifted = b;
            shifted.diagonal().array() -= shift;
            out = shifted.partialPivLu().solve(rhs);
            return true;
        };
        top = detail::top_eigenpair(b, factor, opt, accept);
    }
    if (!top.converged) {
        throw NumericalError("eigen: no convergence after " + std::to_string(opt.max_iter) +
                             " iterations; refine the grid");
    }

    auto phi = unpack(top);
    res.iterations = top.iterations;
    res.lambda1 = p.d * top.mu - p.d + p.a;
    res.residual = residual_of(phi, top.mu);
    const auto kphi = apply_k(phi);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double s = sqrt_s[i] * sqrt_s[i];
        num += s * phi[i] * kphi[i];
        den += s * phi[i] * phi[i];
    }
    res.lambda_weighted = p.d * num / den - p.d + p.a;
    const double sup = *std::max_element(phi.begin(), phi.end());
    for (auto& v : phi) {
        v /= sup;
    }
    res.eigenfunction = std::move(phi);
    return res;
}

/// Reuses one unnormalized table at dr_max across many radii (sweeps, bisection).
class EigenSolver {
public:
    explicit EigenSolver(RadialKernel k, EigenOptions opt = {}) : k_(std::move(k)), opt_(opt)
    {
        TableOptions t;
        t.order = opt_.order;
        t.normalize_rows = false;
        tables_ = std::make_unique<KernelTables>(k_, opt_.dr_max, t);
    }

    const RadialKernel& kernel() const { return k_; }
    const EigenOptions& options() const { return opt_; }

    EigenResult solve(const EigenProblem& p) { return lambda1(k_, p, opt_, tables_.get()); }

private:
    RadialKernel k_;
    EigenOptions opt_;
    std::unique_ptr<KernelTables> tables_;
};

struct LStar {
    double L_star = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double lambda_at = 0.0;
};

/// Radius where lambda1 changes sign, 0 < a < d.
inline LStar find_L_star(EigenSolver& solver, double d, double a, double tol_L = 1e-4, double L_max = 2000.0)
{
    if (!(a > 0.0) || !(a < d)) {
        throw ModelInputError("L*: requires 0 < a < d");
    }
    auto lam = [&](double L) { return solver.solve({d, a, L}).lambda1; };
    const double scale = solver.kernel().length_scale();
    double lo = 0.01 * scale;
    if (lam(lo) >= 0.0) {
        throw NumericalError("L*: lambda1 is already nonnegative at the smallest radius");
    }
    double hi = scale;
    while (lam(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > L_max) {
            throw NumericalError("L*: no sign change below L_max = " + std::to_string(L_max) +
                                 " (a too close to d for this horizon)");
        }
    }
    while (hi - lo > tol_L) {
        const double mid = 0.5 * (lo + hi);
        (lam(mid) < 0.0 ? lo : hi) = mid;
    }
    LStar out;
    out.lo = lo;
    out.hi = hi;
    out.L_star = 0.5 * (lo + hi);
    out.lambda_at = lam(out.L_star);
    return out;
}

inline LStar find_L_star(const RadialKernel& k, double d, double a, const EigenOptions& opt = {},
                         double tol_L = 1e-4)
{
    EigenSolver solver(k, opt);
    return find_L_star(solver, d, a, tol_L);
}

struct SteadyOptions {
    double dr_max = 0.05;
    int n_min = 40;
    /// stop when ||w_new - w||_inf < tol * dt
    double tol = 1e-9;
    long max_steps = 5000000;
};

struct SteadyState {
    std::vector<double> r;
    std::vector<double> w;
    double dr = 0.0;
    double lambda1 = 0.0;
    long steps = 0;
};

/// Positive steady state of w_t = d (int_{B_L} J w - w) + f(w) by explicit time
/// marching from w = u*/2. The grid step is L / n with n = max(n_min, ceil(L / dr_max)).
inline SteadyState steady_state(const RadialKernel& k, double L, double d, const Nonlinearity& f,
                                const SteadyOptions& opt = {})
{
    EigenOptions eo;
    eo.dr_max = opt.dr_max;
    eo.n_min = opt.n_min;
    const double lam = lambda1(k, {d, f.slope_at_zero(), L}, eo).lambda1;
    if (lam <= 0.0) {
        throw ModelInputError("steady state: lambda1(L) = " + std::to_string(lam) +
                              " <= 0, no positive steady state exists");
    }
    const auto cells = static_cast<std::size_t>(
        std::max<double>(opt.n_min, std::ceil(L / opt.dr_max - 1e-9)));
    const double dr = L / static_cast<double>(cells);
    const std::size_t n = cells + 1;

    KernelTables tables(k, dr);
    TableView view(tables);
    view.sync(n);
    std::vector<double> wts(n, dr);
    wts.front() = wts.back() = 0.5 * dr;

    const double top = std::max(f.u_star(), 0.5 * f.u_star());
    const double dt = 0.4 / (d + f.lipschitz(top));
    std::vector<double> w(n, 0.5 * f.u_star());
    std::vector<double> x(n);
    std::vector<double> kw(n);
    SteadyState out;
    out.dr = dr;
    out.lambda1 = lam;
    for (long step = 1; step <= opt.max_steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = wts[i] * w[i];
        }
        view.apply(x, kw, n);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dw = dt * (d * (kw[i] - w[i]) + f(w[i]));
            w[i] += dw;
            change = std::max(change, std::abs(dw));
        }
        if (change < opt.tol * dt) {
            out.steps = step;
            out.w = std::move(w);
            out.r.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                out.r[i] = static_cast<double>(i) * dr;
            }
            return out;
        }
    }
    throw NumericalError("steady state: no convergence within max_steps");
}

} // namespace nlfb
