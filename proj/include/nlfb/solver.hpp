#pragma once

// Radially symmetric free boundary problem
//   u_t = d (int_0^h J~(r, rho) u(rho) drho - u) + f(u),   0 <= r < h(t),
//   h'  = mu / h^{N-1} int_0^h r^{N-1} u(r) T(r, h) dr,     T = exterior mass,
// on a growing uniform grid r_i = i dr with an extra boundary node at r = h
// carrying u = 0.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "nlfb/eigen.hpp"
#include "nlfb/errors.hpp"
#include "nlfb/kernel.hpp"
#include "nlfb/kernel_tables.hpp"
#include "nlfb/nonlinearity.hpp"

namespace nlfb {

enum class Scheme { euler, heun };
enum class Verdict { spreading, vanishing, undecided };

inline std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::spreading:
        return "spreading";
    case Verdict::vanishing:
        return "vanishing";
    default:
        return "undecided";
    }
}

struct Thresholds {
    /// Vanishing needs h growth below eps_h * h0 per unit time over the window ...
    double eps_h = 1e-5;
    /// ... and u_max below eps_u * u*, decreasing across the window.
    double eps_u = 1e-3;
    /// Window length as a fraction of elapsed time.
    double window = 0.1;
    std::size_t min_records = 20;
};

struct RunConfig {
    RadialKernel kernel = RadialKernel::uniform(2);
    double d = 1.0;
    double mu = 1.0;
    Nonlinearity f = Nonlinearity::logistic();
    double h0 = 4.0;
    /// u0(r) = A (1 - (r/h0)^2) unless u0 is set.
    double u0_amplitude = 1.0;
    std::function<double(double)> u0;
    double dr = 0.05;
    /// 0 selects 0.4 / (d + Lip f).
    double dt = 0.0;
    double t_end = 10.0;
    Scheme scheme = Scheme::euler;
    /// Scalar record every record_stride steps; full profile every snapshot_stride
    /// steps (0: none).
    std::size_t record_stride = 1;
    std::size_t snapshot_stride = 0;
    Thresholds thresholds;
    /// End the run once classify would return a definite verdict.
    bool stop_on_verdict = false;
    unsigned jobs = 1;
};

struct SimState {
    double t = 0.0;
    double h = 0.0;
    double dr = 0.0;
    /// values at r_i = i dr, r_i < h; u(h) = 0 is implicit
    std::vector<double> u;

    double r(std::size_t i) const { return static_cast<double>(i) * dr; }
};

struct Record {
    double t;
    double h;
    double hdot;
    double u_at_0;
    double u_max;
    double mass;
};

struct Snapshot {
    double t;
    double h;
    std::vector<double> r;
    std::vector<double> u;
};

struct Trajectory {
    std::vector<Record> records;
    std::vector<Snapshot> snapshots;
    SimState final_state;
    double dt = 0.0;
    long steps = 0;
    /// L* when f'(0) < d, computed once per run for the verdict checks
    std::optional<double> L_star;
};

/// T(r_j, r_k) for j <= k, filled per boundary node k and shared across runs.
class ExteriorColumns {
public:
    struct Column {
        std::size_t first = 0;
        std::vector<double> values;

        double at(std::size_t j) const { return j < first ? 0.0 : values[j - first]; }
    };

    ExteriorColumns(RadialKernel kernel, double dr) : kernel_(std::move(kernel)), dr_(dr)
    {
        band_ = kernel_.is_compact()
                    ? static_cast<std::size_t>(std::ceil(kernel_.support_radius() / dr_)) + 1
                    : KernelTables::kDense;
    }

    const RadialKernel& kernel() const { return kernel_; }
    double dr() const { return dr_; }

    const Column& column(std::size_t k) const
    {
        {
            std::shared_lock lock(mutex_);
            auto it = cols_.find(k);
            if (it != cols_.end()) {
                return *it->second;
            }
        }
        auto col = std::make_unique<Column>();
        col->first = band_ == KernelTables::kDense || k < band_ ? 0 : k - band_;
        const double h = static_cast<double>(k) * dr_;
        for (std::size_t j = col->first; j <= k; ++j) {
            col->values.push_back(exterior_mass(kernel_, static_cast<double>(j) * dr_, h));
        }
        std::unique_lock lock(mutex_);
        auto [it, fresh] = cols_.emplace(k, std::move(col));
        return *it->second;
    }

private:
    RadialKernel kernel_;
    double dr_;
    std::size_t band_;
    mutable std::shared_mutex mutex_;
    mutable std::map<std::size_t, std::unique_ptr<Column>> cols_;
};

/// Kernel data shared by runs with the same kernel and dr.
struct Workspace {
    std::shared_ptr<KernelTables> tables;
    std::shared_ptr<ExteriorColumns> columns;
};

inline Workspace make_workspace(const RunConfig& cfg)
{
    TableOptions opt;
    opt.jobs = cfg.jobs;
    return {std::make_shared<KernelTables>(cfg.kernel, cfg.dr, opt),
            std::make_shared<ExteriorColumns>(cfg.kernel, cfg.dr)};
}

inline bool workspace_fits(const Workspace& ws, const RunConfig& cfg)
{
    return ws.tables && ws.columns && ws.tables->dr() == cfg.dr && ws.columns->dr() == cfg.dr &&
           ws.tables->kernel().hash() == cfg.kernel.hash() && ws.columns->kernel().hash() == cfg.kernel.hash() &&
           ws.tables->options().normalize_rows;
}

/// Largest initial value and the a-priori bound max(||u0||, u*).
inline double initial_value(const RunConfig& cfg, double r)
{
    if (cfg.u0) {
        return cfg.u0(r);
    }
    const double s = r / cfg.h0;
    return cfg.u0_amplitude * (1.0 - s * s);
}

inline double auto_dt(const RunConfig& cfg, double bound)
{
    return 0.4 / (cfg.d + cfg.f.lipschitz(bound));
}

class Simulation {
public:
    explicit Simulation(RunConfig cfg, std::optional<Workspace> ws = std::nullopt) : cfg_(std::move(cfg))
    {
        validate();
        ws_ = ws && workspace_fits(*ws, cfg_) ? *ws : make_workspace(cfg_);
        view_ = std::make_unique<TableView>(*ws_.tables);
        dim_ = cfg_.kernel.dim();

        s_.dr = cfg_.dr;
        s_.h = cfg_.h0;
        s_.t = 0.0;
        const std::size_t m = last_node(s_.h);
        s_.u.resize(m + 1);
        bound_ = cfg_.f.u_star();
        for (std::size_t i = 0; i <= m; ++i) {
            s_.u[i] = initial_value(cfg_, s_.r(i));
            bound_ = std::max(bound_, s_.u[i]);
        }
        const double lip = cfg_.f.lipschitz(bound_);
        dt_ = cfg_.dt > 0.0 ? cfg_.dt : auto_dt(cfg_, bound_);
        if (!(dt_ * (cfg_.d + lip) < 0.9)) {
            throw NumericalError("simulate: dt = " + std::to_string(dt_) +
                                 " violates dt (d + Lip f) < 0.9; use dt < " +
                                 std::to_string(0.9 / (cfg_.d + lip)));
        }
        view_->sync(m + 1);
    }

    const SimState& state() const { return s_; }
    const RunConfig& config() const { return cfg_; }
    const Workspace& workspace() const { return ws_; }
    double dt() const { return dt_; }
    /// max(||u0||, u*)
    double bound() const { return bound_; }

    /// Replace the state, e.g. to restart from a saved profile. The node count
    /// must match h.
    void reset(SimState st)
    {
        if (st.dr != cfg_.dr || !(st.h > 0.0) || st.u.size() != last_node(st.h) + 1) {
            throw ModelInputError("simulate: state does not fit the grid (dr or node count vs h)");
        }
        for (double v : st.u) {
            if (!(v >= 0.0)) {
                throw ModelInputError("simulate: state must be nonnegative");
            }
        }
        s_ = std::move(st);
        view_->sync(s_.u.size());
    }

    /// h' at the current state.
    double hdot() const
    {
        std::vector<double> du;
        double hd = 0.0;
        rates(s_.u, s_.h, du, hd);
        return hd;
    }

    /// Advance by min(dt, t_end - t) if limit is given, else dt.
    void step(double limit = std::numeric_limits<double>::infinity())
    {
        const double dt = std::min(dt_, limit - s_.t);
        if (!(dt > 0.0)) {
            return;
        }
        std::vector<double> k1;
        double h1 = 0.0;
        rates(s_.u, s_.h, k1, h1);
        std::vector<double> next(s_.u.size());
        double h_next = s_.h + dt * h1;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] = s_.u[i] + dt * k1[i];
        }
        if (cfg_.scheme == Scheme::heun) {
            std::vector<double> k2;
            double h2 = 0.0;
            clamp(next);
            rates(next, h_next, k2, h2);
            for (std::size_t i = 0; i < next.size(); ++i) {
                next[i] = s_.u[i] + 0.5 * dt * (k1[i] + k2[i]);
            }
            h_next = s_.h + 0.5 * dt * (h1 + h2);
        }
        clamp(next);
        s_.u = std::move(next);
        s_.t += dt;
        grow(std::max(h_next, s_.h));
    }

    Record record() const
    {
        Record rec{};
        rec.t = s_.t;
        rec.h = s_.h;
        rec.hdot = hdot();
        rec.u_at_0 = s_.u.front();
        rec.u_max = *std::max_element(s_.u.begin(), s_.u.end());
        const auto w = weights(s_.u.size() - 1, s_.h);
        double mass = 0.0;
        for (std::size_t i = 0; i < s_.u.size(); ++i) {
            mass += w[i] * std::pow(s_.r(i), dim_ - 1) * s_.u[i];
        }
        rec.mass = sphere_area(dim_) * mass;
        return rec;
    }

    Snapshot snapshot() const
    {
        Snapshot snap{s_.t, s_.h, {}, s_.u};
        snap.r.resize(s_.u.size());
        for (std::size_t i = 0; i < s_.u.size(); ++i) {
            snap.r[i] = s_.r(i);
        }
        snap.r.push_back(s_.h);
        snap.u.push_back(0.0);
        return snap;
    }

private:
    void validate() const
    {
        if (!(cfg_.d > 0.0) || !(cfg_.mu > 0.0)) {
            throw ModelInputError("simulate: d and mu must be positive");
        }
        if (!(cfg_.dr > 0.0) || !(cfg_.h0 >= 2.0 * cfg_.dr)) {
            throw ModelInputError("simulate: need dr > 0 and h0 >= 2 dr");
        }
        if (!(cfg_.t_end >= 0.0) || cfg_.dt < 0.0) {
            throw ModelInputError("simulate: t_end and dt must be nonnegative");
        }
        if (cfg_.record_stride == 0) {
            throw ModelInputError("simulate: record_stride must be at least 1");
        }
        require_valid(cfg_.kernel);
        if (std::abs(initial_value(cfg_, cfg_.h0)) > 1e-12) {
            throw ModelInputError("simulate: u0(h0) must vanish");
        }
        for (double r = 0.0; r < cfg_.h0 - 1e-12 * cfg_.h0; r += cfg_.dr) {
            const double v = initial_value(cfg_, r);
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ModelInputError("simulate: u0 must be positive on [0, h0), fails at r = " + std::to_string(r));
            }
        }
    }

    // largest m with r_m < h
    std::size_t last_node(double h) const
    {
        auto m = static_cast<std::size_t>(std::max(0.0, std::ceil(h / cfg_.dr) - 1.0));
        while (static_cast<double>(m + 1) * cfg_.dr < h) {
            ++m;
        }
        while (m > 0 && static_cast<double>(m) * cfg_.dr >= h) {
            --m;
        }
        return m;
    }

    // trapezoid weights on 0, dr, ..., r_m, h with u(h) = 0
    std::vector<double> weights(std::size_t m, double h) const
    {
        const double dr = cfg_.dr;
        std::vector<double> w(m + 1, dr);
        w[0] = 0.5 * dr;
        const double last = h - static_cast<double>(m) * dr;
        if (m == 0) {
            w[0] = 0.5 * last;
        } else {
            w[m] = 0.5 * dr + 0.5 * last;
        }
        return w;
    }

    void rates(const std::vector<double>& u, double h, std::vector<double>& du, double& hdot) const
    {
        const std::size_t m = u.size() - 1;
        const auto w = weights(m, h);
        std::vector<double> x(m + 1);
        for (std::size_t j = 0; j <= m; ++j) {
            x[j] = w[j] * u[j];
        }
        du.assign(m + 1, 0.0);
        view_->apply(x, du, m + 1);
        const double d = cfg_.d;
        for (std::size_t i = 0; i <= m; ++i) {
            du[i] = d * (du[i] - u[i]) + cfg_.f(u[i]);
        }

        // T(r_j, h) interpolated between the columns at r_m and r_{m+1}
        const auto& lo = ws_.columns->column(m);
        const auto& hi = ws_.columns->column(m + 1);
        const double theta = (h - static_cast<double>(m) * cfg_.dr) / cfg_.dr;
        double acc = 0.0;
        const std::size_t first = std::min(lo.first, hi.first);
        for (std::size_t j = first; j <= m; ++j) {
            if (u[j] == 0.0) {
                continue;
            }
            const double T = (1.0 - theta) * lo.at(j) + theta * hi.at(j);
            acc += w[j] * std::pow(static_cast<double>(j) * cfg_.dr, dim_ - 1) * u[j] * std::max(T, 0.0);
        }
        hdot = cfg_.mu * acc / std::pow(h, dim_ - 1);
    }

    void clamp(std::vector<double>& u) const
    {
        const double tol = 1e-10 * bound_;
        for (double& v : u) {
            if (v < 0.0) {
                if (v < -tol || !std::isfinite(v)) {
                    throw NumericalError("simulate: u became negative (" + std::to_string(v) + ") at t = " +
                                         std::to_string(s_.t) + "; reduce dt");
                }
                v = 0.0;
            }
        }
    }

    // move the boundary to h, appending nodes it passed: the new value follows
    // the line from (r_m, u_m) to (h, 0)
    void grow(double h)
    {
        const double dr = cfg_.dr;
        while (static_cast<double>(s_.u.size()) * dr < h) {
            const std::size_t m = s_.u.size() - 1;
            const double rm = static_cast<double>(m) * dr;
            const double rn = rm + dr;
            s_.u.push_back(s_.u[m] * (h - rn) / (h - rm));
        }
        s_.h = h;
        view_->sync(s_.u.size());
    }

    RunConfig cfg_;
    Workspace ws_;
    std::unique_ptr<TableView> view_;
    SimState s_;
    int dim_ = 2;
    double dt_ = 0.0;
    double bound_ = 1.0;
};

// ---------------------------------------------------------------------------
// Classification

struct Classification {
    Verdict verdict = Verdict::undecided;
    std::string reason;
};

/// L* for the run's kernel and parameters, or nullopt when f'(0) >= d.
inline std::optional<double> threshold_radius(const RunConfig& cfg)
{
    const double a = cfg.f.slope_at_zero();
    if (a >= cfg.d) {
        return std::nullopt;
    }
    return find_L_star(cfg.kernel, cfg.d, a).L_star;
}

inline Classification classify(const std::vector<Record>& recs, const RunConfig& cfg,
                               std::optional<double> L_star)
{
    const double a = cfg.f.slope_at_zero();
    if (a >= cfg.d) {
        return {Verdict::spreading, "f'(0) >= d: lambda1(L) > 0 for every L"};
    }
    if (recs.empty()) {
        return {Verdict::undecided, "empty trajectory"};
    }
    if (L_star) {
        for (const auto& r : recs) {
            if (r.h >= *L_star) {
                return {Verdict::spreading, "h(t) reached L* = " + std::to_string(*L_star) + " at t = " +
                                                std::to_string(r.t)};
            }
        }
    }
    const auto& th = cfg.thresholds;
    if (recs.size() < th.min_records) {
        return {Verdict::undecided, "fewer than " + std::to_string(th.min_records) + " records"};
    }
    const double t_last = recs.back().t;
    const double t_from = t_last - th.window * t_last;
    std::size_t start = recs.size() - 1;
    while (start > 0 && recs[start - 1].t >= t_from) {
        --start;
    }
    if (start + 1 >= recs.size()) {
        return {Verdict::undecided, "window holds a single record"};
    }
    const double span = t_last - recs[start].t;
    const double growth = recs.back().h - recs[start].h;
    bool decreasing = recs.back().u_max < recs[start].u_max;
    for (std::size_t i = start + 1; i < recs.size(); ++i) {
        decreasing = decreasing && recs[i].u_max <= recs[i - 1].u_max;
    }
    const double u_star = cfg.f.u_star();
    if (growth < th.eps_h * cfg.h0 * span && recs.back().u_max < th.eps_u * u_star && decreasing) {
        return {Verdict::vanishing, "h stalled and u_max < " + std::to_string(th.eps_u * u_star) + " and falling"};
    }
    return {Verdict::undecided, "neither criterion met by t = " + std::to_string(t_last)};
}

inline Classification classify(const Trajectory& traj, const RunConfig& cfg)
{
    return classify(traj.records, cfg, traj.L_star);
}

// ---------------------------------------------------------------------------
// Driver

/// Integrate to cfg.t_end (or an earlier definite verdict when stop_on_verdict).
inline Trajectory run(const RunConfig& cfg, std::optional<Workspace> ws = std::nullopt,
                      std::optional<double> L_star = std::nullopt)
{
    Simulation sim(cfg, std::move(ws));
    Trajectory traj;
    traj.dt = sim.dt();
    traj.L_star = L_star ? L_star : threshold_radius(cfg);
    traj.records.push_back(sim.record());
    if (cfg.snapshot_stride > 0) {
        traj.snapshots.push_back(sim.snapshot());
    }
    long step = 0;
    // the t_end comparison tolerates rounding in the accumulated t
    const double eps = 1e-9 * sim.dt();
    while (sim.state().t < cfg.t_end - eps) {
        sim.step(cfg.t_end);
        ++step;
        const bool last = sim.state().t >= cfg.t_end - eps;
        if (last || step % static_cast<long>(cfg.record_stride) == 0) {
            traj.records.push_back(sim.record());
            if (cfg.stop_on_verdict && step % 16 == 0) {
                if (classify(traj, cfg).verdict != Verdict::undecided) {
                    break;
                }
            }
        }
        if (cfg.snapshot_stride > 0 && (last || step % static_cast<long>(cfg.snapshot_stride) == 0)) {
            traj.snapshots.push_back(sim.snapshot());
        }
    }
    if (traj.records.back().t != sim.state().t) {
        traj.records.push_back(sim.record());
    }
    traj.steps = step;
    traj.final_state = sim.state();
    return traj;
}

// ---------------------------------------------------------------------------
// mu* search

struct MuProbe {
    double mu;
    Verdict verdict;
    double t_end;
};

struct MuStarOptions {
    double tol = 0.02;
    int max_escalations = 3;
    double escalation = 2.0;
    int max_bisections = 60;
};

struct MuStarResult {
    double mu_lo = 0.0;
    double mu_hi = 0.0;
    bool converged = false;
    std::vector<MuProbe> history;
    std::string warning;
};

/// True when no spreading probe sits below a vanishing one.
inline bool verdicts_monotone(const std::vector<MuProbe>& history)
{
    for (const auto& a : history) {
        for (const auto& b : history) {
            if (a.mu < b.mu && a.verdict == Verdict::spreading && b.verdict == Verdict::vanishing) {
                return false;
            }
        }
    }
    return true;
}

/// Bisection (geometric) over mu in [mu_lo, mu_hi]; undecided runs are repeated
/// with t_end multiplied by opt.escalation.
inline MuStarResult find_mu_star(const RunConfig& tmpl, double mu_lo, double mu_hi, const MuStarOptions& opt = {})
{
    if (!(mu_lo > 0.0) || !(mu_hi > mu_lo)) {
        throw ModelInputError("find_mu_star: need 0 < mu_lo < mu_hi");
    }
    const double a = tmpl.f.slope_at_zero();
    if (a >= tmpl.d) {
        throw ModelInputError("find_mu_star: f'(0) >= d, spreading for every mu, no threshold");
    }
    const double L_star = find_L_star(tmpl.kernel, tmpl.d, a).L_star;
    if (tmpl.h0 >= L_star) {
        throw ModelInputError("find_mu_star: h0 >= L* = " + std::to_string(L_star) + ", spreading for every mu");
    }
    RunConfig base = tmpl;
    base.stop_on_verdict = true;
    const Workspace ws = make_workspace(base);
    MuStarResult out;

    auto probe = [&](double mu) {
        RunConfig cfg = base;
        cfg.mu = mu;
        Verdict v = Verdict::undecided;
        for (int e = 0; e <= opt.max_escalations; ++e) {
            const Trajectory traj = run(cfg, ws, L_star);
            v = classify(traj, cfg).verdict;
            out.history.push_back({mu, v, cfg.t_end});
            if (v != Verdict::undecided) {
                break;
            }
            cfg.t_end *= opt.escalation;
        }
        return v;
    };

    if (probe(mu_lo) != Verdict::vanishing) {
        throw NumericalError("find_mu_star: lower bracket mu = " + std::to_string(mu_lo) + " is not vanishing");
    }
    if (probe(mu_hi) != Verdict::spreading) {
        throw NumericalError("find_mu_star: upper bracket mu = " + std::to_string(mu_hi) + " is not spreading");
    }
    out.mu_lo = mu_lo;
    out.mu_hi = mu_hi;
    for (int it = 0; it < opt.max_bisections && out.mu_hi / out.mu_lo >= 1.0 + opt.tol; ++it) {
        const double mid = std::sqrt(out.mu_lo * out.mu_hi);
        const Verdict v = probe(mid);
        if (v == Verdict::spreading) {
            out.mu_hi = mid;
        } else if (v == Verdict::vanishing) {
            out.mu_lo = mid;
        } else {
            out.warning = "undecided at mu = " + std::to_string(mid) + " after escalating t_end; bracket is the widest resolved one";
            return out;
        }
    }
    out.converged = out.mu_hi / out.mu_lo < 1.0 + opt.tol;
    return out;
}

} // namespace nlfb
