#pragma once

// Least-squares fits of the long-time laws to h(t), and parameter sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "nlfb/errors.hpp"
#include "nlfb/solver.hpp"

namespace nlfb {

enum class FitModel { linear, log_shift, power, t_log_t };

inline std::string to_string(FitModel m)
{
    switch (m) {
    case FitModel::linear:
        return "linear";
    case FitModel::log_shift:
        return "log_shift";
    case FitModel::power:
        return "power";
    default:
        return "t_log_t";
    }
}

/// linear:    h = a t + b
/// log_shift: c0 t - h = a ln t + b
/// power:     ln h = a ln t + b
/// t_log_t:   a = mean of h / (t ln t), b = (max - min) / mean of that ratio,
///            r2 = 1 - (std / mean)^2
struct FitResult {
    FitModel model = FitModel::linear;
    double a = 0.0;
    double b = 0.0;
    double r2 = 0.0;
    double t_a = 0.0;
    double t_b = 0.0;
    std::size_t points = 0;
    /// t_log_t only: max / min of the ratio on the window
    double max_over_min = 1.0;
    bool flagged = false;
    std::string note;
};

struct Series {
    std::vector<double> t;
    std::vector<double> h;
};

inline Series series_of(const Trajectory& traj)
{
    Series s;
    for (const auto& r : traj.records) {
        s.t.push_back(r.t);
        s.h.push_back(r.h);
    }
    return s;
}

struct FitWindow {
    /// Last `tail` fraction of the time span ...
    double tail = 0.5;
    /// ... never reaching into the first `skip` fraction.
    double skip = 0.2;
    /// Explicit bounds override the fractions.
    std::optional<double> from;
    std::optional<double> to;
    std::size_t min_points = 10;
    /// power and log_shift fits below this R^2 are flagged
    double r2_flag = 0.9;
};

namespace detail {

struct Line {
    double slope;
    double intercept;
    double r2;
};

inline Line least_squares(const std::vector<double>& x, const std::vector<double>& y)
{
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw ModelInputError("fit: window has a single distinct time");
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (slope * x[i] + intercept);
        ss_res += e * e;
    }
    // exactly constant data fits perfectly
    const double scale = std::max(1.0, my * my) * n;
    double r2 = syy > 1e-28 * scale ? 1.0 - ss_res / syy : (ss_res <= 1e-28 * scale ? 1.0 : 0.0);
    return {slope, intercept, std::clamp(r2, 0.0, 1.0)};
}

inline std::vector<std::size_t> window_indices(const Series& s, const FitWindow& w)
{
    if (s.t.size() != s.h.size()) {
        throw ModelInputError("fit: t and h differ in length");
    }
    if (s.t.empty()) {
        throw ModelInputError("fit: empty series");
    }
    const double t0 = s.t.front();
    const double t1 = s.t.back();
    const double span = t1 - t0;
    double lo = w.from.value_or(std::max(t1 - w.tail * span, t0 + w.skip * span));
    double hi = w.to.value_or(t1);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        if (s.t[i] >= lo && s.t[i] <= hi) {
            idx.push_back(i);
        }
    }
    if (idx.size() < w.min_points) {
        throw ModelInputError("fit: window [" + std::to_string(lo) + ", " + std::to_string(hi) + "] holds " +
                              std::to_string(idx.size()) + " points, need " + std::to_string(w.min_points));
    }
    return idx;
}

inline FitResult make_fit(FitModel model, double a, double b, double r2, double t_a, double t_b, std::size_t n)
{
    FitResult out;
    out.model = model;
    out.a = a;
    out.b = b;
    out.r2 = r2;
    out.t_a = t_a;
    out.t_b = t_b;
    out.points = n;
    return out;
}

} // namespace detail

/// Slope of h against t on the window.
inline FitResult estimate_speed(const Series& s, const FitWindow& w = {})
{
    const auto idx = detail::window_indices(s, w);
    std::vector<double> x;
    std::vector<double> y;
    for (auto i : idx) {
        x.push_back(s.t[i]);
        y.push_back(s.h[i]);
    }
    const auto line = detail::least_squares(x, y);
    return detail::make_fit(FitModel::linear, line.slope, line.intercept, line.r2, x.front(), x.back(), x.size());
}

/// c0 t - h(t) = a ln t + b. Flags a log coefficient too small to matter on the
/// window and a gap that is negative or non-monotone throughout.
inline FitResult estimate_log_shift(const Series& s, double c0, const FitWindow& w = {})
{
    const auto idx = detail::window_indices(s, w);
    std::vector<double> x;
    std::vector<double> y;
    for (auto i : idx) {
        if (!(s.t[i] > 0.0)) {
            throw ModelInputError("log_shift fit: window must have t > 0");
        }
        x.push_back(std::log(s.t[i]));
        y.push_back(c0 * s.t[i] - s.h[i]);
    }
    const auto line = detail::least_squares(x, y);
    FitResult out = detail::make_fit(FitModel::log_shift, line.slope, line.intercept, line.r2, s.t[idx.front()],
                                     s.t[idx.back()], x.size());
    const double log_part = std::abs(line.slope) * (x.back() - x.front());
    const double level = std::max({std::abs(line.intercept), std::abs(y.front()), std::abs(y.back()), 1e-300});
    if (log_part < 1e-6 * level) {
        out.flagged = true;
        out.note = "log coefficient negligible: c0 t - h is constant on the window";
    }
    bool negative = true;
    bool rising = true;
    for (std::size_t i = 0; i < y.size(); ++i) {
        negative = negative && y[i] < 0.0;
        if (i > 0) {
            rising = rising && y[i] >= y[i - 1];
        }
    }
    if (negative || (!rising && !out.flagged)) {
        out.flagged = true;
        out.note = negative ? "c0 t - h < 0 on the whole window (c0 too small, or a large head start h0)"
                            : "c0 t - h is not monotone: c0 mismatch or transient";
    }
    if (!out.flagged && out.r2 < w.r2_flag) {
        out.flagged = true;
        out.note = "poor fit";
    }
    return out;
}

/// Slope of ln h against ln t.
inline FitResult estimate_power(const Series& s, const FitWindow& w = {})
{
    const auto idx = detail::window_indices(s, w);
    std::vector<double> x;
    std::vector<double> y;
    for (auto i : idx) {
        if (!(s.t[i] > 0.0) || !(s.h[i] > 0.0)) {
            throw ModelInputError("power fit: window needs t > 0 and h > 0");
        }
        x.push_back(std::log(s.t[i]));
        y.push_back(std::log(s.h[i]));
    }
    const auto line = detail::least_squares(x, y);
    FitResult out = detail::make_fit(FitModel::power, line.slope, line.intercept, line.r2, s.t[idx.front()],
                                     s.t[idx.back()], x.size());
    if (out.r2 < w.r2_flag) {
        out.flagged = true;
        out.note = "not yet in a power-law regime";
    }
    return out;
}

/// h / (t ln t) on the window: mean, relative spread and max/min.
inline FitResult estimate_t_log_t(const Series& s, const FitWindow& w = {})
{
    const auto idx = detail::window_indices(s, w);
    std::vector<double> ratio;
    for (auto i : idx) {
        if (!(s.t[i] > 1.0)) {
            throw ModelInputError("t ln t fit: window needs t > 1");
        }
        ratio.push_back(s.h[i] / (s.t[i] * std::log(s.t[i])));
    }
    double mean = 0.0;
    for (double r : ratio) {
        mean += r;
    }
    mean /= static_cast<double>(ratio.size());
    const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
    FitResult out = detail::make_fit(FitModel::t_log_t, mean, (*hi - *lo) / mean, 0.0, s.t[idx.front()],
                                     s.t[idx.back()], ratio.size());
    out.max_over_min = *hi / *lo;
    // goodness of the constant model: 1 - (coefficient of variation)^2
    double ss = 0.0;
    for (double r : ratio) {
        ss += (r - mean) * (r - mean);
    }
    out.r2 = std::clamp(1.0 - ss / static_cast<double>(ratio.size()) / (mean * mean), 0.0, 1.0);
    if (out.max_over_min > 2.0) {
        out.flagged = true;
        out.note = "ratio varies by more than a factor 2";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParam { mu, h0, d, beta };

inline SweepParam parse_sweep_param(const std::string& name)
{
    if (name == "mu") {
        return SweepParam::mu;
    }
    if (name == "h0") {
        return SweepParam::h0;
    }
    if (name == "d") {
        return SweepParam::d;
    }
    if (name == "beta") {
        return SweepParam::beta;
    }
    throw ModelInputError("sweep: parameter must be one of mu, h0, d, beta (got '" + name + "')");
}

struct SweepRow {
    double value = 0.0;
    Verdict verdict = Verdict::undecided;
    double h_final = std::numeric_limits<double>::quiet_NaN();
    double t_final = std::numeric_limits<double>::quiet_NaN();
    double speed_est = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

inline RunConfig with_param(const RunConfig& base, SweepParam p, double v)
{
    RunConfig c = base;
    switch (p) {
    case SweepParam::mu:
        c.mu = v;
        break;
    case SweepParam::h0:
        c.h0 = v;
        break;
    case SweepParam::d:
        c.d = v;
        break;
    case SweepParam::beta:
        c.kernel = RadialKernel::fat_tail(base.kernel.dim(), v, base.kernel.is_compact() ? 1.0 : base.kernel.length_scale());
        break;
    }
    return c;
}

/// One run per value, `jobs` at a time; failures are kept per row.
inline std::vector<SweepRow> sweep(const RunConfig& base, SweepParam p, const std::vector<double>& values,
                                   unsigned jobs = 1)
{
    std::vector<SweepRow> rows(values.size());
    if (values.empty()) {
        return rows;
    }
    // mu and h0 leave the kernel, dr and L* alone
    std::optional<Workspace> shared;
    std::optional<double> L_star;
    if (p == SweepParam::mu || p == SweepParam::h0) {
        try {
            shared = make_workspace(base);
            L_star = threshold_radius(base);
        } catch (const std::exception&) {
            shared.reset();
        }
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) {
            SweepRow& row = rows[i];
            row.value = values[i];
            try {
                const RunConfig cfg = with_param(base, p, values[i]);
                const auto traj = run(cfg, shared, L_star);
                row.verdict = classify(traj, cfg).verdict;
                row.h_final = traj.final_state.h;
                row.t_final = traj.final_state.t;
                if (row.verdict == Verdict::spreading) {
                    try {
                        row.speed_est = estimate_speed(series_of(traj)).a;
                    } catch (const ModelInputError&) {
                    }
                }
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(values.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < n; ++k) {
            pool.emplace_back(worker);
        }
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::string& param, const std::vector<SweepRow>& rows)
{
    out.precision(17);
    out << param << ",verdict,h_final,t_final,speed_est,error\n";
    for (const auto& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << r.value << ',' << to_string(r.verdict) << ',' << r.h_final << ',' << r.t_final << ','
            << r.speed_est << ',' << err << '\n';
    }
}

} // namespace nlfb
