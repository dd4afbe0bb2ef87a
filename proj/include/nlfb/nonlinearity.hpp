#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nlfb/errors.hpp"

namespace nlfb {

/// Autonomous Fisher-KPP reaction term f(u): f(0) = 0 < f'(0), a unique positive
/// zero u*, f > 0 on (0, u*) and f < 0 beyond.
class Nonlinearity {
public:
    /// f(u) = scale * u * (1 - u)
    static Nonlinearity logistic(double scale = 1.0)
    {
        if (!(scale > 0.0)) {
            throw ModelInputError("logistic nonlinearity: scale must be positive");
        }
        Nonlinearity f;
        f.kind_ = Kind::logistic;
        f.scale_ = scale;
        f.u_star_ = 1.0;
        return f;
    }

    /// Piecewise-linear interpolation of (u, f) samples starting at (0, 0);
    /// the last segment is extended linearly.
    static Nonlinearity tabulated(std::vector<std::pair<double, double>> samples)
    {
        if (samples.size() < 3) {
            throw ModelInputError("tabulated nonlinearity: need at least 3 samples");
        }
        std::sort(samples.begin(), samples.end());
        if (samples.front().first != 0.0 || samples.front().second != 0.0) {
            throw ModelInputError("tabulated nonlinearity: first sample must be (0, 0)");
        }
        for (std::size_t i = 1; i < samples.size(); ++i) {
            if (!(samples[i].first > samples[i - 1].first)) {
                throw ModelInputError("tabulated nonlinearity: u samples must be distinct");
            }
        }
        Nonlinearity f;
        f.kind_ = Kind::tabulated;
        f.table_ = std::move(samples);
        if (!(f.derivative(0.0) > 0.0)) {
            throw ModelInputError("tabulated nonlinearity: f'(0) must be positive");
        }
        // first sign change from + to -
        double root = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t i = 1; i < f.table_.size(); ++i) {
            const auto [u0, f0] = f.table_[i - 1];
            const auto [u1, f1] = f.table_[i];
            if (i > 1 && f0 <= 0.0) {
                throw ModelInputError("tabulated nonlinearity: f must stay positive on (0, u*)");
            }
            if (f1 <= 0.0) {
                root = f1 == 0.0 ? u1 : u0 + (u1 - u0) * f0 / (f0 - f1);
                for (std::size_t j = i + 1; j < f.table_.size(); ++j) {
                    if (f.table_[j].second > 0.0) {
                        throw ModelInputError("tabulated nonlinearity: f must stay negative beyond u*");
                    }
                }
                break;
            }
        }
        if (!std::isfinite(root) || f.derivative(root + 1e-12) >= 0.0) {
            throw ModelInputError("tabulated nonlinearity: no stable positive zero u*");
        }
        f.u_star_ = root;
        return f;
    }

    double operator()(double u) const
    {
        if (kind_ == Kind::logistic) {
            return scale_ * u * (1.0 - u);
        }
        const auto seg = segment(u);
        const auto [u0, f0] = table_[seg];
        const auto [u1, f1] = table_[seg + 1];
        return f0 + (f1 - f0) * (u - u0) / (u1 - u0);
    }

    double derivative(double u) const
    {
        if (kind_ == Kind::logistic) {
            return scale_ * (1.0 - 2.0 * u);
        }
        const auto seg = segment(u);
        const auto [u0, f0] = table_[seg];
        const auto [u1, f1] = table_[seg + 1];
        return (f1 - f0) / (u1 - u0);
    }

    double u_star() const { return u_star_; }
    /// f'(0), the linearization value `a` in the eigenvalue problem.
    double slope_at_zero() const { return derivative(0.0); }

    /// max |f'| on [0, upper]
    double lipschitz(double upper) const
    {
        if (kind_ == Kind::logistic) {
            return scale_ * std::max(1.0, std::abs(1.0 - 2.0 * upper));
        }
        double lip = 0.0;
        for (std::size_t i = 0; i + 1 < table_.size(); ++i) {
            if (table_[i].first > upper && i > 0) {
                break;
            }
            lip = std::max(lip, std::abs(derivative(0.5 * (table_[i].first + table_[i + 1].first))));
        }
        if (upper > table_.back().first) {
            lip = std::max(lip, std::abs(derivative(upper)));
        }
        return lip;
    }

    /// Positive root of shift * u + f(u) = 0; equals u* when shift = 0.
    double shifted_root(double shift) const
    {
        if (shift == 0.0) {
            return u_star_;
        }
        auto g = [&](double u) { return shift * u + (*this)(u); };
        double lo = 1e-12;
        double hi = std::max(1.0, 2.0 * u_star_);
        if (!(g(lo) > 0.0)) {
            throw ModelInputError("shifted nonlinearity has no positive root (shift too negative)");
        }
        int guard = 0;
        while (g(hi) > 0.0) {
            hi *= 2.0;
            if (++guard > 60) {
                throw ModelInputError("shifted nonlinearity has no positive root (shift too large)");
            }
        }
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) > 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    std::string describe() const
    {
        if (kind_ == Kind::logistic) {
            return "logistic(scale=" + std::to_string(scale_) + ")";
        }
        return "tabulated(" + std::to_string(table_.size()) + " samples)";
    }

private:
    enum class Kind { logistic, tabulated };

    Nonlinearity() = default;

    std::size_t segment(double u) const
    {
        const auto it = std::upper_bound(table_.begin(), table_.end(), u,
                                         [](double v, const auto& s) { return v < s.first; });
        auto idx = static_cast<std::size_t>(std::distance(table_.begin(), it));
        idx = idx == 0 ? 0 : idx - 1;
        return std::min(idx, table_.size() - 2);
    }

    Kind kind_ = Kind::logistic;
    double scale_ = 1.0;
    double u_star_ = 1.0;
    std::vector<std::pair<double, double>> table_;
};

} // namespace nlfb
