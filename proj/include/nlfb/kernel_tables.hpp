#pragma once

// Lazily filled discretization of J~(r_i, r_j) on the uniform grid r_i = i * dr.
//
// Only the lower triangle (j <= i) is computed; the rest follows from
//   r_i^{N-1} J~(r_i, r_j) = r_j^{N-1} J~(r_j, r_i),
// and row 0 has the closed form J~(0, rho) = omega_N rho^{N-1} J(rho).
// Compact kernels store a band of width ceil(K/dr) + 1 and, by default, carry a
// per-row factor that makes the trapezoid row sum over the full support exactly 1.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <thread>
#include <vector>

#include "nlfb/errors.hpp"
#include "nlfb/kernel.hpp"

namespace nlfb {

struct TableOptions {
    /// Gauss-Legendre order per angular panel (fixed, no adaptive doubling).
    int order = 24;
    /// Rescale compact-kernel rows so the discrete row integral equals 1.
    bool normalize_rows = true;
    /// Worker threads for row fills.
    unsigned jobs = 1;
};

/// One computed row: raw J~(r_i, r_k) for k in [first, i].
struct TableRow {
    std::size_t first = 0;
    std::vector<double> lower;
    double scale = 1.0;
};

class KernelTables {
public:
    static constexpr std::size_t kDense = std::numeric_limits<std::size_t>::max();

    KernelTables(RadialKernel kernel, double dr, TableOptions opt = {})
        : kernel_(std::move(kernel)), dr_(dr), opt_(opt)
    {
        if (!(dr > 0.0)) {
            throw ModelInputError("kernel tables: dr must be positive");
        }
        band_ = kernel_.is_compact()
                    ? static_cast<std::size_t>(std::ceil(kernel_.support_radius() / dr_)) + 1
                    : kDense;
        const int n = kernel_.dim();
        row0_factor_ = sphere_area(n);
    }

    KernelTables(const KernelTables&) = delete;
    KernelTables& operator=(const KernelTables&) = delete;

    const RadialKernel& kernel() const { return kernel_; }
    double dr() const { return dr_; }
    int dim() const { return kernel_.dim(); }
    /// Half bandwidth in nodes, kDense for kernels with unbounded support.
    std::size_t band() const { return band_; }
    const TableOptions& options() const { return opt_; }

    /// Key for the persistent cache: kernel hash mixed with the quadrature order.
    std::uint64_t key() const
    {
        std::uint64_t h = kernel_.hash();
        h ^= static_cast<std::uint64_t>(opt_.order) * 0x9E3779B97F4A7C15ULL;
        return h;
    }

    double node(std::size_t i) const { return static_cast<double>(i) * dr_; }

    /// Number of rows whose values (including normalization) are final.
    std::size_t ready_rows() const
    {
        std::shared_lock lock(mutex_);
        return ready_;
    }

    std::size_t stored_rows() const
    {
        std::shared_lock lock(mutex_);
        return rows_.size();
    }

    /// Make rows [0, n) final. Fills rows up to n - 1 + band for compact kernels.
    void ensure(std::size_t n)
    {
        {
            std::shared_lock lock(mutex_);
            if (ready_ >= n) {
                return;
            }
        }
        std::unique_lock lock(mutex_);
        if (ready_ >= n) {
            return;
        }
        const std::size_t need = band_ == kDense ? n : n + band_;
        fill_rows(need);
        for (std::size_t i = ready_; i < n; ++i) {
            rows_[i]->scale = compute_scale(i);
        }
        ready_ = n;
    }

    /// Stable pointer to a stored row.
    const TableRow* row_ptr(std::size_t i) const
    {
        std::shared_lock lock(mutex_);
        if (i >= rows_.size()) {
            throw std::out_of_range("kernel tables: row not stored");
        }
        return rows_[i].get();
    }

    /// Raw J~(r_i, r_j) without row normalization. Rows max(i, j) must be stored.
    double raw(std::size_t i, std::size_t j) const
    {
        if (i == 0) {
            return row0_raw(j);
        }
        if (j <= i) {
            const TableRow* row = row_ptr(i);
            return j < row->first ? 0.0 : row->lower[j - row->first];
        }
        if (band_ != kDense && j - i > band_) {
            return 0.0;
        }
        const TableRow* row = row_ptr(j);
        const double v = i < row->first ? 0.0 : row->lower[i - row->first];
        return v * std::pow(static_cast<double>(j) / static_cast<double>(i), dim() - 1);
    }

    /// Normalized value used by the discrete operators. Row i must be ready.
    double value(std::size_t i, std::size_t j) const { return row_ptr(i)->scale * raw(i, j); }

    /// Trapezoid cumulative integrals int_0^{r_j} J~(r_i, rho) drho for j < ncols.
    std::vector<double> row_cumsum(std::size_t i, std::size_t ncols) const
    {
        std::vector<double> out(ncols, 0.0);
        for (std::size_t j = 1; j < ncols; ++j) {
            out[j] = out[j - 1] + 0.5 * dr_ * (value(i, j - 1) + value(i, j));
        }
        return out;
    }

    /// T(r_i, r_j) = 1 - int_0^{r_j} J~(r_i, rho) drho, clamped to [0, 1]. Evaluated
    /// with the exact exterior-mass integral rather than the discrete row sum.
    double tail_mass(std::size_t i, std::size_t j) const
    {
        return exterior_mass(kernel_, node(i), node(j));
    }

    /// Binary cache: "NLFBKT1\0", then little-endian 8-byte fields
    /// N, dr, key, row count, followed per row by (first, count, values...).
    void save(const std::filesystem::path& path) const
    {
        std::shared_lock lock(mutex_);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write kernel cache " + path.string());
        }
        out.write(kMagic, 8);
        put_u64(out, static_cast<std::uint64_t>(dim()));
        put_u64(out, std::bit_cast<std::uint64_t>(dr_));
        put_u64(out, key());
        put_u64(out, rows_.size());
        for (const auto& row : rows_) {
            put_u64(out, row->first);
            put_u64(out, row->lower.size());
            for (double v : row->lower) {
                put_u64(out, std::bit_cast<std::uint64_t>(v));
            }
        }
        if (!out) {
            throw std::runtime_error("failed writing kernel cache " + path.string());
        }
    }

    /// Load cached rows into an empty table if the file matches (N, dr, key).
    /// Returns false on mismatch, a missing file, or a table already in use; a
    /// corrupt file of the right identity throws.
    bool load(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            return false;
        }
        char magic[8] = {};
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kMagic, 8) != 0) {
            return false;
        }
        const auto n = get_u64(in);
        const auto dr_bits = get_u64(in);
        const auto key_in = get_u64(in);
        const auto count = get_u64(in);
        if (!in || n != static_cast<std::uint64_t>(dim()) ||
            dr_bits != std::bit_cast<std::uint64_t>(dr_) || key_in != key()) {
            return false;
        }
        std::vector<std::unique_ptr<TableRow>> rows;
        rows.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            auto row = std::make_unique<TableRow>();
            row->first = get_u64(in);
            const auto len = get_u64(in);
            if (!in || row->first > i || len != i - row->first + 1) {
                throw std::runtime_error("corrupt kernel cache " + path.string());
            }
            row->lower.resize(len);
            for (auto& v : row->lower) {
                v = std::bit_cast<double>(get_u64(in));
            }
            if (!in) {
                throw std::runtime_error("truncated kernel cache " + path.string());
            }
            rows.push_back(std::move(row));
        }
        std::unique_lock lock(mutex_);
        if (!rows_.empty()) {
            // rows may already be referenced by views
            return false;
        }
        rows_ = std::move(rows);
        return true;
    }

private:
    static constexpr char kMagic[8] = {'N', 'L', 'F', 'B', 'K', 'T', '1', '\0'};

    static void put_u64(std::ofstream& out, std::uint64_t v)
    {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) {
            b[i] = static_cast<unsigned char>(v >> (8 * i));
        }
        out.write(reinterpret_cast<const char*>(b), 8);
    }

    static std::uint64_t get_u64(std::ifstream& in)
    {
        unsigned char b[8] = {};
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        }
        return v;
    }

    double row0_raw(std::size_t j) const
    {
        const double rho = node(j);
        return row0_factor_ * std::pow(rho, dim() - 1) * kernel_(rho);
    }

    std::unique_ptr<TableRow> compute_row(std::size_t i) const
    {
        auto row = std::make_unique<TableRow>();
        row->first = band_ == kDense || i < band_ ? 0 : i - band_;
        row->lower.resize(i - row->first + 1);
        const QuadOptions q{opt_.order, false};
        const double r = node(i);
        for (std::size_t k = row->first; k <= i; ++k) {
            row->lower[k - row->first] = i == 0 ? 0.0 : j_tilde(kernel_, r, node(k), q);
        }
        return row;
    }

    // caller holds the exclusive lock
    void fill_rows(std::size_t need)
    {
        const std::size_t start = rows_.size();
        if (need <= start) {
            return;
        }
        std::vector<std::unique_ptr<TableRow>> fresh(need - start);
        const unsigned jobs = std::max(1u, opt_.jobs);
        if (jobs == 1 || fresh.size() < 2 * jobs) {
            for (std::size_t i = start; i < need; ++i) {
                fresh[i - start] = compute_row(i);
            }
        } else {
            std::vector<std::jthread> workers;
            for (unsigned w = 0; w < jobs; ++w) {
                workers.emplace_back([&, w] {
                    for (std::size_t i = start + w; i < need; i += jobs) {
                        fresh[i - start] = compute_row(i);
                    }
                });
            }
        }
        for (auto& row : fresh) {
            rows_.push_back(std::move(row));
        }
    }

    // caller holds the exclusive lock; rows up to i + band are stored
    double compute_scale(std::size_t i) const
    {
        if (!opt_.normalize_rows || band_ == kDense) {
            return 1.0;
        }
        double sum = 0.0;
        const std::size_t last = i + band_;
        for (std::size_t j = 0; j <= last; ++j) {
            const double w = j == 0 ? 0.5 * dr_ : dr_;
            sum += w * raw_locked(i, j);
        }
        return sum > 0.0 ? 1.0 / sum : 1.0;
    }

    double raw_locked(std::size_t i, std::size_t j) const
    {
        if (i == 0) {
            return row0_raw(j);
        }
        const std::size_t hi = std::max(i, j);
        const std::size_t lo = std::min(i, j);
        const TableRow& row = *rows_[hi];
        const double v = lo < row.first ? 0.0 : row.lower[lo - row.first];
        if (j <= i) {
            return v;
        }
        return v * std::pow(static_cast<double>(j) / static_cast<double>(i), dim() - 1);
    }

    RadialKernel kernel_;
    double dr_;
    TableOptions opt_;
    std::size_t band_;
    double row0_factor_;

    mutable std::shared_mutex mutex_;
    std::vector<std::unique_ptr<TableRow>> rows_;
    std::size_t ready_ = 0;
};

/// Single-threaded snapshot of table rows for fast operator application on the
/// grid nodes [0, n).
class TableView {
public:
    explicit TableView(KernelTables& tables) : tables_(&tables)
    {
        const int n = tables.dim();
        power_ = n - 1;
    }

    std::size_t size() const { return rows_.size(); }

    /// Extend to cover nodes [0, n); calls tables.ensure(n).
    void sync(std::size_t n)
    {
        if (rows_.size() >= n) {
            return;
        }
        auto& tables = *tables_;
        tables.ensure(n);
        const std::size_t need = tables.band() == KernelTables::kDense ? n : n + tables.band();
        while (stored_.size() < need) {
            stored_.push_back(tables.row_ptr(stored_.size()));
        }
        while (rows_.size() < n) {
            const std::size_t j = rows_.size();
            rows_.push_back(stored_[j]);
            weight_pow_.push_back(std::pow(static_cast<double>(j), power_));
            const double rho = tables.node(j);
            row0_.push_back(sphere_area(tables.dim()) * std::pow(rho, power_) *
                            tables.kernel()(rho));
        }
    }

    /// out_i = sum_{j < m} value(i, j) * x_j for i < m (m <= size()).
    void apply(std::span<const double> x, std::span<double> out, std::size_t m) const
    {
        std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m), 0.0);
        if (m == 0) {
            return;
        }
        for (std::size_t j = 0; j < m; ++j) {
            out[0] += row0_[j] * x[j];
        }
        out[0] *= rows_[0]->scale;
        for (std::size_t i = 1; i < m; ++i) {
            const TableRow& row = *rows_[i];
            const double xi = x[i];
            double acc = 0.0;
            for (std::size_t k = std::max<std::size_t>(row.first, 1); k <= i; ++k) {
                const double v = row.lower[k - row.first];
                acc += v * x[k];
                if (k < i) {
                    // mirrored entry J~(r_k, r_i) = (i/k)^{N-1} J~(r_i, r_k)
                    out[k] += rows_[k]->scale * v * weight_pow_[i] / weight_pow_[k] * xi;
                }
            }
            out[i] += row.scale * acc;
        }
    }

    double value(std::size_t i, std::size_t j) const
    {
        if (i == 0) {
            return rows_[0]->scale * row0_[j];
        }
        return tables_->value(i, j);
    }

private:
    KernelTables* tables_;
    int power_ = 1;
    std::vector<const TableRow*> stored_;
    std::vector<const TableRow*> rows_;
    std::vector<double> weight_pow_;
    std::vector<double> row0_;
};

} // namespace nlfb
