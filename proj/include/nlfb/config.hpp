#pragma once

// Flat key = value run configuration. '#' starts a comment; blank lines are
// ignored; every key may appear once. Unknown keys are rejected.
//
//   kernel.kind     uniform | fat_tail          (uniform)
//   kernel.beta     tail exponent, fat_tail only
//   kernel.scale    ball radius (uniform) or length scale (fat_tail)   (1)
//   N               space dimension             (2)
//   d, mu           diffusion rate, expansion coefficient   (1, 1)
//   f.kind          logistic | table            (logistic)
//   f.scale         logistic f(u) = scale u (1 - u)   (1)
//   f.table         "u:f, u:f, ..." samples starting at 0:0
//   h0, u0.amplitude, dr, dt, t_end, record_stride, snapshot_stride
//   scheme          euler | heun
//   stop_on_verdict true | false
//   jobs            worker threads for table fills and sweeps
//   out_dir         output directory            (out)
//   classify.eps_h, classify.eps_u, classify.window, classify.min_records
//   semiwave.dx, semiwave.M, semiwave.M_max

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nlfb/errors.hpp"
#include "nlfb/semiwave.hpp"
#include "nlfb/solver.hpp"

namespace nlfb {

/// The config file could not be opened (CLI exit code 66).
class ConfigFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Config {
    RunConfig run;
    SemiWaveOptions semiwave;
    std::string out_dir = "out";
    /// keys and values as written, in file order
    std::vector<std::pair<std::string, std::string>> echo;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_number(const std::string& key, const std::string& text)
{
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
        throw ModelInputError("config: " + key + " = '" + text + "' is not a finite number");
    }
    return v;
}

inline std::size_t to_count(const std::string& key, const std::string& text)
{
    const double v = to_number(key, text);
    if (v < 0.0 || v != std::floor(v)) {
        throw ModelInputError("config: " + key + " must be a nonnegative integer");
    }
    return static_cast<std::size_t>(v);
}

inline bool to_bool(const std::string& key, const std::string& text)
{
    if (text == "true" || text == "1" || text == "yes") {
        return true;
    }
    if (text == "false" || text == "0" || text == "no") {
        return false;
    }
    throw ModelInputError("config: " + key + " must be true or false");
}

inline std::vector<std::pair<double, double>> to_table(const std::string& key, const std::string& text)
{
    std::vector<std::pair<double, double>> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            continue;
        }
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            throw ModelInputError("config: " + key + " entries must look like u:f");
        }
        out.emplace_back(to_number(key, trim(item.substr(0, colon))), to_number(key, trim(item.substr(colon + 1))));
    }
    return out;
}

} // namespace detail

inline Config parse_config(std::istream& in)
{
    std::map<std::string, std::string> kv;
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ModelInputError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ModelInputError("config line " + std::to_string(lineno) + ": empty key or value");
        }
        if (!kv.emplace(key, value).second) {
            throw ModelInputError("config: duplicate key '" + key + "'");
        }
        cfg.echo.emplace_back(key, value);
    }

    auto take = [&kv](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) {
            return std::nullopt;
        }
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto number = [&](const std::string& key, double& dst) {
        if (auto v = take(key)) {
            dst = detail::to_number(key, *v);
        }
    };
    auto count = [&](const std::string& key, std::size_t& dst) {
        if (auto v = take(key)) {
            dst = detail::to_count(key, *v);
        }
    };

    RunConfig& run = cfg.run;
    double dim = 2.0;
    number("N", dim);
    if (dim != std::floor(dim) || dim < 2.0 || dim > 16.0) {
        throw ModelInputError("config: N must be an integer >= 2");
    }
    const std::string kind = take("kernel.kind").value_or("uniform");
    double scale = 1.0;
    number("kernel.scale", scale);
    const auto beta = take("kernel.beta");
    if (kind == "uniform") {
        if (beta) {
            throw ModelInputError("config: kernel.beta applies to fat_tail kernels only");
        }
        run.kernel = RadialKernel::uniform(static_cast<int>(dim), scale);
    } else if (kind == "fat_tail") {
        if (!beta) {
            throw ModelInputError("config: fat_tail kernel needs kernel.beta");
        }
        run.kernel = RadialKernel::fat_tail(static_cast<int>(dim), detail::to_number("kernel.beta", *beta), scale);
    } else {
        throw ModelInputError("config: kernel.kind must be uniform or fat_tail (got '" + kind + "')");
    }

    number("d", run.d);
    number("mu", run.mu);
    if (!(run.d > 0.0)) {
        throw ModelInputError("config: d must be positive");
    }
    const std::string fkind = take("f.kind").value_or("logistic");
    const auto fscale = take("f.scale");
    const auto ftable = take("f.table");
    if (fkind == "logistic") {
        if (ftable) {
            throw ModelInputError("config: f.table needs f.kind = table");
        }
        run.f = Nonlinearity::logistic(fscale ? detail::to_number("f.scale", *fscale) : 1.0);
    } else if (fkind == "table") {
        if (!ftable || fscale) {
            throw ModelInputError("config: f.kind = table takes f.table and no f.scale");
        }
        run.f = Nonlinearity::tabulated(detail::to_table("f.table", *ftable));
    } else {
        throw ModelInputError("config: f.kind must be logistic or table (got '" + fkind + "')");
    }

    number("h0", run.h0);
    number("u0.amplitude", run.u0_amplitude);
    number("dr", run.dr);
    number("dt", run.dt);
    number("t_end", run.t_end);
    count("record_stride", run.record_stride);
    count("snapshot_stride", run.snapshot_stride);
    if (auto v = take("scheme")) {
        if (*v == "euler") {
            run.scheme = Scheme::euler;
        } else if (*v == "heun") {
            run.scheme = Scheme::heun;
        } else {
            throw ModelInputError("config: scheme must be euler or heun");
        }
    }
    if (auto v = take("stop_on_verdict")) {
        run.stop_on_verdict = detail::to_bool("stop_on_verdict", *v);
    }
    std::size_t jobs = run.jobs;
    count("jobs", jobs);
    run.jobs = static_cast<unsigned>(std::max<std::size_t>(1, jobs));
    if (auto v = take("out_dir")) {
        cfg.out_dir = *v;
    }

    number("classify.eps_h", run.thresholds.eps_h);
    number("classify.eps_u", run.thresholds.eps_u);
    number("classify.window", run.thresholds.window);
    count("classify.min_records", run.thresholds.min_records);

    number("semiwave.dx", cfg.semiwave.dx);
    number("semiwave.M", cfg.semiwave.M);
    number("semiwave.M_max", cfg.semiwave.M_max);

    if (!kv.empty()) {
        throw ModelInputError("config: unknown key '" + kv.begin()->first + "'");
    }
    if (!(run.h0 > 0.0) || !(run.dr > 0.0) || !(run.t_end >= 0.0) || run.dt < 0.0 || run.record_stride == 0) {
        throw ModelInputError("config: need h0 > 0, dr > 0, t_end >= 0, dt >= 0 and record_stride >= 1");
    }
    return cfg;
}

inline Config load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigFileError("cannot read config " + path.string());
    }
    return parse_config(in);
}

} // namespace nlfb
