// nlfb: command-line front end for the nonlocal free boundary simulator.
//
// exit codes: 0 ok, 1 rejected model input, 2 numerical failure,
// 64 usage error / unknown subcommand, 66 unreadable config, 73 cannot write output

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlfb/analysis.hpp"
#include "nlfb/config.hpp"
#include "nlfb/eigen.hpp"
#include "nlfb/kernel.hpp"
#include "nlfb/kernel_tables.hpp"
#include "nlfb/semiwave.hpp"
#include "nlfb/solver.hpp"

#ifndef NLFB_VERSION
#define NLFB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace nlfb;

namespace {

class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

json echo_of(const Config& cfg)
{
    json j = json::object();
    for (const auto& [k, v] : cfg.echo) {
        j[k] = v;
    }
    return j;
}

/// Tracks files written by one command and emits manifest.json next to them.
class Outputs {
public:
    Outputs(std::string command, fs::path dir) : command_(std::move(command)), dir_(std::move(dir)), started_(utc_now())
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) {
            throw OutputError("cannot create output directory " + dir_.string() + ": " + ec.message());
        }
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    std::ofstream open(const std::string& name)
    {
        std::ofstream out(path(name));
        if (!out) {
            throw OutputError("cannot write " + path(name).string());
        }
        out.precision(17);
        files_.push_back(name);
        return out;
    }

    void write_json(const std::string& name, const json& j)
    {
        auto out = open(name);
        out << j.dump(2) << '\n';
    }

    void manifest(const json& config_echo, std::uint64_t kernel_hash)
    {
        json m;
        m["tool"] = "nlfb";
        m["version"] = NLFB_VERSION;
        m["command"] = command_;
        m["config"] = config_echo;
        m["kernel_hash"] = hex64(kernel_hash);
        m["started"] = started_;
        m["finished"] = utc_now();
        m["outputs"] = files_;
        std::ofstream out(path("manifest.json"));
        if (!out) {
            throw OutputError("cannot write " + path("manifest.json").string());
        }
        out << m.dump(2) << '\n';
    }

private:
    std::string command_;
    fs::path dir_;
    std::string started_;
    std::vector<std::string> files_;
};

fs::path cache_dir()
{
    if (const char* env = std::getenv("NLFB_CACHE_DIR"); env && *env) {
        return env;
    }
    return ".nlfb_cache";
}

fs::path cache_file(const KernelTables& t)
{
    return cache_dir() / ("tables_N" + std::to_string(t.dim()) + "_" + hex64(t.key()) + "_" +
                          hex64(std::bit_cast<std::uint64_t>(t.dr())) + ".bin");
}

/// Workspace with table rows restored from the cache when present.
Workspace cached_workspace(const RunConfig& cfg)
{
    Workspace ws = make_workspace(cfg);
    try {
        ws.tables->load(cache_file(*ws.tables));
    } catch (const std::runtime_error& e) {
        std::cerr << "warning: ignoring kernel cache: " << e.what() << '\n';
    }
    return ws;
}

void store_cache(const KernelTables& t, std::size_t rows_before)
{
    if (t.stored_rows() <= rows_before) {
        return;
    }
    std::error_code ec;
    fs::create_directories(cache_dir(), ec);
    const fs::path target = cache_file(t);
    const fs::path tmp = target.string() + ".tmp";
    try {
        t.save(tmp);
        fs::rename(tmp, target, ec);
    } catch (const std::runtime_error& e) {
        std::cerr << "warning: kernel cache not written: " << e.what() << '\n';
    }
}

std::string snapshot_name(double t)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "snapshot_%.6g.csv", t);
    return buf;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out_override, unsigned jobs)
{
    Config cfg = load_config(config_path);
    if (jobs > 0) {
        cfg.run.jobs = jobs;
    }
    Outputs out("simulate", out_override.empty() ? cfg.out_dir : out_override);
    Workspace ws = cached_workspace(cfg.run);
    const std::size_t rows_before = ws.tables->stored_rows();
    const Trajectory traj = run(cfg.run, ws);
    store_cache(*ws.tables, rows_before);
    const Classification cls = classify(traj, cfg.run);

    {
        auto csv = out.open("trajectory.csv");
        csv << "t,h,hdot,u_at_0,u_max,mass\n";
        for (const auto& r : traj.records) {
            csv << r.t << ',' << r.h << ',' << r.hdot << ',' << r.u_at_0 << ',' << r.u_max << ',' << r.mass << '\n';
        }
    }
    for (const auto& s : traj.snapshots) {
        auto csv = out.open(snapshot_name(s.t));
        csv << "r,u\n";
        for (std::size_t i = 0; i < s.r.size(); ++i) {
            csv << s.r[i] << ',' << s.u[i] << '\n';
        }
    }
    json summary;
    summary["verdict"] = to_string(cls.verdict);
    summary["reason"] = cls.reason;
    summary["h_final"] = traj.final_state.h;
    summary["t_final"] = traj.final_state.t;
    summary["L_star"] = traj.L_star ? json(*traj.L_star) : json(nullptr);
    summary["dt"] = traj.dt;
    summary["steps"] = traj.steps;
    summary["config_echo"] = echo_of(cfg);
    out.write_json("summary.json", summary);
    out.manifest(echo_of(cfg), cfg.run.kernel.hash());
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_semiwave(const std::string& config_path, const std::string& csv_path)
{
    const Config cfg = load_config(config_path);
    const auto res = speed_from_kernel(cfg.run.kernel, cfg.run.d, cfg.run.mu, cfg.run.f, cfg.semiwave);
    if (!res.finite) {
        std::cerr << "infinite speed: (J1) fails for kernel '" << cfg.run.kernel.name() << "' (beta = "
                  << cfg.run.kernel.beta() << " <= N + 1); the front accelerates\n";
        return 1;
    }
    const auto& s = *res.solution;
    json j;
    j["c0"] = s.c0;
    j["u_star_hat"] = s.u_star_hat;
    j["residual_pde"] = s.residual_pde;
    j["residual_speed"] = s.residual_speed;
    j["M"] = s.M;
    j["dx"] = s.dx;
    Outputs out("semiwave", cfg.out_dir);
    out.write_json("semiwave.json", j);
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) {
            throw OutputError("cannot write " + csv_path);
        }
        csv.precision(17);
        csv << "x,phi\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            csv << s.x[i] << ',' << s.phi[i] << '\n';
        }
    }
    out.manifest(echo_of(cfg), cfg.run.kernel.hash());
    std::cout.precision(17);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_eigen(const std::string& config_path, std::optional<double> L, bool find_lstar)
{
    const Config cfg = load_config(config_path);
    const double a = cfg.run.f.slope_at_zero();
    json j;
    j["d"] = cfg.run.d;
    j["a"] = a;
    if (find_lstar) {
        const auto ls = find_L_star(cfg.run.kernel, cfg.run.d, a);
        j["L_star"] = ls.L_star;
        j["bracket"] = {ls.lo, ls.hi};
        j["lambda1_at_L_star"] = ls.lambda_at;
    }
    if (L) {
        const auto r = lambda1(cfg.run.kernel, {cfg.run.d, a, *L});
        j["L"] = *L;
        j["lambda1"] = r.lambda1;
        j["residual"] = r.residual;
        j["iterations"] = r.iterations;
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_kernel_table(const std::string& config_path, double rmax)
{
    Config cfg = load_config(config_path);
    const RadialKernel& k = cfg.run.kernel;
    if (!(rmax > 0.0)) {
        rmax = 2.0 * k.length_scale();
    }
    TableOptions opt;
    opt.jobs = cfg.run.jobs;
    opt.normalize_rows = false;
    KernelTables tables(k, cfg.run.dr, opt);
    const auto n = static_cast<std::size_t>(std::floor(rmax / cfg.run.dr + 1e-9)) + 1;
    try {
        tables.load(cache_file(tables));
    } catch (const std::runtime_error& e) {
        std::cerr << "warning: ignoring kernel cache: " << e.what() << '\n';
    }
    const std::size_t before = tables.stored_rows();
    tables.ensure(n);
    store_cache(tables, before);

    Outputs out("kernel-table", cfg.out_dir);
    {
        auto csv = out.open("kernel_table.csv");
        csv << "r,rho,jtilde,jstar_of_diff\n";
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                csv << tables.node(i) << ',' << tables.node(j) << ',' << tables.raw(i, j) << ','
                    << j_star(k, tables.node(i) - tables.node(j)) << '\n';
            }
        }
    }
    out.manifest(echo_of(cfg), k.hash());
    std::cout << out.path("kernel_table.csv").string() << '\n';
    return 0;
}

Series read_trajectory(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigFileError("cannot read trajectory " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ModelInputError("trajectory " + path + " is empty");
    }
    std::vector<std::string> cols;
    {
        std::istringstream hs(line);
        std::string c;
        while (std::getline(hs, c, ',')) {
            cols.push_back(detail::trim(c));
        }
    }
    const auto it_t = std::find(cols.begin(), cols.end(), "t");
    const auto it_h = std::find(cols.begin(), cols.end(), "h");
    if (it_t == cols.end() || it_h == cols.end()) {
        throw ModelInputError("trajectory " + path + " needs columns t and h");
    }
    const auto ct = static_cast<std::size_t>(it_t - cols.begin());
    const auto ch = static_cast<std::size_t>(it_h - cols.begin());
    Series s;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) {
            f.push_back(detail::trim(c));
        }
        if (f.size() <= std::max(ct, ch)) {
            throw ModelInputError("trajectory " + path + ": short row '" + line + "'");
        }
        s.t.push_back(detail::to_number("t", f[ct]));
        s.h.push_back(detail::to_number("h", f[ch]));
    }
    return s;
}

int cmd_fit(const std::string& model, const std::string& traj_path, std::optional<double> c0,
            const std::string& config_path, const FitWindow& w, const std::string& plot_path)
{
    const Series s = read_trajectory(traj_path);
    FitResult r;
    std::function<std::pair<double, double>(double, double)> plot;
    if (model == "speed") {
        r = estimate_speed(s, w);
        plot = [](double t, double h) { return std::pair{t, h}; };
    } else if (model == "logshift") {
        if (!c0) {
            if (config_path.empty()) {
                throw ModelInputError("fit --model logshift needs --c0 or --config");
            }
            const Config cfg = load_config(config_path);
            const auto sp = speed_from_kernel(cfg.run.kernel, cfg.run.d, cfg.run.mu, cfg.run.f, cfg.semiwave);
            if (!sp.finite) {
                throw ModelInputError("infinite speed: (J1) fails, no c0 for a log-shift fit");
            }
            c0 = sp.c0;
        }
        r = estimate_log_shift(s, *c0, w);
        plot = [c = *c0](double t, double h) { return std::pair{std::log(t), c * t - h}; };
    } else if (model == "power") {
        r = estimate_power(s, w);
        plot = [](double t, double h) { return std::pair{std::log(t), std::log(h)}; };
    } else if (model == "tlogt") {
        r = estimate_t_log_t(s, w);
        plot = [](double t, double h) { return std::pair{t, h / (t * std::log(t))}; };
    } else {
        throw ModelInputError("fit: model must be speed, logshift, power or tlogt");
    }
    json j;
    j["model"] = to_string(r.model);
    j["a"] = r.a;
    j["b"] = r.b;
    j["r2"] = r.r2;
    j["t_a"] = r.t_a;
    j["t_b"] = r.t_b;
    j["points"] = r.points;
    if (r.model == FitModel::t_log_t) {
        j["max_over_min"] = r.max_over_min;
    }
    if (c0) {
        j["c0"] = *c0;
    }
    j["flagged"] = r.flagged;
    j["note"] = r.note;
    if (!plot_path.empty()) {
        std::ofstream out(plot_path);
        if (!out) {
            throw OutputError("cannot write " + plot_path);
        }
        out.precision(17);
        for (std::size_t i = 0; i < s.t.size(); ++i) {
            if (s.t[i] >= r.t_a && s.t[i] <= r.t_b) {
                const auto [x, y] = plot(s.t[i], s.h[i]);
                out << x << ' ' << y << '\n';
            }
        }
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::vector<double>& values,
              const std::string& out_override, unsigned jobs)
{
    Config cfg = load_config(config_path);
    if (jobs > 0) {
        cfg.run.jobs = jobs;
    }
    const SweepParam p = parse_sweep_param(param);
    const auto rows = sweep(cfg.run, p, values, cfg.run.jobs);
    Outputs out("sweep", out_override.empty() ? cfg.out_dir : out_override);
    {
        auto csv = out.open("sweep_" + param + ".csv");
        write_sweep_csv(csv, param, rows);
    }
    out.manifest(echo_of(cfg), cfg.run.kernel.hash());
    write_sweep_csv(std::cout, param, rows);
    return 0;
}

int cmd_validate(const std::string& config_path)
{
    const Config cfg = load_config(config_path);
    const RadialKernel& k = cfg.run.kernel;
    const auto rep = validate_kernel(k);
    std::cout << "kernel        " << k.name() << " N=" << k.dim();
    if (!k.is_compact()) {
        std::cout << " beta=" << k.beta();
    }
    std::cout << '\n'
              << std::setprecision(10) << "normalization " << rep.normalization << '\n'
              << "J(0)          " << rep.j_at_zero << '\n'
              << "min sampled   " << rep.min_sampled << '\n'
              << "(J1)          " << (rep.moment_n_finite ? "holds" : "fails, accelerated spreading") << '\n'
              << "f'(0)         " << cfg.run.f.slope_at_zero() << ", u* = " << cfg.run.f.u_star() << '\n'
              << "f'(0) vs d    "
              << (cfg.run.f.slope_at_zero() >= cfg.run.d ? "f'(0) >= d, spreading for every u0" : "f'(0) < d")
              << '\n';
    for (const auto& p : rep.problems) {
        std::cout << "problem       " << p << '\n';
    }
    std::cout << (rep.accepted ? "accepted" : "rejected") << '\n';
    return rep.accepted ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    static const std::set<std::string> commands = {"simulate", "semiwave", "eigen",   "kernel-table",
                                                   "fit",      "sweep",    "validate"};

    CLI::App app{"Nonlocal Fisher-KPP free boundary simulator"};
    app.set_version_flag("--version", NLFB_VERSION);
    app.require_subcommand(1);

    std::string config;
    std::string out_dir;
    unsigned jobs = 0;

    auto* sim = app.add_subcommand("simulate", "Integrate one run; writes trajectory, snapshots and summary");
    sim->add_option("--config", config, "Config file")->required();
    sim->add_option("--out", out_dir, "Output directory (overrides out_dir)");
    sim->add_option("--jobs", jobs, "Worker threads for kernel table fills");

    std::string csv;
    auto* sw = app.add_subcommand("semiwave", "Solve the semi-wave problem for c0");
    sw->add_option("--config", config, "Config file")->required();
    sw->add_option("--csv", csv, "Write the profile (x, phi) here");

    std::optional<double> L;
    bool find_lstar = false;
    auto* eig = app.add_subcommand("eigen", "Principal eigenvalue on a ball, or the critical radius L*");
    eig->add_option("--config", config, "Config file")->required();
    eig->add_option("--L", L, "Ball radius");
    eig->add_flag("--find-lstar", find_lstar, "Locate L* where lambda1 changes sign");

    double rmax = 0.0;
    auto* kt = app.add_subcommand("kernel-table", "Tabulate J~(r, rho) and J*(r - rho) on the grid");
    kt->add_option("--config", config, "Config file")->required();
    kt->add_option("--rmax", rmax, "Largest radius (default twice the kernel scale)");

    std::string model;
    std::string traj;
    std::optional<double> c0;
    std::string plot;
    FitWindow window;
    auto* fit = app.add_subcommand("fit", "Fit an asymptotic law to a trajectory CSV");
    fit->add_option("--model", model, "speed, logshift, power or tlogt")
        ->required()
        ->check(CLI::IsMember({"speed", "logshift", "power", "tlogt"}));
    fit->add_option("--traj", traj, "Trajectory CSV with t and h columns")->required();
    fit->add_option("--c0", c0, "Semi-wave speed for logshift");
    fit->add_option("--config", config, "Config used to compute c0 when --c0 is absent");
    fit->add_option("--tail", window.tail, "Tail fraction of the time span");
    fit->add_option("--from", window.from, "Window start");
    fit->add_option("--to", window.to, "Window end");
    fit->add_option("--plot-data", plot, "Write the two-column transformed data on the window");

    std::string param;
    std::vector<double> values;
    auto* swp = app.add_subcommand("sweep", "Run a parameter sweep and tabulate verdicts");
    swp->add_option("--config", config, "Config file")->required();
    swp->add_option("--param", param, "mu, h0, d or beta")->required();
    swp->add_option("--values", values, "Comma separated values")->delimiter(',');
    swp->add_option("--out", out_dir, "Output directory (overrides out_dir)");
    swp->add_option("--jobs", jobs, "Concurrent runs");

    auto* val = app.add_subcommand("validate", "Check the config and the kernel assumptions");
    val->add_option("--config", config, "Config file")->required();

    if (argc > 1 && argv[1][0] != '-' && !commands.count(argv[1])) {
        std::cerr << "nlfb: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
        return 64;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 64;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(config, out_dir, jobs);
        }
        if (sw->parsed()) {
            return cmd_semiwave(config, csv);
        }
        if (eig->parsed()) {
            if (!L && !find_lstar) {
                std::cerr << "nlfb eigen: give --L or --find-lstar\n";
                return 64;
            }
            return cmd_eigen(config, L, find_lstar);
        }
        if (kt->parsed()) {
            return cmd_kernel_table(config, rmax);
        }
        if (fit->parsed()) {
            return cmd_fit(model, traj, c0, config, window, plot);
        }
        if (swp->parsed()) {
            return cmd_sweep(config, param, values, out_dir, jobs);
        }
        if (val->parsed()) {
            return cmd_validate(config);
        }
    } catch (const ConfigFileError& e) {
        std::cerr << "nlfb: " << e.what() << '\n';
        return 66;
    } catch (const ModelInputError& e) {
        std::cerr << "nlfb: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "nlfb: numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const OutputError& e) {
        std::cerr << "nlfb: " << e.what() << '\n';
        return 73;
    } catch (const std::exception& e) {
        std::cerr << "nlfb: " << e.what() << '\n';
        return 2;
    }
    return 64;
}
