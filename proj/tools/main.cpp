// ionmodes: command-line front end for the ion-crystal toolkit.
//
// Unit convention at this boundary: every frequency read from or written to
// the user is in kHz; the library itself works in Hz / dimensionless
// parameters, and the conversion happens here and only here. CSV output uses
// '.' as the decimal mark, ',' as the separator, and always carries a header
// row. JSON output is emitted with a stable key order so that the same argv
// and seed produce byte-identical files.

#include "ioncrystal/equilibrium.hpp"
#include "ioncrystal/errors.hpp"
#include "ioncrystal/fitting.hpp"
#include "ioncrystal/mathieu.hpp"
#include "ioncrystal/modes.hpp"
#include "ioncrystal/modes_flt.hpp"
#include "ioncrystal/modes_ppt.hpp"
#include "ioncrystal/orbit.hpp"
#include "ioncrystal/transitions.hpp"
#include "ioncrystal/trap.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using ioncrystal::AXIS_X;
using ioncrystal::AXIS_Y;
using ioncrystal::AXIS_Z;
using json = nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;
constexpr double kDefaultFRfKhz = 35070.0; // drive Omega / (2 pi) in kHz
constexpr std::uint64_t kDefaultSeed = 20177;

double omega_from_khz(double f_rf_khz) { return 2.0 * kPi * 1e3 * f_rf_khz; }
double khz(double f_hz) { return f_hz / 1e3; }

// Shortest round-trip decimal representation, locale-free.
std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int default_jobs() {
    if (const char* env = std::getenv("IONMODES_JOBS")) {
        int v = 0;
        const auto res = std::from_chars(env, env + std::strlen(env), v);
        if (res.ec == std::errc() && *res.ptr == '\0' && v >= 1) return v;
        throw ioncrystal::DomainError(
            "IONMODES_JOBS must be a positive integer, got '" +
            std::string(env) + "'");
    }
    return 1;
}

// ---------------------------------------------------------------------------
// Trap parameter source: exactly one of {--config FILE, all four inline
// flags}. The config file is plain "key = value" text with the keys
// f_rf_khz, q_y, a_y, a_z; '#' starts a comment.
// ---------------------------------------------------------------------------

struct TrapArgs {
    std::string config_path;
    double f_rf_khz = 0.0;
    double q_y = 0.0;
    double a_y = 0.0;
    double a_z = 0.0;
    CLI::Option* config_opt = nullptr;
    std::array<CLI::Option*, 4> inline_opts{};
};

void add_trap_options(CLI::App* sub, TrapArgs& t) {
    t.config_opt = sub->add_option(
        "--config", t.config_path,
        "trap config file (keys: f_rf_khz, q_y, a_y, a_z)");
    t.inline_opts[0] = sub->add_option("--f-rf-khz", t.f_rf_khz,
                                       "drive frequency Omega/(2 pi) in kHz");
    t.inline_opts[1] = sub->add_option("--q-y", t.q_y, "rf drive parameter q_y");
    t.inline_opts[2] = sub->add_option("--a-y", t.a_y, "dc parameter a_y");
    t.inline_opts[3] = sub->add_option("--a-z", t.a_z, "dc parameter a_z");
    for (auto* o : t.inline_opts) t.config_opt->excludes(o);
}

std::map<std::string, double> parse_trap_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ioncrystal::DomainError("cannot open config file '" + path + "'");
    std::map<std::string, double> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ioncrystal::DomainError("config '" + path + "' line " +
                                          std::to_string(lineno) +
                                          ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (key != "f_rf_khz" && key != "q_y" && key != "a_y" && key != "a_z")
            throw ioncrystal::DomainError("config '" + path + "' line " +
                                          std::to_string(lineno) +
                                          ": unknown key '" + key + "'");
        if (kv.count(key))
            throw ioncrystal::DomainError("config '" + path + "' line " +
                                          std::to_string(lineno) +
                                          ": duplicate key '" + key + "'");
        try {
            std::size_t used = 0;
            const double parsed = std::stod(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
            kv[key] = parsed;
        } catch (const std::exception&) {
            throw ioncrystal::DomainError("config '" + path + "' line " +
                                          std::to_string(lineno) +
                                          ": cannot parse value '" + val +
                                          "' for key '" + key + "'");
        }
    }
    for (const char* key : {"f_rf_khz", "q_y", "a_y", "a_z"})
        if (!kv.count(key))
            throw ioncrystal::DomainError("config '" + path +
                                          "': missing key '" +
                                          std::string(key) + "'");
    return kv;
}

struct TrapParams {
    double f_rf_khz = 0.0;
    double q_y = 0.0;
    double a_y = 0.0;
    double a_z = 0.0;
};

TrapParams resolve_trap(const TrapArgs& t) {
    const bool has_config = t.config_opt->count() > 0;
    int n_inline = 0;
    for (const auto* o : t.inline_opts)
        if (o->count() > 0) ++n_inline;
    if (has_config) {
        const auto kv = parse_trap_config_file(t.config_path);
        return {kv.at("f_rf_khz"), kv.at("q_y"), kv.at("a_y"), kv.at("a_z")};
    }
    if (n_inline != 4)
        throw ioncrystal::DomainError(
            "trap parameters required: pass --config FILE or all of "
            "--f-rf-khz --q-y --a-y --a-z");
    return {t.f_rf_khz, t.q_y, t.a_y, t.a_z};
}

ioncrystal::TrapConfig make_trap(const TrapParams& p) {
    return ioncrystal::TrapConfig::make(omega_from_khz(p.f_rf_khz), p.q_y,
                                        p.a_y, p.a_z);
}

json trap_json(const TrapParams& p) {
    return json{{"f_rf_khz", p.f_rf_khz},
                {"q_y", p.q_y},
                {"a_y", p.a_y},
                {"a_z", p.a_z}};
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out)
        throw ioncrystal::DomainError("cannot open output file '" + out_path +
                                      "'");
    out << text;
}

void emit_json(const json& j, const std::string& out_path) {
    emit(j.dump(2) + "\n", out_path);
}

json positions_json(const ioncrystal::Positions& u) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        rows.push_back({u(i, 0), u(i, 1), u(i, 2)});
    return rows;
}

json vector_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json modeset_json(const ioncrystal::ModeSet& set, bool with_vectors) {
    json modes = json::array();
    for (const auto& m : set.modes) {
        json jm{{"tag", m.tag.str()},
                {"beta", m.beta},
                {"freq_khz", khz(m.freq_hz)},
                {"degenerate", m.degenerate}};
        if (with_vectors) jm["vector"] = vector_json(m.vector);
        modes.push_back(std::move(jm));
    }
    return modes;
}

// CSV cells must stay comma-free; error strings get ',' and '\n' replaced.
std::string csv_safe(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

// ---------------------------------------------------------------------------
// Measurement CSV (tag,freq_khz,sigma_khz)
// ---------------------------------------------------------------------------

std::vector<ioncrystal::Measurement> read_measurements(
    const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ioncrystal::DomainError("cannot open data file '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw ioncrystal::DomainError("data file '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "tag,freq_khz,sigma_khz")
        throw ioncrystal::DomainError(
            "data file '" + path +
            "': expected header 'tag,freq_khz,sigma_khz', got '" + line + "'");
    std::vector<ioncrystal::Measurement> data;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 3)
            throw ioncrystal::DomainError(
                "data file '" + path + "' line " + std::to_string(lineno) +
                ": expected 3 comma-separated fields");
        const auto num = [&](const std::string& s) {
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::exception&) {
                throw ioncrystal::DomainError(
                    "data file '" + path + "' line " + std::to_string(lineno) +
                    ": cannot parse number '" + s + "'");
            }
        };
        data.push_back({cells[0], 1e3 * num(cells[1]), 1e3 * num(cells[2])});
    }
    return data;
}

// ---------------------------------------------------------------------------
// Range parsing: "lo:hi" and "lo:hi:step"
// ---------------------------------------------------------------------------

std::vector<double> split_numbers(const std::string& s, char sep,
                                  const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, sep)) {
        try {
            std::size_t used = 0;
            const double v = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ioncrystal::DomainError("cannot parse " + what + " '" + s +
                                          "'");
        }
    }
    return out;
}

std::pair<double, double> parse_range(const std::string& s) {
    const auto v = split_numbers(s, ':', "range (expected LO:HI)");
    if (v.size() != 2)
        throw ioncrystal::DomainError("range must be LO:HI, got '" + s + "'");
    return {v[0], v[1]};
}

std::vector<double> parse_grid(const std::string& s) {
    const auto v = split_numbers(s, ':', "grid (expected LO:HI:STEP)");
    if (v.size() != 3)
        throw ioncrystal::DomainError("grid must be LO:HI:STEP, got '" + s +
                                      "'");
    const double lo = v[0], hi = v[1], step = v[2];
    if (!(step > 0.0) || !(hi >= lo))
        throw ioncrystal::DomainError("grid needs HI >= LO and STEP > 0, got '" +
                                      s + "'");
    std::vector<double> grid;
    for (int k = 0;; ++k) {
        const double q = lo + k * step;
        if (q > hi + 1e-12 * std::max(1.0, std::abs(hi))) break;
        grid.push_back(q);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Shared sweep-q runner (sweep-q and reproduce-fig4)
// ---------------------------------------------------------------------------

struct SweepQArgs {
    std::string grid = "0.05:0.5:0.05";
    double f_cm_y_khz = 1690.693;
    double f_cm_z_khz = 1239.540;
    double f_rf_khz = kDefaultFRfKhz;
    std::uint64_t seed = kDefaultSeed;
    int jobs = 0; // 0 = use IONMODES_JOBS / 1
};

std::vector<ioncrystal::QSweepRow> run_sweep_q(const SweepQArgs& a) {
    ioncrystal::QSweepOptions opts;
    opts.omega_rf = omega_from_khz(a.f_rf_khz);
    opts.f_cm_y_hz = 1e3 * a.f_cm_y_khz;
    opts.f_cm_z_hz = 1e3 * a.f_cm_z_khz;
    opts.q_grid = parse_grid(a.grid);
    opts.seed = a.seed;
    opts.jobs = a.jobs > 0 ? a.jobs : default_jobs();
    return ioncrystal::zz_shift_vs_q(opts);
}

std::string sweep_q_csv(const std::vector<ioncrystal::QSweepRow>& rows) {
    std::string csv = "q,ok,error,zz_b_khz,zz_a_khz,zz_b_ppt_khz,zz_a_ppt_khz\n";
    for (const auto& r : rows) {
        csv += fmt_double(r.q);
        csv += r.ok ? ",1," : ",0,";
        csv += csv_safe(r.error);
        if (r.ok) {
            csv += "," + fmt_double(khz(r.zz_b_hz));
            csv += "," + fmt_double(khz(r.zz_a_hz));
        } else {
            csv += ",,";
        }
        csv += "," + fmt_double(khz(r.zz_b_ppt_hz));
        csv += "," + fmt_double(khz(r.zz_a_ppt_hz));
        csv += "\n";
    }
    return csv;
}

json sweep_q_json_rows(const std::vector<ioncrystal::QSweepRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json row{{"q", r.q}, {"ok", r.ok}, {"error", r.error}};
        if (r.ok) {
            row["zz_b_khz"] = khz(r.zz_b_hz);
            row["zz_a_khz"] = khz(r.zz_a_hz);
        } else {
            row["zz_b_khz"] = nullptr;
            row["zz_a_khz"] = nullptr;
        }
        row["zz_b_ppt_khz"] = khz(r.zz_b_ppt_hz);
        row["zz_a_ppt_khz"] = khz(r.zz_a_ppt_hz);
        arr.push_back(std::move(row));
    }
    return arr;
}

// ---------------------------------------------------------------------------
// Fit plumbing (fit and reproduce-table1)
// ---------------------------------------------------------------------------

json fit_json(const ioncrystal::FitResult& fit,
              const std::vector<ioncrystal::Measurement>& data) {
    json meas = json::array();
    for (const auto& m : data)
        meas.push_back({{"tag", m.tag},
                        {"freq_khz", khz(m.freq_hz)},
                        {"sigma_khz", khz(m.sigma_hz)}});
    json pred = json::object();
    for (const auto& [tag, f_hz] : fit.predicted_hz) pred[tag] = khz(f_hz);
    json resid = json::array();
    for (const double r : fit.residuals) resid.push_back(r);
    json cov = json::array();
    for (int i = 0; i < 3; ++i)
        cov.push_back({fit.covariance(i, 0), fit.covariance(i, 1),
                       fit.covariance(i, 2)});
    return json{{"model", ioncrystal::to_string(fit.model)},
                {"f_rf_khz", khz(fit.omega_rf / (2.0 * kPi))},
                {"q_y", fit.q_y},
                {"a_y", fit.a_y},
                {"a_z", fit.a_z},
                {"a_x", fit.a_x},
                {"chi2", fit.chi2},
                {"dof", fit.dof},
                {"p_value", fit.p_value},
                {"iterations", fit.iterations},
                {"param_sigma",
                 {{"q_y", fit.param_sigma[0]},
                  {"a_y", fit.param_sigma[1]},
                  {"a_z", fit.param_sigma[2]}}},
                {"covariance", std::move(cov)},
                {"measurements", std::move(meas)},
                {"predicted_khz", std::move(pred)},
                {"residuals", std::move(resid)}};
}

const ioncrystal::Measurement& find_tag(
    const std::vector<ioncrystal::Measurement>& data, const std::string& tag) {
    for (const auto& m : data)
        if (m.tag == tag) return m;
    throw ioncrystal::DomainError("dataset has no measurement tagged '" + tag +
                                  "'");
}

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

void run_mathieu(double a, double q, std::optional<double> target_beta,
                 const std::string& out_path) {
    const auto sol = ioncrystal::mathieu_solve(a, q);
    json j{{"a", sol.a},
           {"q", sol.q},
           {"stable", sol.stable},
           {"beta", sol.stable ? json(sol.beta) : json(nullptr)},
           {"monodromy_trace", sol.monodromy.trace()}};
    if (target_beta)
        j["a_for_target_beta"] = ioncrystal::a_for_target_beta(q, *target_beta);
    emit_json(j, out_path);
}

void run_equilibrium(const TrapParams& p, int n_ions, std::uint64_t seed,
                     int starts, const std::string& out_path) {
    const auto trap = make_trap(p);
    ioncrystal::EquilibriumOptions opts;
    opts.seed = seed;
    opts.random_starts = starts;
    const auto crystal = ioncrystal::find_equilibrium(trap, n_ions, opts);
    const auto b = ioncrystal::betas_of(trap);
    json j{{"n_ions", crystal.n_ions},
           {"trap", trap_json(p)},
           {"betas", {{"x", b.x}, {"y", b.y}, {"z", b.z}}},
           {"secular_khz",
            {{"x", khz(trap.secular_frequency_hz(AXIS_X))},
             {"y", khz(trap.secular_frequency_hz(AXIS_Y))},
             {"z", khz(trap.secular_frequency_hz(AXIS_Z))}}},
           {"classification", ioncrystal::to_string(crystal.classification)},
           {"energy", crystal.energy},
           {"positions", positions_json(crystal.positions)}};
    emit_json(j, out_path);
}

void run_orbit(const TrapParams& p, int n_ions, std::uint64_t seed,
               int max_order, const std::string& out_path) {
    const auto trap = make_trap(p);
    ioncrystal::EquilibriumOptions eq_opts;
    eq_opts.seed = seed;
    const auto crystal = ioncrystal::find_equilibrium(trap, n_ions, eq_opts);
    ioncrystal::OrbitOptions opts;
    opts.max_order = max_order;
    const auto orbit = ioncrystal::find_orbit(trap, crystal.positions, opts);
    json coeffs = json::array();
    for (Eigen::Index d = 0; d < orbit.coeffs.rows(); ++d) {
        json row = json::array();
        for (Eigen::Index k = 0; k < orbit.coeffs.cols(); ++k)
            row.push_back(orbit.coeffs(d, k));
        coeffs.push_back(std::move(row));
    }
    json j{{"n_ions", orbit.n_ions},
           {"trap", trap_json(p)},
           {"order", orbit.order},
           {"residual", orbit.residual},
           {"mean_positions", positions_json(ioncrystal::orbit_mean(orbit))},
           {"cosine_coefficients", std::move(coeffs)}};
    emit_json(j, out_path);
}

void run_modes(const TrapParams& p, int n_ions, const std::string& method,
               std::uint64_t seed, bool with_vectors,
               const std::string& out_path) {
    const auto trap = make_trap(p);
    ioncrystal::EquilibriumOptions eq_opts;
    eq_opts.seed = seed;
    const auto crystal = ioncrystal::find_equilibrium(trap, n_ions, eq_opts);
    json j{{"method", method},
           {"n_ions", n_ions},
           {"trap", trap_json(p)},
           {"classification", ioncrystal::to_string(crystal.classification)}};
    if (method == "ppt") {
        const auto set = ioncrystal::ppt_modes(trap, crystal);
        j["modes"] = modeset_json(set, with_vectors);
    } else {
        const auto orbit = ioncrystal::find_orbit(trap, crystal.positions);
        const auto spec = ioncrystal::flt_spectrum(orbit);
        j["symplectic_defect"] = spec.symplectic_defect;
        j["unit_circle_deviation"] = spec.unit_circle_deviation;
        j["modes"] = modeset_json(spec.modes, with_vectors);
    }
    emit_json(j, out_path);
}

void run_sweep_alpha(int n_ions, const std::string& range,
                     const std::string& method, double q_y, double f_rf_khz,
                     double resolution, std::uint64_t seed,
                     const std::string& out_path) {
    const auto [lo, hi] = parse_range(range);
    ioncrystal::AlphaScanOptions opts;
    opts.q_y = q_y;
    opts.omega_rf = omega_from_khz(f_rf_khz);
    opts.resolution = resolution;
    opts.seed = seed;
    const auto scan = method == "ppt"
                          ? ioncrystal::scan_alpha_ppt(n_ions, lo, hi, opts)
                          : ioncrystal::scan_alpha_flt(n_ions, lo, hi, opts);
    json grid = json::array();
    for (const double a : scan.alpha_grid) grid.push_back(a);
    json labels = json::array();
    for (const auto& c : scan.classifications) labels.push_back(c);
    json criticals = json::array();
    for (const auto& c : scan.criticals)
        criticals.push_back({{"alpha_c", c.alpha_c},
                             {"bracket_lo", c.bracket_lo},
                             {"bracket_hi", c.bracket_hi},
                             {"kind", c.kind},
                             {"method", c.method},
                             {"first_order", c.first_order},
                             {"branch_low", c.branch_low},
                             {"branch_high", c.branch_high}});
    json j{{"n_ions", scan.n_ions},
           {"method", method},
           {"q_y", q_y},
           {"f_rf_khz", f_rf_khz},
           {"resolution", resolution},
           {"alpha_grid", std::move(grid)},
           {"classifications", std::move(labels)},
           {"criticals", std::move(criticals)}};
    emit_json(j, out_path);
}

void run_sweep_q(const SweepQArgs& args, const std::string& format,
                 const std::string& out_path) {
    const auto rows = run_sweep_q(args);
    if (format == "csv") {
        emit(sweep_q_csv(rows), out_path);
        return;
    }
    json j{{"f_rf_khz", args.f_rf_khz},
           {"f_cm_y_khz", args.f_cm_y_khz},
           {"f_cm_z_khz", args.f_cm_z_khz},
           {"rows", sweep_q_json_rows(rows)}};
    emit_json(j, out_path);
}

void run_fit(const std::string& data_path, const std::string& model_name,
             double f_rf_khz, int n_ions, std::uint64_t seed,
             int max_iterations, const std::string& out_path) {
    const auto data = read_measurements(data_path);
    const auto model = model_name == "ppt" ? ioncrystal::FitModel::ppt
                                           : ioncrystal::FitModel::flt;
    ioncrystal::FitOptions opts;
    opts.seed = seed;
    opts.max_iterations = max_iterations;
    const auto fit = ioncrystal::fit_trap(data, omega_from_khz(f_rf_khz),
                                          n_ions, model, opts);
    emit_json(fit_json(fit, data), out_path);
}

void run_reproduce_table1(const std::string& data_path, double f_rf_khz,
                          std::uint64_t seed, const std::string& format,
                          const std::string& out_path) {
    const auto data = read_measurements(data_path);
    const double omega_rf = omega_from_khz(f_rf_khz);
    ioncrystal::FitOptions opts;
    opts.seed = seed;
    const auto flt =
        ioncrystal::fit_trap(data, omega_rf, 3, ioncrystal::FitModel::flt, opts);
    const auto ppt =
        ioncrystal::fit_trap(data, omega_rf, 3, ioncrystal::FitModel::ppt, opts);
    const auto& cm_z = find_tag(data, "cm_z");
    const auto& cm_y = find_tag(data, "cm_y");
    const auto from_cm = ioncrystal::ppt_predict_from_cm(
        cm_z.freq_hz, cm_y.freq_hz, cm_z.sigma_hz, cm_y.sigma_hz, omega_rf);

    if (format == "json") {
        json j{{"f_rf_khz", f_rf_khz},
               {"flt_fit", fit_json(flt, data)},
               {"ppt_fit", fit_json(ppt, data)},
               {"ppt_from_cm",
                {{"zz_b_khz", khz(from_cm.zz_b_hz)},
                 {"zz_b_sigma_khz", khz(from_cm.sigma_b_hz)},
                 {"zz_a_khz", khz(from_cm.zz_a_hz)},
                 {"zz_a_sigma_khz", khz(from_cm.sigma_a_hz)}}}};
        emit_json(j, out_path);
        return;
    }

    // Fixed-format text table; snprintf keeps the bytes deterministic.
    std::string text;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "three-ion zigzag spectrum at f_rf = %.3f kHz (all kHz)\n",
                  f_rf_khz);
    text += buf;
    text += "mode      measured(sigma)      flt_fit    ppt_fit   "
            "ppt_from_cm(sigma)\n";
    const char* order[] = {"zz_b", "zz_a", "cm_z", "cm_y", "cm_x"};
    for (const char* tag : order) {
        const auto& m = find_tag(data, tag);
        const double flt_khz = khz(flt.predicted_hz.at(tag));
        const double ppt_khz = khz(ppt.predicted_hz.at(tag));
        char mcell[64];
        std::snprintf(mcell, sizeof(mcell), "%.3f(%.3f)", khz(m.freq_hz),
                      khz(m.sigma_hz));
        std::snprintf(buf, sizeof(buf), "%-8s %19s %10.3f %10.3f", tag, mcell,
                      flt_khz, ppt_khz);
        text += buf;
        if (std::string(tag) == "zz_b") {
            std::snprintf(buf, sizeof(buf), "   %9.3f(%.3f)",
                          khz(from_cm.zz_b_hz), khz(from_cm.sigma_b_hz));
            text += buf;
        } else if (std::string(tag) == "zz_a") {
            std::snprintf(buf, sizeof(buf), "   %9.3f(%.3f)",
                          khz(from_cm.zz_a_hz), khz(from_cm.sigma_a_hz));
            text += buf;
        }
        text += "\n";
    }
    std::snprintf(buf, sizeof(buf),
                  "chi2/dof: flt %.4f/%d (p = %.4g)   ppt %.4f/%d (p = %.4g)\n",
                  flt.chi2, flt.dof, flt.p_value, ppt.chi2, ppt.dof,
                  ppt.p_value);
    text += buf;
    std::snprintf(buf, sizeof(buf),
                  "fitted flt: q_y = %.8f  a_y = %.8f  a_z = %.8f\n", flt.q_y,
                  flt.a_y, flt.a_z);
    text += buf;
    std::snprintf(buf, sizeof(buf),
                  "fitted ppt: q_y = %.8f  a_y = %.8f  a_z = %.8f\n", ppt.q_y,
                  ppt.a_y, ppt.a_z);
    text += buf;
    emit(text, out_path);
}

const char* error_kind(const ioncrystal::Error& e) {
    if (dynamic_cast<const ioncrystal::UnstableAxisError*>(&e))
        return "unstable-axis";
    if (dynamic_cast<const ioncrystal::ConvergenceError*>(&e))
        return "convergence";
    if (dynamic_cast<const ioncrystal::AmbiguousTagError*>(&e))
        return "ambiguous-tag";
    if (dynamic_cast<const ioncrystal::DynamicalInstabilityError*>(&e))
        return "dynamical-instability";
    if (dynamic_cast<const ioncrystal::IntegratorAccuracyError*>(&e))
        return "integrator-accuracy";
    if (dynamic_cast<const ioncrystal::DomainError*>(&e)) return "domain";
    return "library";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "ionmodes: equilibrium structures, periodic orbits, vibrational "
        "modes, structural transitions, and trap-parameter fits for ion "
        "crystals in a linear rf trap. Frequencies at this interface are "
        "in kHz."};
    app.require_subcommand(1);

    std::string out_path;
    app.add_option("-o,--output", out_path,
                   "write output to this file instead of stdout")
        ->capture_default_str();

    // mathieu ---------------------------------------------------------------
    auto* sc_mathieu = app.add_subcommand(
        "mathieu", "characteristic exponent of one Mathieu axis");
    double ma = 0.0, mq = 0.0;
    double mtarget = 0.0;
    sc_mathieu->add_option("--a", ma, "dc parameter a")->required();
    sc_mathieu->add_option("--q", mq, "rf parameter q")->required();
    auto* mtarget_opt = sc_mathieu->add_option(
        "--target-beta", mtarget, "also solve a for this exponent at fixed q");

    // equilibrium -----------------------------------------------------------
    auto* sc_eq = app.add_subcommand(
        "equilibrium", "global pseudopotential minimum of an N-ion crystal");
    TrapArgs eq_trap;
    add_trap_options(sc_eq, eq_trap);
    int eq_n = 0;
    std::uint64_t eq_seed = kDefaultSeed;
    int eq_starts = 20;
    sc_eq->add_option("--n", eq_n, "ion count")->required();
    sc_eq->add_option("--seed", eq_seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_eq->add_option("--starts", eq_starts, "random starts")
        ->capture_default_str();

    // orbit -----------------------------------------------------------------
    auto* sc_orbit = app.add_subcommand(
        "orbit", "pi-periodic crystal orbit under the full drive");
    TrapArgs orbit_trap;
    add_trap_options(sc_orbit, orbit_trap);
    int orbit_n = 0;
    std::uint64_t orbit_seed = kDefaultSeed;
    int orbit_max_order = 64;
    sc_orbit->add_option("--n", orbit_n, "ion count")->required();
    sc_orbit->add_option("--seed", orbit_seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_orbit->add_option("--max-order", orbit_max_order,
                         "highest cosine harmonic")
        ->capture_default_str();

    // modes -----------------------------------------------------------------
    auto* sc_modes =
        app.add_subcommand("modes", "vibrational mode spectrum of a crystal");
    TrapArgs modes_trap;
    add_trap_options(sc_modes, modes_trap);
    int modes_n = 0;
    std::string modes_method = "flt";
    std::uint64_t modes_seed = kDefaultSeed;
    bool modes_vectors = false;
    sc_modes->add_option("--n", modes_n, "ion count")->required();
    sc_modes
        ->add_option("--method", modes_method,
                     "ppt (time-averaged) or flt (full drive)")
        ->check(CLI::IsMember({"ppt", "flt"}))
        ->capture_default_str();
    sc_modes->add_option("--seed", modes_seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_modes->add_flag("--vectors", modes_vectors,
                       "include displacement vectors in the output");

    // sweep-alpha -----------------------------------------------------------
    auto* sc_salpha = app.add_subcommand(
        "sweep-alpha",
        "structural classification and critical anisotropies over alpha_y");
    int sa_n = 0;
    std::string sa_range;
    std::string sa_method = "ppt";
    double sa_q = 0.1;
    double sa_f_rf = kDefaultFRfKhz;
    double sa_res = 0.005;
    std::uint64_t sa_seed = kDefaultSeed;
    sc_salpha->add_option("--n", sa_n, "ion count")->required();
    sc_salpha->add_option("--range", sa_range, "alpha interval LO:HI")
        ->required();
    sc_salpha
        ->add_option("--method", sa_method,
                     "ppt (time-averaged) or flt (full drive)")
        ->check(CLI::IsMember({"ppt", "flt"}))
        ->capture_default_str();
    sc_salpha->add_option("--q", sa_q, "drive parameter q_y of the scan family")
        ->capture_default_str();
    sc_salpha->add_option("--f-rf-khz", sa_f_rf, "drive frequency in kHz")
        ->capture_default_str();
    sc_salpha->add_option("--resolution", sa_res, "alpha grid step")
        ->capture_default_str();
    sc_salpha->add_option("--seed", sa_seed, "multi-start PRNG seed")
        ->capture_default_str();

    // sweep-q ---------------------------------------------------------------
    auto* sc_sq = app.add_subcommand(
        "sweep-q",
        "zigzag pair versus drive parameter q at fixed cm frequencies");
    SweepQArgs sq;
    std::string sq_format = "csv";
    sc_sq->add_option("--grid", sq.grid, "q grid LO:HI:STEP")
        ->capture_default_str();
    sc_sq->add_option("--f-cm-y-khz", sq.f_cm_y_khz, "transverse cm target")
        ->capture_default_str();
    sc_sq->add_option("--f-cm-z-khz", sq.f_cm_z_khz, "axial cm target")
        ->capture_default_str();
    sc_sq->add_option("--f-rf-khz", sq.f_rf_khz, "drive frequency in kHz")
        ->capture_default_str();
    sc_sq->add_option("--seed", sq.seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_sq->add_option("--jobs", sq.jobs,
                      "worker threads (default: IONMODES_JOBS or 1)");
    sc_sq->add_option("--format", sq_format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();

    // fit -------------------------------------------------------------------
    auto* sc_fit = app.add_subcommand(
        "fit", "weighted least-squares trap fit to measured mode frequencies");
    std::string fit_data;
    std::string fit_model;
    double fit_f_rf = kDefaultFRfKhz;
    int fit_n = 3;
    std::uint64_t fit_seed = kDefaultSeed;
    int fit_max_iter = 200;
    sc_fit->add_option("--data", fit_data,
                       "CSV with header tag,freq_khz,sigma_khz")
        ->required();
    sc_fit->add_option("--model", fit_model, "ppt or flt")
        ->check(CLI::IsMember({"ppt", "flt"}))
        ->required();
    sc_fit->add_option("--f-rf-khz", fit_f_rf, "drive frequency in kHz")
        ->capture_default_str();
    sc_fit->add_option("--n", fit_n, "ion count")->capture_default_str();
    sc_fit->add_option("--seed", fit_seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_fit->add_option("--max-iterations", fit_max_iter, "fit iteration cap")
        ->capture_default_str();

    // reproduce-table1 ------------------------------------------------------
    auto* sc_t1 = app.add_subcommand(
        "reproduce-table1",
        "both fits of the bundled dataset, side by side with the "
        "measurements");
    std::string t1_data = std::string(IONMODES_DATA_DIR) + "/table1_fig3.csv";
    double t1_f_rf = kDefaultFRfKhz;
    std::uint64_t t1_seed = kDefaultSeed;
    std::string t1_format = "text";
    sc_t1->add_option("--data", t1_data, "measurement CSV")
        ->capture_default_str();
    sc_t1->add_option("--f-rf-khz", t1_f_rf, "drive frequency in kHz")
        ->capture_default_str();
    sc_t1->add_option("--seed", t1_seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_t1->add_option("--format", t1_format, "text or json")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();

    // reproduce-fig4 --------------------------------------------------------
    auto* sc_f4 = app.add_subcommand(
        "reproduce-fig4",
        "zigzag-pair frequency shift versus q as plot-ready CSV");
    SweepQArgs f4;
    sc_f4->add_option("--grid", f4.grid, "q grid LO:HI:STEP")
        ->capture_default_str();
    sc_f4->add_option("--f-cm-y-khz", f4.f_cm_y_khz, "transverse cm target")
        ->capture_default_str();
    sc_f4->add_option("--f-cm-z-khz", f4.f_cm_z_khz, "axial cm target")
        ->capture_default_str();
    sc_f4->add_option("--f-rf-khz", f4.f_rf_khz, "drive frequency in kHz")
        ->capture_default_str();
    sc_f4->add_option("--seed", f4.seed, "multi-start PRNG seed")
        ->capture_default_str();
    sc_f4->add_option("--jobs", f4.jobs,
                      "worker threads (default: IONMODES_JOBS or 1)");

    // Let the global -o/--output appear after the subcommand name too.
    for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sc_mathieu) {
            run_mathieu(ma, mq,
                        mtarget_opt->count() ? std::optional<double>(mtarget)
                                             : std::nullopt,
                        out_path);
        } else if (*sc_eq) {
            run_equilibrium(resolve_trap(eq_trap), eq_n, eq_seed, eq_starts,
                            out_path);
        } else if (*sc_orbit) {
            run_orbit(resolve_trap(orbit_trap), orbit_n, orbit_seed,
                      orbit_max_order, out_path);
        } else if (*sc_modes) {
            run_modes(resolve_trap(modes_trap), modes_n, modes_method,
                      modes_seed, modes_vectors, out_path);
        } else if (*sc_salpha) {
            run_sweep_alpha(sa_n, sa_range, sa_method, sa_q, sa_f_rf, sa_res,
                            sa_seed, out_path);
        } else if (*sc_sq) {
            run_sweep_q(sq, sq_format, out_path);
        } else if (*sc_fit) {
            run_fit(fit_data, fit_model, fit_f_rf, fit_n, fit_seed,
                    fit_max_iter, out_path);
        } else if (*sc_t1) {
            run_reproduce_table1(t1_data, t1_f_rf, t1_seed, t1_format,
                                 out_path);
        } else if (*sc_f4) {
            const auto rows = run_sweep_q(f4);
            emit(sweep_q_csv(rows), out_path);
        }
    } catch (const ioncrystal::Error& e) {
        std::cerr << "error: " << error_kind(e) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
