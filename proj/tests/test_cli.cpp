// End-to-end tests of the ionmodes command-line tool: output structure
// (validated against the schema files shipped in schemas/), documented
// example values, determinism of repeated runs, and the error convention.

#include <doctest.h>

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace {

using json = nlohmann::json;

struct CliResult {
    int exit_code = -1;
    std::string output;
};

// Run the tool through /bin/sh, capturing one stream. `args` is appended
// verbatim after the binary path; `capture_stderr` swaps the captured
// stream from stdout to stderr.
CliResult run_cli(const std::string& args, bool capture_stderr = false) {
    const std::string redirect =
        capture_stderr ? " 2>&1 1>/dev/null" : " 2>/dev/null";
    const std::string cmd = std::string(IONMODES_BIN) + " " + args + redirect;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult res;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        res.output.append(buf.data(), n);
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string source_path(const std::string& rel) {
    return std::string(IONMODES_SOURCE_DIR) + "/" + rel;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "cannot open " << path);
    return json::parse(in);
}

// --- minimal JSON-schema checker (draft-07 subset used by schemas/) -------
// Supports: type (string or list), required, properties,
// additionalProperties (bool or schema), items (single schema), enum,
// minItems, maxItems. Returns the first violation or "" when valid.
std::string schema_violation(const json& v, const json& s,
                             const std::string& path) {
    if (s.contains("type")) {
        const auto matches = [&](const std::string& t) {
            if (t == "object") return v.is_object();
            if (t == "array") return v.is_array();
            if (t == "string") return v.is_string();
            if (t == "boolean") return v.is_boolean();
            if (t == "null") return v.is_null();
            if (t == "integer") return v.is_number_integer();
            if (t == "number") return v.is_number();
            return false;
        };
        bool ok = false;
        if (s["type"].is_array()) {
            for (const auto& t : s["type"])
                ok = ok || matches(t.get<std::string>());
        } else {
            ok = matches(s["type"].get<std::string>());
        }
        if (!ok)
            return path + ": type mismatch (want " + s["type"].dump() + ")";
    }
    if (s.contains("enum")) {
        bool ok = false;
        for (const auto& e : s["enum"]) ok = ok || (v == e);
        if (!ok) return path + ": value " + v.dump() + " not in enum";
    }
    if (v.is_object()) {
        if (s.contains("required"))
            for (const auto& k : s["required"])
                if (!v.contains(k.get<std::string>()))
                    return path + ": missing required key '" +
                           k.get<std::string>() + "'";
        const json props =
            s.contains("properties") ? s["properties"] : json::object();
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (props.contains(it.key())) {
                const auto err = schema_violation(it.value(), props[it.key()],
                                                  path + "." + it.key());
                if (!err.empty()) return err;
            } else if (s.contains("additionalProperties")) {
                const auto& ap = s["additionalProperties"];
                if (ap.is_boolean() && !ap.get<bool>())
                    return path + ": unexpected key '" + it.key() + "'";
                if (ap.is_object()) {
                    const auto err = schema_violation(it.value(), ap,
                                                      path + "." + it.key());
                    if (!err.empty()) return err;
                }
            }
        }
    }
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
            return path + ": fewer than minItems elements";
        if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
            return path + ": more than maxItems elements";
        if (s.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                const auto err = schema_violation(
                    v[i], s["items"], path + "[" + std::to_string(i) + "]");
                if (!err.empty()) return err;
            }
        }
    }
    return "";
}

void check_schema(const json& v, const std::string& schema_name) {
    const json schema =
        load_json_file(source_path("schemas/" + schema_name + ".schema.json"));
    const std::string err = schema_violation(v, schema, "$");
    CHECK_MESSAGE(err.empty(), schema_name << " schema: " << err);
}

std::string trap_flags() {
    return "--f-rf-khz 35070 --q-y 0.20446329 --a-y -0.01170409 "
           "--a-z 0.00499701";
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

} // namespace

TEST_CASE("cli: mathieu matches the documented example and its schema") {
    const auto res = run_cli("mathieu --a 0.04 --q 0");
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.output);
    check_schema(j, "mathieu");
    CHECK(j["stable"].get<bool>());
    CHECK(std::abs(j["beta"].get<double>() - 0.2) < 1e-9);

    // q = 0 inverse problem: the dc coefficient for a target exponent is
    // exactly its square.
    const auto inv = run_cli("mathieu --a 0 --q 0 --target-beta 0.2");
    REQUIRE(inv.exit_code == 0);
    const json ji = json::parse(inv.output);
    check_schema(ji, "mathieu");
    CHECK(std::abs(ji["a_for_target_beta"].get<double>() - 0.04) < 1e-9);

    // Outside the stability region beta is null, and that still validates.
    const auto uns = run_cli("mathieu --a 0.3 --q 1.2");
    REQUIRE(uns.exit_code == 0);
    const json ju = json::parse(uns.output);
    check_schema(ju, "mathieu");
    CHECK_FALSE(ju["stable"].get<bool>());
    CHECK(ju["beta"].is_null());
}

TEST_CASE("cli: equilibrium output validates and reports the zigzag") {
    const auto res = run_cli("equilibrium " + trap_flags() + " --n 3");
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.output);
    check_schema(j, "equilibrium");
    CHECK(j["n_ions"].get<int>() == 3);
    CHECK(j["classification"].get<std::string>() == "planar_yz");
    CHECK(j["positions"].size() == 3);
    CHECK(std::abs(j["secular_khz"]["z"].get<double>() - 1239.541) < 0.01);
}

TEST_CASE("cli: config file and inline flags produce identical output") {
    const std::string cfg_path = "cli_test_trap.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "# trap used in the bundled dataset\n"
            << "f_rf_khz = 35070\n"
            << "q_y = 0.20446329\n"
            << "a_y = -0.01170409   # dc transverse\n"
            << "a_z = 0.00499701\n";
    }
    const auto from_cfg =
        run_cli("equilibrium --config " + cfg_path + " --n 3");
    const auto inline_res = run_cli("equilibrium " + trap_flags() + " --n 3");
    REQUIRE(from_cfg.exit_code == 0);
    REQUIRE(inline_res.exit_code == 0);
    CHECK(from_cfg.output == inline_res.output);
    std::remove(cfg_path.c_str());
}

TEST_CASE("cli: trap source is required and exclusive") {
    // No source at all.
    const auto none = run_cli("equilibrium --n 3", true);
    CHECK(none.exit_code == 1);
    CHECK(none.output.find("error: domain:") != std::string::npos);

    // Partial inline flags.
    const auto partial = run_cli("equilibrium --n 3 --q-y 0.2", true);
    CHECK(partial.exit_code == 1);
    CHECK(partial.output.find("error: domain:") != std::string::npos);

    // Config file and inline flags together are rejected by the parser.
    const std::string cfg_path = "cli_test_excl.cfg";
    {
        std::ofstream cfg(cfg_path);
        cfg << "f_rf_khz = 35070\nq_y = 0.2\na_y = -0.01\na_z = 0.005\n";
    }
    const auto both = run_cli(
        "equilibrium --n 3 --config " + cfg_path + " --q-y 0.2", true);
    CHECK(both.exit_code != 0);
    std::remove(cfg_path.c_str());

    // Malformed config: missing key.
    const std::string bad_path = "cli_test_bad.cfg";
    {
        std::ofstream cfg(bad_path);
        cfg << "f_rf_khz = 35070\nq_y = 0.2\n";
    }
    const auto bad =
        run_cli("equilibrium --n 3 --config " + bad_path, true);
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("missing key") != std::string::npos);
    std::remove(bad_path.c_str());
}

TEST_CASE("cli: orbit output validates and satisfies the defect bound") {
    const auto res = run_cli("orbit " + trap_flags() + " --n 3");
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.output);
    check_schema(j, "orbit");
    CHECK(j["residual"].get<double>() < 1e-9);
    CHECK(j["cosine_coefficients"].size() == 9);
    // Every dof row carries order + 1 cosine coefficients.
    const int order = j["order"].get<int>();
    for (const auto& row : j["cosine_coefficients"])
        CHECK(static_cast<int>(row.size()) == order + 1);
    // The transverse drive-frequency micromotion dominates the breathing:
    // the middle ion sits at the y-extremum, so |c1| ~ (q/2) |c0| there.
    const double c0 = j["cosine_coefficients"][4][0].get<double>();
    const double c1 = j["cosine_coefficients"][4][1].get<double>();
    CHECK(std::abs(c1 / c0 + 0.102086) < 1e-3);
}

TEST_CASE("cli: modes validates for both methods and is deterministic") {
    const auto flt = run_cli("modes " + trap_flags() + " --n 3 --method flt");
    REQUIRE(flt.exit_code == 0);
    const json jf = json::parse(flt.output);
    check_schema(jf, "modes");
    CHECK(jf["modes"].size() == 9);
    CHECK(jf["symplectic_defect"].get<double>() < 1e-8);
    CHECK(jf["modes"][0]["tag"].get<std::string>() == "zz_b");
    CHECK(std::abs(jf["modes"][0]["freq_khz"].get<double>() - 715.107) < 0.1);

    const auto ppt = run_cli(
        "modes " + trap_flags() + " --n 3 --method ppt --vectors");
    REQUIRE(ppt.exit_code == 0);
    const json jp = json::parse(ppt.output);
    check_schema(jp, "modes");
    CHECK(jp["modes"].size() == 9);
    for (const auto& m : jp["modes"])
        CHECK(m["vector"].size() == 9);

    // Same argv, same seed: byte-identical output.
    const auto again = run_cli("modes " + trap_flags() + " --n 3 --method flt");
    CHECK(again.output == flt.output);
}

TEST_CASE("cli: sweep-alpha locates the documented three-ion critical") {
    const auto res = run_cli("sweep-alpha --n 3 --range 0.3:0.6");
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.output);
    check_schema(j, "sweep_alpha");
    REQUIRE(j["criticals"].size() == 1);
    const double alpha_c = j["criticals"][0]["alpha_c"].get<double>();
    CHECK(std::abs(alpha_c - 5.0 / 12.0) < 1e-3);
    CHECK(j["criticals"][0]["kind"].get<std::string>() ==
          "linear->planar_yz:+-+");
    CHECK(j["classifications"].front().get<std::string>() == "linear");
    CHECK(j["classifications"].back().get<std::string>() == "planar_yz:+-+");
}

TEST_CASE("cli: sweep-q emits the documented CSV layout") {
    const auto res = run_cli("sweep-q --grid 0.2:0.25:0.05");
    REQUIRE(res.exit_code == 0);
    const auto lines = split_lines(res.output);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "q,ok,error,zz_b_khz,zz_a_khz,zz_b_ppt_khz,zz_a_ppt_khz");
    const auto row = split_csv(lines[1]);
    REQUIRE(row.size() == 7);
    CHECK(row[0] == "0.2");
    CHECK(row[1] == "1");
    CHECK(row[2].empty());
    CHECK(std::abs(std::stod(row[3]) - 714.976) < 0.01);
    CHECK(std::abs(std::stod(row[4]) - 1077.509) < 0.01);
    CHECK(std::abs(std::stod(row[5]) - 712.495) < 0.01);
    CHECK(std::abs(std::stod(row[6]) - 1054.992) < 0.01);

    // A trap-unstable row is flagged, keeps its PPT reference, and leaves
    // the Floquet cells empty.
    const auto bad = run_cli("sweep-q --grid 0.05:0.05:0.1");
    REQUIRE(bad.exit_code == 0);
    const auto bad_rows = split_lines(bad.output);
    REQUIRE(bad_rows.size() == 2);
    const auto cells = split_csv(bad_rows[1]);
    REQUIRE(cells.size() == 7);
    CHECK(cells[1] == "0");
    CHECK(!cells[2].empty());
    CHECK(cells[2].find(',') == std::string::npos);
    CHECK(cells[3].empty());
    CHECK(cells[4].empty());

    // JSON mirror of the same sweep validates its schema, with nulls in
    // the flagged row.
    const auto js = run_cli("sweep-q --grid 0.05:0.2:0.15 --format json");
    REQUIRE(js.exit_code == 0);
    const json j = json::parse(js.output);
    check_schema(j, "sweep_q");
    REQUIRE(j["rows"].size() == 2);
    CHECK_FALSE(j["rows"][0]["ok"].get<bool>());
    CHECK(j["rows"][0]["zz_a_khz"].is_null());
    CHECK(j["rows"][1]["ok"].get<bool>());
}

TEST_CASE("cli: fit reproduces the bundled-dataset parameters") {
    const auto res = run_cli("fit --data " +
                             source_path("data/table1_fig3.csv") +
                             " --model flt");
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.output);
    check_schema(j, "fit");
    CHECK(std::abs(j["q_y"].get<double>() - 0.20446329) < 1e-6);
    CHECK(std::abs(j["a_y"].get<double>() - (-0.01170409)) < 1e-6);
    CHECK(std::abs(j["a_z"].get<double>() - 0.00499701) < 1e-6);
    CHECK(std::abs(j["chi2"].get<double>() - 3.0200156) < 1e-4);
    CHECK(j["dof"].get<int>() == 2);
    const double p = j["p_value"].get<double>();
    CHECK(p > 0.10);
    CHECK(p < 0.40);
    CHECK(j["residuals"].size() == 5);
    CHECK(std::abs(j["predicted_khz"]["zz_b"].get<double>() - 715.107) < 0.01);
}

TEST_CASE("cli: reproduce-table1 compares both fits to the measurements") {
    const auto text = run_cli("reproduce-table1");
    REQUIRE(text.exit_code == 0);
    CHECK(text.output.find("zz_b") != std::string::npos);
    CHECK(text.output.find("chi2/dof") != std::string::npos);

    const auto res = run_cli("reproduce-table1 --format json");
    REQUIRE(res.exit_code == 0);
    const json j = json::parse(res.output);
    check_schema(j, "table1");
    const auto& pred = j["flt_fit"]["predicted_khz"];
    CHECK(std::abs(pred["zz_b"].get<double>() - 715.1) < 0.5);
    CHECK(std::abs(pred["zz_a"].get<double>() - 1078.5) < 0.5);
    CHECK(std::abs(pred["cm_z"].get<double>() - 1239.5) < 0.5);
    CHECK(std::abs(pred["cm_y"].get<double>() - 1690.7) < 0.5);
    CHECK(j["flt_fit"]["chi2"].get<double>() <
          j["ppt_fit"]["chi2"].get<double>() - 25.0);
    CHECK(std::abs(j["ppt_from_cm"]["zz_b_khz"].get<double>() - 728.282) <
          0.01);
}

TEST_CASE("cli: reproduce-fig4 is deterministic across worker counts") {
    const std::string grid = "--grid 0.2:0.3:0.05";
    const auto one = run_cli("reproduce-fig4 " + grid + " --jobs 1");
    const auto two = run_cli("reproduce-fig4 " + grid + " --jobs 2");
    REQUIRE(one.exit_code == 0);
    REQUIRE(two.exit_code == 0);
    CHECK(one.output == two.output);
    CHECK(split_lines(one.output).size() == 4);
    CHECK(split_lines(one.output)[0] ==
          "q,ok,error,zz_b_khz,zz_a_khz,zz_b_ppt_khz,zz_a_ppt_khz");

    // The env var sets the default worker count; the output must not
    // depend on it.
    const std::string cmd = std::string("IONMODES_JOBS=2 ") +
                            IONMODES_BIN + " reproduce-fig4 " + grid +
                            " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string env_out;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        env_out.append(buf.data(), n);
    REQUIRE(pclose(pipe) == 0);
    CHECK(env_out == one.output);
}

TEST_CASE("cli: --output writes the same bytes as stdout") {
    const std::string out_path = "cli_test_out.json";
    const auto direct = run_cli("mathieu --a 0.04 --q 0.2");
    const auto filed =
        run_cli("mathieu --a 0.04 --q 0.2 -o " + out_path);
    REQUIRE(direct.exit_code == 0);
    REQUIRE(filed.exit_code == 0);
    CHECK(filed.output.empty());
    std::ifstream in(out_path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == direct.output);
    in.close();
    std::remove(out_path.c_str());
}

TEST_CASE("cli: errors go to stderr as a single machine-parsable line") {
    // A pure-dc trap cannot confine all axes: the library error surfaces
    // with its category and a nonzero exit.
    const auto res = run_cli(
        "modes --f-rf-khz 35070 --q-y 0 --a-y 0.01 --a-z 0.0025 --n 2", true);
    CHECK(res.exit_code == 1);
    const auto lines = split_lines(res.output);
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].rfind("error: unstable-axis: ", 0) == 0);

    // Unknown subcommands and malformed grids also exit nonzero.
    CHECK(run_cli("no-such-subcommand", true).exit_code != 0);
    CHECK(run_cli("sweep-q --grid 0.5:0.2:0.05", true).exit_code == 1);
    CHECK(run_cli("sweep-alpha --n 3 --range 0.3", true).exit_code == 1);
}
