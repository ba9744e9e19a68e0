#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"
#include "thermocrn/format.hpp"

namespace {

using nlohmann::json;

struct CliResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args, const std::string& tag) {
    const std::string out = "/tmp/thermocrn_test_" + tag + ".out";
    const std::string err = "/tmp/thermocrn_test_" + tag + ".err";
    const std::string cmd = std::string(THERMOCRN_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/thermocrn_test_" + name;
    std::ofstream f(path);
    f << content;
    return path;
}

}  // namespace

TEST_CASE("cli validate: exit codes follow the 0/1/2 contract") {
    CHECK(run_cli("validate " + tu::data_path("example_isolated.crn"), "val_ok").exit_code == 0);

    const std::string bad5 = write_temp(
        "bad5.crn",
        "[constants]\nkappa = 1\n[species]\nA { z = 1, p = 1.5, e = 0 }\nB { z = 1, p = 1.5, e = 0 }\n"
        "[reactions]\nA <-> B { kf = 1, kb = 1, gas = (0,0,0), gasb = (1,0,0) }\n");
    const CliResult r5 = run_cli("validate " + bad5, "val_c5");
    CHECK(r5.exit_code == 1);
    CHECK(r5.out.find("Condition 5: FAIL") != std::string::npos);

    const std::string syn = write_temp(
        "syntax.crn",
        "[constants]\nkappa = 1\n[species]\nX1 { z = 1, p = 1, e = 0 }\nX2 { z = 1, p = 1, e = 0 }\n"
        "[reactions]\nX1 ++ X2 -> X1 { k = 1, gas = (0,0,0) }\n");
    const CliResult rs = run_cli("validate " + syn, "val_syn");
    CHECK(rs.exit_code == 2);
    CHECK(rs.err.find("line 7") != std::string::npos);
    CHECK(rs.err.find("col") != std::string::npos);
}

TEST_CASE("cli matrices --json matches the library schema") {
    const CliResult r = run_cli("matrices " + tu::data_path("example_isolated.crn") + " --json", "mat");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j["gamma_tilde_form"] == "stacked");
    REQUIRE(j["D"].size() == 2);  // column-major
    CHECK(j["D"][0] == json::array({-1.0, 1.0}));
    CHECK(j["D"][1] == json::array({1.0, -1.0}));
    CHECK(j["ker_gamma_tilde_T"].size() == 3);
    CHECK(j["exact_bases"] == true);
    CHECK(j["network"]["species"].size() == 3);
    CHECK(j["network"]["reversible"] == true);
}

TEST_CASE("cli balance") {
    SUBCASE("worked example reference") {
        const CliResult r = run_cli("balance " + tu::data_path("example_isolated.crn") + " --json", "bal");
        REQUIRE(r.exit_code == 0);
        const json j = json::parse(r.out);
        CHECK(j["wegscheider"]["holds"] == true);
        CHECK(tu::rel_diff(j["reference"]["U_star"].get<double>(), 6.0) < 1e-12);
        CHECK(tu::rel_diff(j["reference"]["N_star"][0].get<double>(), 1.0) < 1e-12);
        CHECK(tu::rel_diff(j["reference"]["N_star"][2].get<double>(), 2.0) < 1e-12);
    }
    SUBCASE("cycle violation exits nonzero") {
        const CliResult r = run_cli("balance " + tu::data_path("triangle_fail.crn"), "bal_tri");
        CHECK(r.exit_code == 1);
        CHECK(r.out.find("fails") != std::string::npos);
    }
    SUBCASE("open network pins the reference temperature to T_env") {
        const CliResult r = run_cli("balance " + tu::data_path("open_io_he.crn") + " --json", "bal_open");
        REQUIRE(r.exit_code == 0);
        const json j = json::parse(r.out);
        CHECK(j["reference"]["T_star"] == 1.0);
    }
}

TEST_CASE("cli equilibrium") {
    const CliResult r = run_cli(
        "equilibrium " + tu::data_path("example_isolated.crn") + " --U0 6 --N0 2,2,1 --json", "eq");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(std::abs(j["N"][0].get<double>() - 1.0) < 1e-8);
    CHECK(std::abs(j["N"][2].get<double>() - 2.0) < 1e-8);
    CHECK(j["class_residual"].get<double>() < 1e-9);

    SUBCASE("wrong N0 length is a configuration error") {
        const CliResult bad = run_cli(
            "equilibrium " + tu::data_path("example_isolated.crn") + " --U0 6 --N0 2,2", "eq_len");
        CHECK(bad.exit_code == 2);
    }
    SUBCASE("malformed N0 entry is a configuration error") {
        const CliResult bad = run_cli(
            "equilibrium " + tu::data_path("example_isolated.crn") + " --U0 6 --N0 2x,2,1", "eq_junk");
        CHECK(bad.exit_code == 2);
        CHECK(bad.err.find("cannot parse amount") != std::string::npos);
    }
}

TEST_CASE("cli simulate: CSV schema and bit-exact round trip") {
    const std::string csv_path = "/tmp/thermocrn_test_traj.csv";
    const CliResult r = run_cli("simulate " + tu::data_path("example_isolated.crn") +
                                    " --U0 6 --N0 2,2,1 --t-end 20 --out " + csv_path,
                                "sim");
    REQUIRE(r.exit_code == 0);
    const json summary = json::parse(r.out);
    CHECK(summary["S_A_monotone"] == true);
    CHECK(summary["class_drift"].get<double>() < 1e-8);

    std::ifstream csv(csv_path);
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,U,N_X1,N_X2,N_X3,T,S_A");

    // every field re-parses and re-formats to the identical 17-digit token
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const double v = std::strtod(tok.c_str(), nullptr);
            CHECK(thermocrn::format_g17(v) == tok);
        }
        ++rows;
    }
    CHECK(rows > 10);

    SUBCASE("uniform sampling via dense output") {
        const CliResult rs = run_cli("simulate " + tu::data_path("example_isolated.crn") +
                                         " --U0 6 --N0 2,2,1 --t-end 5 --samples 50 --out " + csv_path + ".s",
                                     "sim_s");
        REQUIRE(rs.exit_code == 0);
        std::ifstream f(csv_path + ".s");
        int n = 0;
        std::string l;
        while (std::getline(f, l)) ++n;
        CHECK(n == 52);  // header + 51 samples
    }

    SUBCASE("non-balanced networks simulate with S_A reported as nan") {
        const CliResult rn = run_cli("simulate " + tu::data_path("triangle_fail.crn") +
                                         " --U0 6 --N0 1,1,1 --t-end 5 --out " + csv_path + ".n",
                                     "sim_n");
        REQUIRE(rn.exit_code == 0);
        std::ifstream f(csv_path + ".n");
        std::string header, first;
        std::getline(f, header);
        std::getline(f, first);
        CHECK(first.substr(first.rfind(',') + 1) == "nan");
        const json j = json::parse(rn.out);
        CHECK_FALSE(j.contains("S_A_terminal"));
    }

    SUBCASE("isothermal start off the energy surface is a semantic error") {
        const CliResult ro = run_cli(
            "simulate " + tu::data_path("example_isothermal.crn") + " --U0 10 --N0 1,1,1 --t-end 5", "sim_o");
        CHECK(ro.exit_code == 1);
        CHECK(ro.err.find("isothermal surface") != std::string::npos);
    }
}
