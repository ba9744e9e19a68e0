// Command-line front end: validate network files, dump graph matrices, run
// balance analysis, compute equilibria, and simulate trajectories.
//
// Exit codes: 0 success, 1 semantic failure (condition or balance), 2 parse
// or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "thermocrn/dynamics.hpp"
#include "thermocrn/equilibrium.hpp"
#include "thermocrn/format.hpp"
#include "thermocrn/json_io.hpp"
#include "thermocrn/parser.hpp"

namespace {

using namespace thermocrn;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitSemantic = 1;
constexpr int kExitParse = 2;

struct RunConfig {
    std::string input;
    double U0 = 0.0;
    std::string N0_text;
    double t_end = 100.0;
    double rtol = 1e-8;
    double atol = 1e-10;
    std::string out_path;
    std::string summary_path;
    int samples = 0;
    int sweep = 0;
    unsigned seed = 12345;
    bool json_mode = false;
};

Vec parse_amount_list(const std::string& text, int expected) {
    Vec out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t pos = 0;
        const double v = std::stod(item, &pos);
        while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos]))) ++pos;
        if (pos != item.size()) throw std::invalid_argument("--N0: cannot parse amount '" + item + "'");
        out.push_back(v);
    }
    if (static_cast<int>(out.size()) != expected)
        throw std::invalid_argument("--N0 needs " + std::to_string(expected) + " comma-separated amounts, got " +
                                    std::to_string(out.size()));
    return out;
}

std::string vec_text(const Vec& v) {
    std::string s = "(";
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_g17(v[i]);
    return s + ")";
}

void print_matrix(std::ostream& os, const std::string& name, const Mat& m) {
    os << name << " (" << m.rows << "x" << m.cols << "):\n";
    for (int i = 0; i < m.rows; ++i) {
        os << " ";
        for (int j = 0; j < m.cols; ++j) os << " " << format_g17(m(i, j));
        os << "\n";
    }
}

int cmd_validate(const std::string& path, bool json_mode) {
    const NetworkSpec spec = parse_network_file(path);
    const ValidationReport rep = validate_conditions(spec);
    if (json_mode) {
        json j;
        j["all_pass"] = rep.all_pass();
        j["conditions"] = json::array();
        for (const auto& c : rep.results)
            j["conditions"].push_back({{"condition", c.condition}, {"pass", c.pass}, {"detail", c.detail}});
        j["reversible"] = spec.reversible();
        std::cout << j.dump(2) << "\n";
    } else {
        for (const auto& c : rep.results)
            std::cout << "Condition " << c.condition << ": " << (c.pass ? "PASS" : "FAIL")
                      << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
        std::cout << (spec.reversible() ? "network is reversible\n" : "network has unpaired reactions\n");
    }
    return rep.all_pass() ? kExitOk : kExitSemantic;
}

int cmd_matrices(const std::string& path, bool json_mode) {
    const NetworkSpec spec = parse_network_file(path);
    const Matrices mat = build_matrices(spec);
    if (json_mode) {
        json j = to_json(mat, spec);
        j["network"] = to_json(spec);
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }
    print_matrix(std::cout, "Y", mat.Y);
    print_matrix(std::cout, "D", mat.D);
    print_matrix(std::cout, "B", mat.B);
    print_matrix(std::cout, "Gamma", mat.Gamma);
    print_matrix(std::cout, "GammaTilde", mat.GammaTilde);
    std::cout << "GammaTilde form: " << (mat.stacked ? "stacked" : "block") << "\n";
    std::cout << "ker(GammaTilde') basis:\n";
    for (const Vec& c : mat.bases.ker_gamma_tilde_T) std::cout << "  " << vec_text(c) << "\n";
    std::cout << "integer ker(Gamma) basis:\n";
    for (const auto& lam : mat.bases.ker_gamma) {
        std::cout << "  (";
        for (size_t i = 0; i < lam.size(); ++i) std::cout << (i ? ", " : "") << lam[i];
        std::cout << ")\n";
    }
    return kExitOk;
}

int cmd_balance(const std::string& path, bool json_mode) {
    const NetworkSpec spec = parse_network_file(path);
    const Matrices mat = build_matrices(spec);
    json j;
    WegscheiderReport weg;
    try {
        weg = wegscheider_check(spec, mat);
    } catch (const BalanceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSemantic;
    }
    j["wegscheider"] = {{"holds", weg.holds}, {"worst_residual", weg.worst_residual}};
    if (!json_mode)
        std::cout << "Wegscheider identity: " << (weg.holds ? "holds" : "fails") << " (worst residual "
                  << format_g17(weg.worst_residual) << ")\n";
    try {
        const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
        j["reference"] = {{"T_star", ref.T_star},
                          {"U_star", ref.state.U},
                          {"N_star", ref.state.N},
                          {"mu_star", ref.mu_star}};
        if (json_mode) {
            std::cout << j.dump(2) << "\n";
        } else {
            std::cout << "detailed balanced reference:\n";
            std::cout << "  T* = " << format_g17(ref.T_star) << "\n";
            std::cout << "  U* = " << format_g17(ref.state.U) << "\n";
            std::cout << "  N* = " << vec_text(ref.state.N) << "\n";
        }
    } catch (const BalanceError& e) {
        j["error"] = e.what();
        if (json_mode)
            std::cout << j.dump(2) << "\n";
        else
            std::cerr << "error: " << e.what() << "\n";
        return kExitSemantic;
    }
    return kExitOk;
}

int cmd_equilibrium(const RunConfig& cfg) {
    const NetworkSpec spec = parse_network_file(cfg.input);
    const Matrices mat = build_matrices(spec);
    const State origin{cfg.U0, parse_amount_list(cfg.N0_text, spec.n())};
    try {
        const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
        const EquilibriumResult res = equilibrium_in_class(spec, mat, ref, origin);
        const double T = temperature_of(res.state, spec.species, spec.constants);
        double worst_rate = 0.0, worst_energy = 0.0;
        for (const auto& pr : res.residuals) {
            worst_rate = std::max(worst_rate, pr.rate);
            worst_energy = std::max(worst_energy, pr.energy);
        }
        if (cfg.json_mode) {
            json j;
            j["U"] = res.state.U;
            j["N"] = res.state.N;
            j["T"] = T;
            j["beta"] = res.dual.beta;
            j["gamma"] = res.dual.gamma;
            j["iterations"] = res.iterations;
            j["projected_gradient"] = res.grad_norm;
            j["class_residual"] = res.class_residual;
            j["worst_rate_residual"] = worst_rate;
            j["worst_energy_residual"] = worst_energy;
            std::cout << j.dump(2) << "\n";
        } else {
            std::cout << "equilibrium in the class of (U0, N0):\n";
            std::cout << "  U** = " << format_g17(res.state.U) << "\n";
            std::cout << "  N** = " << vec_text(res.state.N) << "\n";
            std::cout << "  T** = " << format_g17(T) << "\n";
            std::cout << "  iterations = " << res.iterations << ", projected gradient = " << format_g17(res.grad_norm)
                      << "\n";
            std::cout << "  class residual = " << format_g17(res.class_residual)
                      << ", worst pair residuals: rate = " << format_g17(worst_rate)
                      << ", energy = " << format_g17(worst_energy) << "\n";
        }
    } catch (const BalanceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSemantic;
    }
    return kExitOk;
}

struct SimOutcome {
    json summary;
};

SimOutcome run_one_simulation(const NetworkSpec& spec, const Matrices& mat, const ReferenceEquilibrium* ref,
                              const State& start, const RunConfig& cfg, const std::string& csv_path) {
    IntegratorOptions opts;
    opts.t_end = cfg.t_end;
    opts.rtol = cfg.rtol;
    opts.atol = cfg.atol;
    opts.dense_output = cfg.samples > 0;
    const Trajectory traj = integrate(spec, mat, start, opts);

    LyapunovTrace trace;
    if (ref) trace = lyapunov_trace(*ref, spec, mat, traj);

    auto row_of = [&](double t, const State& st) {
        std::string line = format_g17(t) + "," + format_g17(st.U);
        for (double v : st.N) line += "," + format_g17(v);
        line += "," + format_g17(temperature_of(st, spec.species, spec.constants));
        line += ",";
        line += ref ? format_g17(availability_S_A(*ref, spec, st)) : "nan";
        return line;
    };

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw std::runtime_error("cannot write '" + csv_path + "'");
        csv << "t,U";
        for (const auto& sp : spec.species) csv << ",N_" << sp.name;
        csv << ",T,S_A\n";
        if (cfg.samples > 0) {
            for (int s = 0; s <= cfg.samples; ++s) {
                const double t = traj.times.back() * s / cfg.samples;
                csv << row_of(t, traj.at(t)) << "\n";
            }
        } else {
            for (size_t k = 0; k < traj.times.size(); ++k) csv << row_of(traj.times[k], traj.states[k]) << "\n";
        }
    }

    json summary;
    summary["t_end"] = traj.times.back();
    summary["terminal"] = {{"U", traj.terminal().U},
                           {"N", traj.terminal().N},
                           {"T", temperature_of(traj.terminal(), spec.species, spec.constants)}};
    summary["accepted_steps"] = traj.accepted;
    summary["rejected_steps"] = traj.rejected;
    summary["converged"] = traj.converged;
    summary["step_underflow"] = traj.step_underflow;
    if (!traj.diagnostic.empty()) summary["diagnostic"] = traj.diagnostic;
    summary["class_drift"] = class_drift(mat, traj);
    if (ref) {
        summary["S_A_terminal"] = trace.S_A.back();
        summary["S_A_monotone"] = trace.max_forward_increase <= 1e-8 * (1.0 + trace.S_A.front());
        summary["max_dissipation_rate"] = trace.max_rate;
    }
    if (!csv_path.empty()) summary["csv"] = csv_path;
    return {summary};
}

int cmd_simulate(const RunConfig& cfg) {
    const NetworkSpec spec = parse_network_file(cfg.input);
    const Matrices mat = build_matrices(spec);
    const State start{cfg.U0, parse_amount_list(cfg.N0_text, spec.n())};

    // The availability trace needs a detailed-balanced reference; networks
    // without one still simulate, with S_A reported as nan.
    ReferenceEquilibrium ref;
    bool have_ref = true;
    try {
        ref = reference_equilibrium(spec, mat);
    } catch (const BalanceError&) {
        have_ref = false;
    }

    json all = json::array();
    if (cfg.sweep > 0) {
        const double T0 = temperature_of(start, spec.species, spec.constants);
        std::mt19937 rng(cfg.seed);
        std::uniform_real_distribution<double> jitter(-0.3, 0.3);
        std::vector<State> starts;
        for (int i = 0; i < cfg.sweep; ++i) {
            State s = start;
            s.U = 0.0;
            for (size_t k = 0; k < s.N.size(); ++k) {
                s.N[k] = start.N[k] * std::exp(jitter(rng));
                s.U += s.N[k] * molar_u(spec.species[k], T0, spec.constants);
            }
            starts.push_back(std::move(s));
        }
        auto stem = [&](int i) {
            if (cfg.out_path.empty()) return std::string();
            const size_t dotpos = cfg.out_path.rfind('.');
            if (dotpos == std::string::npos) return cfg.out_path + "-" + std::to_string(i);
            return cfg.out_path.substr(0, dotpos) + "-" + std::to_string(i) + cfg.out_path.substr(dotpos);
        };
        std::vector<std::future<SimOutcome>> jobs;
        for (int i = 0; i < cfg.sweep; ++i)
            jobs.push_back(std::async(std::launch::async, [&, i] {
                return run_one_simulation(spec, mat, have_ref ? &ref : nullptr, starts[static_cast<size_t>(i)], cfg,
                                          stem(i));
            }));
        for (auto& job : jobs) all.push_back(job.get().summary);
    } else {
        all.push_back(
            run_one_simulation(spec, mat, have_ref ? &ref : nullptr, start, cfg, cfg.out_path).summary);
    }

    const json out = cfg.sweep > 0 ? all : all[0];
    if (!cfg.summary_path.empty()) {
        std::ofstream f(cfg.summary_path);
        if (!f) throw std::runtime_error("cannot write '" + cfg.summary_path + "'");
        f << out.dump(2) << "\n";
    }
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"non-isothermal reaction network toolkit"};
    app.require_subcommand(1);

    RunConfig cfg;

    auto* validate = app.add_subcommand("validate", "check a network file against the structural conditions");
    validate->add_option("file", cfg.input, "network file")->required();
    validate->add_flag("--json", cfg.json_mode, "machine-readable report");

    auto* matrices = app.add_subcommand("matrices", "print the graph matrices and kernel bases");
    matrices->add_option("file", cfg.input, "network file")->required();
    matrices->add_flag("--json", cfg.json_mode, "machine-readable dump");

    auto* balance = app.add_subcommand("balance", "Wegscheider verdict and reference equilibrium");
    balance->add_option("file", cfg.input, "network file")->required();
    balance->add_flag("--json", cfg.json_mode, "machine-readable report");

    auto* equil = app.add_subcommand("equilibrium", "equilibrium in the compatibility class of (U0, N0)");
    equil->add_option("file", cfg.input, "network file")->required();
    equil->add_option("--U0", cfg.U0, "initial internal energy")->required();
    equil->add_option("--N0", cfg.N0_text, "initial amounts, comma separated")->required();
    equil->add_flag("--json", cfg.json_mode, "machine-readable report");

    auto* sim = app.add_subcommand("simulate", "integrate the dynamics from (U0, N0)");
    sim->add_option("file", cfg.input, "network file")->required();
    sim->add_option("--U0", cfg.U0, "initial internal energy")->required();
    sim->add_option("--N0", cfg.N0_text, "initial amounts, comma separated")->required();
    sim->add_option("--t-end", cfg.t_end, "integration horizon");
    sim->add_option("--rtol", cfg.rtol, "relative tolerance");
    sim->add_option("--atol", cfg.atol, "absolute tolerance");
    sim->add_option("--out", cfg.out_path, "trajectory CSV path");
    sim->add_option("--samples", cfg.samples, "uniform samples via dense output (0: accepted steps)");
    sim->add_option("--sweep", cfg.sweep, "run k jittered initial conditions concurrently");
    sim->add_option("--seed", cfg.seed, "sweep jitter seed");
    sim->add_option("--summary", cfg.summary_path, "write the summary JSON here too");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitParse;
    }

    try {
        if (app.got_subcommand(validate)) return cmd_validate(cfg.input, cfg.json_mode);
        if (app.got_subcommand(matrices)) return cmd_matrices(cfg.input, cfg.json_mode);
        if (app.got_subcommand(balance)) return cmd_balance(cfg.input, cfg.json_mode);
        if (app.got_subcommand(equil)) return cmd_equilibrium(cfg);
        if (app.got_subcommand(sim)) return cmd_simulate(cfg);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    }
    return kExitOk;
}
