#include <doctest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "thermocrn/dynamics.hpp"

using namespace thermocrn;

namespace {

double state_distance(const State& a, const State& b) {
    double s = (a.U - b.U) * (a.U - b.U);
    for (size_t i = 0; i < a.N.size(); ++i) s += (a.N[i] - b.N[i]) * (a.N[i] - b.N[i]);
    return std::sqrt(s);
}

double temperature(const NetworkSpec& spec, const State& st) {
    return temperature_of(st, spec.species, spec.constants);
}

}  // namespace

TEST_CASE("integrate: an equilibrium start stays put") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    IntegratorOptions opts;
    opts.t_end = 100.0;
    const Trajectory traj = integrate(spec, mat, {6.0, {1, 1, 2}}, opts);
    for (const State& st : traj.states) CHECK(state_distance(st, traj.initial()) < 1e-10);
}

TEST_CASE("integrate: relaxation to the in-class equilibrium") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
    const State origin{6.0, {2, 2, 1}};
    IntegratorOptions opts;
    opts.t_end = 200.0;
    const Trajectory traj = integrate(spec, mat, origin, opts);
    const EquilibriumResult eq = equilibrium_in_class(spec, mat, ref, origin);
    CHECK(state_distance(traj.terminal(), eq.state) < 1e-6);

    SUBCASE("convergence report") {
        const ConvergenceReport rep = converged_state(traj, eq.state, 1e-6);
        REQUIRE(rep.first_time_within.has_value());
        CHECK(*rep.first_time_within < 200.0);
        CHECK(rep.monotone_tail);
        CHECK(rep.terminal_distance < 1e-6);
    }
    SUBCASE("already at the target") {
        const ConvergenceReport rep = converged_state(traj, traj.initial(), 1e-9);
        REQUIRE(rep.first_time_within.has_value());
        CHECK(*rep.first_time_within == 0.0);
    }
    SUBCASE("unreachable tolerance reports cleanly") {
        const ConvergenceReport rep = converged_state(traj, eq.state, 0.0);
        CHECK_FALSE(rep.first_time_within.has_value());
        CHECK(rep.terminal_distance >= 0.0);
    }
}

TEST_CASE("integrate: pure heat exchange relaxes at rate k/C") {
    const NetworkSpec spec = tu::load("he_only.crn");
    const Matrices mat = build_matrices(spec);
    IntegratorOptions opts;
    opts.t_end = 12.0;
    opts.max_step = 0.25;  // keep enough samples for the fit
    const Trajectory traj = integrate(spec, mat, {3.0, {1.0}}, opts);  // T(0) = 2, T_env = 1

    // least-squares slope of ln(T - T_env)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const double gap = temperature(spec, traj.states[k]) - 1.0;
        if (gap <= 1e-12) continue;
        const double x = traj.times[k], y = std::log(gap);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    REQUIRE(m > 10);
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double expected = 0.8 / 1.5;  // k / (kappa N p)
    CHECK(std::abs(-slope - expected) < 0.02 * expected);
}

TEST_CASE("integrate: initial-state validation") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    IntegratorOptions opts;
    opts.t_end = 1.0;
    CHECK_THROWS_AS(integrate(spec, mat, {6.0, {1, -1, 2}}, opts), DomainError);

    const NetworkSpec th = tu::load("example_isothermal.crn");
    const Matrices mth = build_matrices(th);
    CHECK_THROWS_WITH_AS(integrate(th, mth, {10.0, {1, 1, 1}}, opts), doctest::Contains("isothermal surface"),
                         DomainError);
}

TEST_CASE("integrate: step underflow leaves a partial trajectory with a diagnostic") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    IntegratorOptions opts;
    opts.t_end = 1.0;
    opts.max_step = 1e-16;
    const Trajectory traj = integrate(spec, mat, {6.0, {2, 2, 1}}, opts);
    CHECK(traj.step_underflow);
    CHECK(!traj.diagnostic.empty());
    CHECK(traj.times.back() < 1.0);
}

TEST_CASE("class_drift and conservation") {
    SUBCASE("isolated run conserves U and the kernel projections") {
        const NetworkSpec spec = tu::load("example_isolated.crn");
        const Matrices mat = build_matrices(spec);
        IntegratorOptions opts;
        opts.t_end = 200.0;
        const Trajectory traj = integrate(spec, mat, {6.0, {2, 2, 1}}, opts);
        CHECK(class_drift(mat, traj) < 1e-8);
        for (const State& st : traj.states) CHECK(std::abs(st.U - 6.0) < 1e-10 * (1.0 + 6.0));
    }
    SUBCASE("isothermal run stays on the energy surface") {
        const NetworkSpec spec = tu::load("example_isothermal.crn");
        const Matrices mat = build_matrices(spec);
        const Vec uTe = molar_u_vector(spec.species, spec.env_temperature(), spec.constants);
        State origin{0.0, {2, 2, 1}};
        for (size_t i = 0; i < 3; ++i) origin.U += origin.N[i] * uTe[i];
        IntegratorOptions opts;
        opts.t_end = 100.0;
        const Trajectory traj = integrate(spec, mat, origin, opts);
        for (const State& st : traj.states) {
            double surf = st.U;
            for (size_t i = 0; i < 3; ++i) surf -= st.N[i] * uTe[i];
            CHECK(std::abs(surf) < 1e-8 * (1.0 + std::abs(st.U)));
        }
        CHECK(class_drift(mat, traj) < 1e-8);
    }
}

TEST_CASE("lyapunov_trace") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);

    SUBCASE("constant equilibrium trajectory has vanishing availability") {
        IntegratorOptions opts;
        opts.t_end = 10.0;
        const Trajectory traj = integrate(spec, mat, ref.state, opts);
        const LyapunovTrace tr = lyapunov_trace(ref, spec, mat, traj);
        for (double v : tr.S_A) CHECK(std::abs(v) < 1e-12);
    }

    SUBCASE("relaxation dissipates monotonically to the floor") {
        IntegratorOptions opts;
        opts.t_end = 200.0;
        const Trajectory traj = integrate(spec, mat, {6.0, {2, 2, 1}}, opts);
        const LyapunovTrace tr = lyapunov_trace(ref, spec, mat, traj);
        CHECK(tr.S_A.back() < 1e-10);
        CHECK(tr.max_forward_increase <= 1e-8 * (1.0 + tr.S_A.front()));
        CHECK(tr.max_rate <= 1e-12 * (1.0 + tr.S_A.front()));
        for (size_t k = 1; k + 1 < tr.S_A.size(); ++k) CHECK(tr.S_A[k] < tr.S_A[k - 1] + 1e-14);
        // the rate vanishes only at (numerical) equilibria
        CHECK(tr.max_rate_off_equilibrium(1e-8) < 0.0);
    }

    SUBCASE("heat-exchange dissipation matches -k (T*-T)^2 / (T* T)") {
        const NetworkSpec he = tu::load("he_only.crn");
        const Matrices mhe = build_matrices(he);
        const ReferenceEquilibrium rhe = reference_equilibrium(he, mhe);
        IntegratorOptions opts;
        opts.t_end = 8.0;
        const Trajectory traj = integrate(he, mhe, {3.0, {1.0}}, opts);
        const LyapunovTrace tr = lyapunov_trace(rhe, he, mhe, traj);
        for (size_t k = 0; k < traj.states.size(); ++k) {
            const double T = temperature(he, traj.states[k]);
            const double expected = -0.8 * (1.0 - T) * (1.0 - T) / T;  // T* = 1
            CHECK(std::abs(tr.rate[k] - expected) < 1e-12 * (1.0 + std::abs(expected)));
            CHECK(tr.rate[k] <= 0.0);
        }
    }

    SUBCASE("open network run dissipates from a hot start") {
        const NetworkSpec open = tu::load("open_io_he.crn");
        const Matrices mo = build_matrices(open);
        const ReferenceEquilibrium ro = reference_equilibrium(open, mo);
        State origin{0.0, {2.0, 0.7, 1.2}};
        for (int i = 0; i < open.n(); ++i)
            origin.U += origin.N[static_cast<size_t>(i)] * molar_u(open.species[static_cast<size_t>(i)], 1.8, open.constants);
        IntegratorOptions opts;
        opts.t_end = 100.0;
        const Trajectory traj = integrate(open, mo, origin, opts);
        const LyapunovTrace tr = lyapunov_trace(ro, open, mo, traj);
        CHECK(tr.max_rate <= 1e-12 * (1.0 + tr.S_A.front()));
        CHECK(tr.max_forward_increase <= 1e-8 * (1.0 + tr.S_A.front()));
    }
}

TEST_CASE("analytic dissipation rate matches the sampled slope") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
    IntegratorOptions opts;
    opts.t_end = 50.0;
    opts.max_step = 0.05;
    const Trajectory traj = integrate(spec, mat, {6.0, {2, 2, 1}}, opts);
    const LyapunovTrace tr = lyapunov_trace(ref, spec, mat, traj);
    int compared = 0;
    for (size_t k = 0; k + 1 < tr.S_A.size(); ++k) {
        const double dt = traj.times[k + 1] - traj.times[k];
        const double fd = (tr.S_A[k + 1] - tr.S_A[k]) / dt;
        const double avg = 0.5 * (tr.rate[k] + tr.rate[k + 1]);
        if (std::abs(avg) < 1e-10) continue;
        CHECK(std::abs(fd - avg) <= 0.05 * std::abs(avg) + 1e-12);
        ++compared;
    }
    CHECK(compared > 50);
}

TEST_CASE("fixed-step order of the embedded pair is 5 on a linear problem") {
    // Pure heat exchange is linear in U: dU/dt = k (T_env - U/C).
    const NetworkSpec spec = tu::load("he_only.crn");
    const Matrices mat = build_matrices(spec);
    const double C = 1.5, k = 0.8;
    const double U0 = 3.0, t_end = 1.0;
    const double exact = 1.5 + (U0 - 1.5) * std::exp(-k / C * t_end);

    auto terminal_error = [&](double h) {
        State st{U0, {1.0}};
        const int steps = static_cast<int>(std::llround(t_end / h));
        for (int s = 0; s < steps; ++s) st = *rk45_fixed_step(spec, mat, st, h);
        return std::abs(st.U - exact);
    };
    const double e1 = terminal_error(0.1);
    const double e2 = terminal_error(0.05);
    const double e3 = terminal_error(0.025);
    CHECK(std::log2(e1 / e2) >= 4.5);
    CHECK(std::log2(e2 / e3) >= 4.5);
}

TEST_CASE("tolerance sweep tightens the terminal state") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    auto terminal = [&](double rtol) {
        IntegratorOptions opts;
        opts.t_end = 2.0;
        opts.rtol = rtol;
        opts.atol = rtol * 1e-2;
        return integrate(spec, mat, {6.0, {2, 2, 1}}, opts).terminal();
    };
    const State tight = terminal(1e-12);
    const double err_loose = state_distance(terminal(1e-5), tight);
    const double err_mid = state_distance(terminal(1e-8), tight);
    CHECK(err_mid < err_loose);
    CHECK(err_mid < 1e-7);
}

TEST_CASE("dense output interpolates accepted steps") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    IntegratorOptions opts;
    opts.t_end = 5.0;
    opts.dense_output = true;
    const Trajectory traj = integrate(spec, mat, {6.0, {2, 2, 1}}, opts);
    REQUIRE(!traj.dense.empty());
    // exact at the accepted samples
    for (size_t k = 0; k < traj.times.size(); ++k)
        CHECK(state_distance(traj.at(traj.times[k]), traj.states[k]) < 1e-9);
    // close to a tight re-integration at off-sample times
    IntegratorOptions fine;
    fine.t_end = 1.7;
    fine.rtol = 1e-12;
    fine.atol = 1e-14;
    const Trajectory probe = integrate(spec, mat, {6.0, {2, 2, 1}}, fine);
    CHECK(state_distance(traj.at(1.7), probe.terminal()) < 1e-6);
}

TEST_CASE("random starts keep the invariants on every bundled network") {
    std::mt19937 rng(97);
    for (const char* name : {"example_isolated.crn", "example_isothermal.crn", "open_io_he.crn", "luxr.crn",
                             "mixed_open.crn", "mixed_isothermal.crn"}) {
        CAPTURE(name);
        const NetworkSpec spec = tu::load(name);
        const Matrices mat = build_matrices(spec);
        const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
        for (int trial = 0; trial < 5; ++trial) {
            const State origin = tu::random_state(spec, rng, 0.7);
            IntegratorOptions opts;
            opts.t_end = 50.0;
            const Trajectory traj = integrate(spec, mat, origin, opts);
            CHECK(class_drift(mat, traj) < 1e-8);
            const LyapunovTrace tr = lyapunov_trace(ref, spec, mat, traj);
            CHECK(tr.max_forward_increase <= 1e-8 * (1.0 + tr.S_A.front()));
            CHECK(tr.max_rate <= 1e-12 * (1.0 + tr.S_A.front()));
        }
    }
}
