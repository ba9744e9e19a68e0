#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "thermocrn/equilibrium.hpp"
#include "thermocrn/kinetics.hpp"

using namespace thermocrn;

namespace {

void check_fields_match(const StateDerivative& a, const StateDerivative& b, double rel = 1e-10) {
    double scale = std::max(std::abs(a.dU), std::abs(b.dU));
    for (size_t i = 0; i < a.dN.size(); ++i) scale = std::max({scale, std::abs(a.dN[i]), std::abs(b.dN[i])});
    scale = std::max(scale, 1e-300);
    CHECK(std::abs(a.dU - b.dU) <= rel * scale);
    for (size_t i = 0; i < a.dN.size(); ++i) CHECK(std::abs(a.dN[i] - b.dN[i]) <= rel * scale);
}

}  // namespace

TEST_CASE("reaction_rates: worked example and flux closed forms") {
    const NetworkSpec iso = tu::load("example_isolated.crn");
    const RateVector v = reaction_rates(iso, {6.0, {1, 1, 2}});
    REQUIRE(v.v.size() == 2);
    CHECK(v.v[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(v.v[1] == doctest::Approx(2.0).epsilon(1e-14));

    const NetworkSpec open = tu::load("open_io_he.crn");
    State st{0.0, {4.0, 1.0, 1.0}};
    const double T = 1.3;
    for (int i = 0; i < open.n(); ++i)
        st.U += st.N[static_cast<size_t>(i)] * molar_u(open.species[static_cast<size_t>(i)], T, open.constants);
    const RateVector vo = reaction_rates(open, st);
    // general transition-state formula reduces to k~, k~ N_i, k~
    CHECK(tu::rel_diff(vo.v[2], 0.5) < 1e-12);
    CHECK(tu::rel_diff(vo.v[3], 0.5 * 4.0) < 1e-12);
    CHECK(tu::rel_diff(vo.v[4], 0.8) < 1e-12);

    SUBCASE("outflow at k = 0.3, N = 4") {
        const char* text =
            "[constants]\nkappa = 1\nT_env = 1\n[species]\nX1 { z = 1, p = 1.5, e = 0 }\n"
            "[reactions]\n@out X1 { k = 0.3 }\n";
        const NetworkSpec sp = parse_network(text);
        const RateVector v = reaction_rates(sp, {1.5 * 4.0 * 0.9, {4.0}});
        CHECK(tu::rel_diff(v.v[0], 1.2) < 1e-12);
    }
}

TEST_CASE("vector_field: equilibria and flux bookkeeping") {
    SUBCASE("the worked example is stationary at (6, (1,1,2))") {
        const NetworkSpec spec = tu::load("example_isolated.crn");
        const Matrices mat = build_matrices(spec);
        const StateDerivative d = vector_field(spec, mat, {6.0, {1, 1, 2}});
        CHECK(d.dU == 0.0);
        for (double x : d.dN) CHECK(std::abs(x) < 1e-14);
    }
    SUBCASE("heat exchange is quiet at T = T_env") {
        const NetworkSpec spec = tu::load("he_only.crn");
        const Matrices mat = build_matrices(spec);
        const StateDerivative d = vector_field(spec, mat, {1.5, {1.0}});  // T = 1 = T_env
        CHECK(std::abs(d.dU) < 1e-14);
    }
    SUBCASE("in/out flux on one species") {
        const char* text =
            "[constants]\nkappa = 1\nT_env = 1\n[species]\nX1 { z = 1, p = 1.5, e = 0 }\n"
            "[reactions]\n@in X1 { k = 0.5 }\n@out X1 { k = 0.5 }\n";
        const NetworkSpec spec = parse_network(text);
        const Matrices mat = build_matrices(spec);
        const double T = 1.0;  // = T_env
        const StateDerivative d = vector_field(spec, mat, {1.5 * 2.0 * T, {2.0}});
        CHECK(d.dN[0] == doctest::Approx(-0.5).epsilon(1e-14));
        CHECK(d.dU == doctest::Approx(0.5 * 1.5 * 1.0 - 1.0 * 1.5 * T).epsilon(1e-14));
    }
}

TEST_CASE("conductance_matrices at the worked reference") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    const State ref{6.0, {1, 1, 2}};
    const Conductances K = conductance_matrices(spec, mat, ref);
    REQUIRE(K.cr_rate_star.size() == 1);
    CHECK(K.k_cr(1.0)[0] == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(K.k_cr(3.0)[0] == doctest::Approx(6.0).epsilon(1e-13));

    SUBCASE("imbalanced reference is refused with a residual report") {
        CHECK_THROWS_WITH_AS(conductance_matrices(spec, mat, State{6.0, {2, 2, 1}}),
                             doctest::Contains("not detailed balanced"), BalanceError);
    }
}

TEST_CASE("reaction_rates: kind slices are contiguous blocks") {
    const NetworkSpec spec = tu::load("open_io_he.crn");
    State st{0.0, {1.0, 1.0, 2.0}};
    st.U = 6.0;  // T = 1
    const RateVector v = reaction_rates(spec, st);
    CHECK(v.cr(spec).size() == 2);
    CHECK(v.io(spec).size() == 2);
    CHECK(v.he(spec).size() == 1);
    CHECK(v.cr(spec)[0] == v.v[0]);
    CHECK(v.io(spec)[0] == v.v[2]);
    CHECK(v.he(spec)[0] == v.v[4]);
}

TEST_CASE("conductance_matrices: rate-balanced pair with a split activated state is refused") {
    // kb = e balances the rates at (6,(1,1,2)) with T* = 1, but the backward
    // activation (1,0,0) breaks the shared-conductance identity off T*.
    const std::string text =
        "[constants]\nkappa = 1\n[species]\nX1 { z = 1, p = 1.5, e = 0 }\nX2 { z = 1, p = 1.5, e = 0 }\n"
        "X3 { z = 1, p = 1.5, e = 0 }\n[reactions]\nX1 + X2 <-> X3 { kf = 2, kb = " +
        format_g17(std::exp(1.0)) + ", gas = (0,0,0), gasb = (1,0,0) }\n";
    const NetworkSpec spec = parse_network(text);
    const Matrices mat = build_matrices(spec);
    const State ref{6.0, {1, 1, 2}};
    for (const auto& pr : detailed_balance_residual(spec, mat, ref)) CHECK(pr.rate < 1e-14);
    CHECK_THROWS_WITH_AS(conductance_matrices(spec, mat, ref), doctest::Contains("conductance expressions disagree"),
                         BalanceError);
}

TEST_CASE("conductance_matrices: flux pair diagonal") {
    const NetworkSpec spec = tu::load("open_io_he.crn");
    const Matrices mat = build_matrices(spec);
    const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
    const Conductances K = conductance_matrices(spec, mat, ref.state);
    REQUIRE(K.io.size() == 1);
    CHECK(K.io[0] == doctest::Approx(0.5).epsilon(1e-12));  // v_in = k_in at the reference
}

TEST_CASE("compact_vector_field equals the direct field") {
    std::mt19937 rng(17);
    for (const char* name : {"example_isolated.crn", "example_isothermal.crn", "open_io_he.crn", "he_only.crn",
                             "luxr.crn", "mixed_open.crn", "mixed_isothermal.crn"}) {
        CAPTURE(name);
        const NetworkSpec spec = tu::load(name);
        const Matrices mat = build_matrices(spec);
        const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
        const Conductances K = conductance_matrices(spec, mat, ref.state);

        // stationary at the reference
        const StateDerivative at_ref = compact_vector_field(spec, mat, K, ref.state, ref.state);
        CHECK(std::abs(at_ref.dU) < 1e-12);
        for (double x : at_ref.dN) CHECK(std::abs(x) < 1e-12);

        for (int trial = 0; trial < 100; ++trial) {
            const State st = tu::random_state(spec, rng);
            check_fields_match(vector_field(spec, mat, st), compact_vector_field(spec, mat, K, ref.state, st));
        }
    }
}

TEST_CASE("compact_vector_field at the displaced worked state") {
    const NetworkSpec spec = tu::load("example_isolated.crn");
    const Matrices mat = build_matrices(spec);
    const State ref{6.0, {1, 1, 2}};
    const Conductances K = conductance_matrices(spec, mat, ref);
    const State st{6.0, {2, 2, 1}};
    check_fields_match(vector_field(spec, mat, st), compact_vector_field(spec, mat, K, ref, st));
}

TEST_CASE("isothermal compact form collapses to the single-conductance formula") {
    const NetworkSpec spec = tu::load("example_isothermal.crn");
    const Matrices mat = build_matrices(spec);
    const ReferenceEquilibrium ref = reference_equilibrium(spec, mat);
    const Conductances K = conductance_matrices(spec, mat, ref.state);
    const double Te = spec.env_temperature();
    const Vec uTe = molar_u_vector(spec.species, Te, spec.constants);

    std::mt19937 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const State st = tu::random_state(spec, rng);  // on the U = N'u(T_env) surface
        // assemble -Y B K B' Exp(Y (Ln N - Ln N*)) with the constant block K
        Vec w(static_cast<size_t>(mat.m()));
        for (int c = 0; c < mat.m(); ++c) {
            double s = 0.0;
            for (int i = 0; i < spec.n(); ++i)
                s += mat.Y(i, c) * (std::log(st.N[static_cast<size_t>(i)]) - std::log(ref.state.N[static_cast<size_t>(i)]));
            w[static_cast<size_t>(c)] = std::exp(s);
        }
        Vec kdiag = K.k_cr(Te);
        kdiag.insert(kdiag.end(), K.io.begin(), K.io.end());
        const Mat L = laplacian(mat.B, kdiag);
        const Vec Lw = matvec(L, w);
        Vec ndot = matvec(mat.Y, Lw);
        for (double& x : ndot) x = -x;
        double udot = 0.0;
        for (int i = 0; i < spec.n(); ++i) udot += uTe[static_cast<size_t>(i)] * ndot[static_cast<size_t>(i)];

        const StateDerivative d = compact_vector_field(spec, mat, K, ref.state, st);
        StateDerivative arjan;
        arjan.dU = udot;
        arjan.dN = ndot;
        check_fields_match(d, arjan);
    }
}

TEST_CASE("laplacian structure") {
    SUBCASE("two-complex pair") {
        Mat B(2, 1);
        B(0, 0) = -1.0;
        B(1, 0) = 1.0;
        const Mat L = laplacian(B, {2.0});
        CHECK(L(0, 0) == 2.0);
        CHECK(L(0, 1) == -2.0);
        CHECK(L(1, 0) == -2.0);
        CHECK(L(1, 1) == 2.0);
    }

    std::mt19937 rng(29);
    std::uniform_int_distribution<int> usize(2, 7);
    std::uniform_real_distribution<double> uk(0.1, 5.0);

    SUBCASE("row and column sums vanish for random pairings") {
        for (int trial = 0; trial < 100; ++trial) {
            const int m = usize(rng);
            const int pairs = usize(rng);
            Mat B(m, pairs);
            std::uniform_int_distribution<int> urow(0, m - 1);
            Vec K(static_cast<size_t>(pairs));
            for (int c = 0; c < pairs; ++c) {
                int a = urow(rng), b = urow(rng);
                while (b == a) b = urow(rng);
                B(a, c) = -1.0;
                B(b, c) = 1.0;
                K[static_cast<size_t>(c)] = uk(rng);
            }
            const Mat L = laplacian(B, K);
            for (int i = 0; i < m; ++i) {
                double rs = 0.0, cs = 0.0;
                for (int j = 0; j < m; ++j) {
                    rs += L(i, j);
                    cs += L(j, i);
                    if (i != j) CHECK(L(i, j) <= 0.0);
                }
                CHECK(std::abs(rs) < 1e-12);
                CHECK(std::abs(cs) < 1e-12);
            }
        }
    }

    SUBCASE("gamma' L Exp(gamma) is nonnegative, zero on ker(B')") {
        const Matrices mat = build_matrices(tu::load("example_isolated.crn"));
        const Mat L = laplacian(mat.B, {2.0});
        std::uniform_real_distribution<double> ug(-3.0, 3.0);
        for (int trial = 0; trial < 1000; ++trial) {
            Vec g(static_cast<size_t>(L.rows));
            for (double& x : g) x = ug(rng);
            Vec eg(g.size());
            for (size_t i = 0; i < g.size(); ++i) eg[i] = std::exp(g[i]);
            CHECK(dot(g, matvec(L, eg)) >= -1e-12);
        }
        // equality case: constant vectors span ker(B') here
        const Vec c(static_cast<size_t>(L.rows), 0.7);
        Vec ec(c.size());
        for (size_t i = 0; i < c.size(); ++i) ec[i] = std::exp(c[i]);
        CHECK(std::abs(dot(c, matvec(L, ec))) < 1e-14);
    }

    SUBCASE("nonpositive conductance is rejected") {
        Mat B(2, 1);
        B(0, 0) = -1.0;
        B(1, 0) = 1.0;
        CHECK_THROWS_AS(laplacian(B, {0.0}), std::invalid_argument);
    }
}

TEST_CASE("isothermal surface invariance: dU/dt = u(T_env)' dN/dt identically") {
    const NetworkSpec spec = tu::load("example_isothermal.crn");
    const Matrices mat = build_matrices(spec);
    const Vec uTe = molar_u_vector(spec.species, spec.env_temperature(), spec.constants);
    std::mt19937 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const State st = tu::random_state(spec, rng);
        const StateDerivative d = vector_field(spec, mat, st);
        double proj = d.dU;
        for (size_t i = 0; i < d.dN.size(); ++i) proj -= uTe[i] * d.dN[i];
        double scale = 1.0 + std::abs(d.dU);
        CHECK(std::abs(proj) < 1e-12 * scale);
    }
}

TEST_CASE("flux driving terms are zero at T* and negative elsewhere") {
    const NetworkSpec spec = tu::load("open_io_he.crn");
    const Matrices mat = build_matrices(spec);
    const double T_star = spec.env_temperature();
    const Vec g_star = molar_g_vector(spec.species, T_star, spec.constants);

    auto xi = [&](int j, double T) {
        const Vec g = molar_g_vector(spec.species, T, spec.constants);
        double v = (1.0 / T_star - 1.0 / T) * delta_u(spec, spec.reactions[static_cast<size_t>(j)], T);
        for (int i = 0; i < spec.n(); ++i)
            v += (g[static_cast<size_t>(i)] / T - g_star[static_cast<size_t>(i)] / T_star) * mat.Gamma(i, j);
        return v;
    };

    for (int j = 0; j < spec.r(); ++j) {
        if (spec.reactions[static_cast<size_t>(j)].kind != ReactionKind::IO_IN &&
            spec.reactions[static_cast<size_t>(j)].kind != ReactionKind::IO_OUT)
            continue;
        CHECK(std::abs(xi(j, T_star)) < 1e-14);
        for (int s = 0; s <= 200; ++s) {
            const double T = T_star / 10.0 + s * (10.0 * T_star - T_star / 10.0) / 200.0;
            if (std::abs(T - T_star) < 1e-2) continue;
            CHECK(xi(j, T) < 0.0);
        }
    }
}

TEST_CASE("rates stay positive and finite across extreme temperatures") {
    const NetworkSpec spec = tu::load("open_io_he.crn");
    const State base{0.0, {1.0, 2.0, 0.5}};
    for (double T = 1e-6; T <= 1e6; T *= 10.0) {
        State st = base;
        st.U = 0.0;
        for (int i = 0; i < spec.n(); ++i)
            st.U += st.N[static_cast<size_t>(i)] * molar_u(spec.species[static_cast<size_t>(i)], T, spec.constants);
        const RateVector v = reaction_rates(spec, st);
        for (double x : v.v) {
            CHECK(std::isfinite(x));
            CHECK(x > 0.0);
        }
    }
}
