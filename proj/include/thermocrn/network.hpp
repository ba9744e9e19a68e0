#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermocrn/linalg.hpp"
#include "thermocrn/rational.hpp"
#include "thermocrn/thermo.hpp"

namespace thermocrn {

/// Integer combination of species forming one side of a reaction.
/// Terms are kept sorted by species index; the zero complex has no terms.
struct Complex {
    std::vector<std::pair<int, int>> terms;  // (species index, coefficient > 0)

    bool is_zero() const { return terms.empty(); }

    bool is_single(int& species_out) const {
        if (terms.size() == 1 && terms[0].second == 1) {
            species_out = terms[0].first;
            return true;
        }
        return false;
    }

    void add(int species, int coeff) {
        for (auto& t : terms)
            if (t.first == species) {
                t.second += coeff;
                return;
            }
        terms.emplace_back(species, coeff);
        std::sort(terms.begin(), terms.end());
    }

    int coeff(int species) const {
        for (const auto& t : terms)
            if (t.first == species) return t.second;
        return 0;
    }

    friend bool operator==(const Complex& a, const Complex& b) { return a.terms == b.terms; }
};

enum class ReactionKind { CR, IO_IN, IO_OUT, HE };

inline const char* to_string(ReactionKind k) {
    switch (k) {
        case ReactionKind::CR: return "CR";
        case ReactionKind::IO_IN: return "IO_IN";
        case ReactionKind::IO_OUT: return "IO_OUT";
        case ReactionKind::HE: return "HE";
    }
    return "?";
}

/// Activated-state free energy g_AS(T) = a + b*T + c*T*ln(T). The family is
/// closed under the forms mandated for mass-flux and heat-exchange edges.
struct ActivationModel {
    double a = 0.0, b = 0.0, c = 0.0;

    double operator()(double T) const { return a + b * T + c * T * std::log(T); }

    friend bool operator==(const ActivationModel& x, const ActivationModel& y) {
        return x.a == y.a && x.b == y.b && x.c == y.c;
    }
};

/// One directed reaction edge with its transition-state parameters.
struct Reaction {
    ReactionKind kind = ReactionKind::CR;
    Complex substrate;
    Complex product;
    double k = 0.0;           ///< rate constant k~ > 0
    ActivationModel gas;      ///< activated-state free energy model
    int pair = -1;            ///< index of the reverse reaction, -1 if unpaired
    int line = 0;             ///< source line, 0 when built programmatically

    friend bool operator==(const Reaction& a, const Reaction& b) {
        return a.kind == b.kind && a.substrate == b.substrate && a.product == b.product && a.k == b.k &&
               a.gas == b.gas && a.pair == b.pair;
    }
};

enum class EnergyMode { Isolated, Isothermal };

/// A parsed and normalized non-isothermal reaction network. Reactions are
/// ordered chemical block, then mass-flux block, then heat-exchange block,
/// with reversible pairs adjacent (forward first).
struct NetworkSpec {
    ThermoConstants constants;
    std::optional<double> T_env;
    EnergyMode energy_mode = EnergyMode::Isolated;
    std::vector<SpeciesThermo> species;
    std::vector<Reaction> reactions;

    int n() const { return static_cast<int>(species.size()); }
    int r() const { return static_cast<int>(reactions.size()); }

    int r_cr() const { return count_kind(ReactionKind::CR); }
    int r_io() const { return count_kind(ReactionKind::IO_IN) + count_kind(ReactionKind::IO_OUT); }
    int r_he() const { return count_kind(ReactionKind::HE); }

    bool reversible() const {
        for (const auto& rx : reactions)
            if (rx.pair < 0) return false;
        return true;
    }

    int species_index(const std::string& name) const {
        for (size_t i = 0; i < species.size(); ++i)
            if (species[i].name == name) return static_cast<int>(i);
        return -1;
    }

    double env_temperature() const {
        if (!T_env) throw std::logic_error("T_env required but not set");
        return *T_env;
    }

  private:
    int count_kind(ReactionKind k) const {
        int c = 0;
        for (const auto& rx : reactions) c += (rx.kind == k);
        return c;
    }
};

/// Exact bases attached to the graph matrices.
struct KernelBases {
    std::vector<Vec> ker_gamma_tilde_T;               ///< basis of ker(GammaTilde')
    std::vector<Vec> im_gamma_tilde;                  ///< basis of Im(GammaTilde)
    std::vector<std::vector<long long>> ker_gamma;    ///< integer basis of ker(Gamma)
    bool exact = false;                               ///< true when rational elimination applied
};

/// Graph matrices of a network: complex matrix Y, incidence D, pairing B,
/// stoichiometric Gamma = Y D, and the stoichiometric-like GammaTilde. The
/// stacked form (energy row on top of Gamma) applies when the per-reaction
/// energy increments are constants; open systems get the bordered block form
/// with a free energy column.
struct Matrices {
    std::vector<Complex> complexes;
    Mat Y;           // n x m
    Mat D;           // m x r
    Mat B;           // m x (r_cr + r_io)/2, empty unless reversible
    Mat Gamma;       // n x r
    Mat GammaTilde;  // (n+1) x r stacked, or (n+1) x (r+1) block
    bool stacked = false;
    int m() const { return static_cast<int>(complexes.size()); }
    KernelBases bases;
};

namespace detail {

inline int intern_complex(std::vector<Complex>& pool, const Complex& c) {
    for (size_t i = 0; i < pool.size(); ++i)
        if (pool[i] == c) return static_cast<int>(i);
    pool.push_back(c);
    return static_cast<int>(pool.size()) - 1;
}

}  // namespace detail

inline KernelBases kernel_image(const Matrices& mat);

inline Matrices build_matrices(const NetworkSpec& spec) {
    Matrices mat;
    const int n = spec.n();
    const int r = spec.r();

    std::vector<int> sub_idx(r), prod_idx(r);
    for (int j = 0; j < r; ++j) {
        sub_idx[j] = detail::intern_complex(mat.complexes, spec.reactions[j].substrate);
        prod_idx[j] = detail::intern_complex(mat.complexes, spec.reactions[j].product);
    }
    const int m = mat.m();

    mat.Y = Mat(n, m);
    for (int c = 0; c < m; ++c)
        for (const auto& [i, coeff] : mat.complexes[c].terms) mat.Y(i, c) = coeff;

    mat.D = Mat(m, r);
    for (int j = 0; j < r; ++j) {
        if (sub_idx[j] == prod_idx[j]) continue;  // heat-exchange column stays zero
        mat.D(sub_idx[j], j) = -1.0;
        mat.D(prod_idx[j], j) = 1.0;
    }

    if (spec.reversible()) {
        std::vector<int> forward;
        for (int j = 0; j < r; ++j) {
            const auto& rx = spec.reactions[j];
            if (rx.kind == ReactionKind::HE) continue;
            if (rx.pair > j) forward.push_back(j);
        }
        mat.B = Mat(m, static_cast<int>(forward.size()));
        for (size_t c = 0; c < forward.size(); ++c) {
            const int j = forward[c];
            mat.B(sub_idx[j], static_cast<int>(c)) = -1.0;
            mat.B(prod_idx[j], static_cast<int>(c)) = 1.0;
        }
    } else {
        mat.B = Mat(m, 0);
    }

    mat.Gamma = matmul(mat.Y, mat.D);

    const bool constant_du = (spec.energy_mode == EnergyMode::Isothermal) ||
                             (spec.energy_mode == EnergyMode::Isolated && spec.r_io() == 0 && spec.r_he() == 0);
    mat.stacked = constant_du;
    if (constant_du) {
        mat.GammaTilde = Mat(n + 1, r);
        if (spec.energy_mode == EnergyMode::Isothermal) {
            const Vec uTe = molar_u_vector(spec.species, spec.env_temperature(), spec.constants);
            for (int j = 0; j < r; ++j) {
                double du = 0.0;
                for (int i = 0; i < n; ++i) du += uTe[i] * mat.Gamma(i, j);
                mat.GammaTilde(0, j) = du;
            }
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < r; ++j) mat.GammaTilde(i + 1, j) = mat.Gamma(i, j);
    } else {
        mat.GammaTilde = Mat(n + 1, r + 1);
        mat.GammaTilde(0, r) = 1.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < r; ++j) mat.GammaTilde(i + 1, j) = mat.Gamma(i, j);
    }

    mat.bases = kernel_image(mat);
    return mat;
}

/// Exact (rational when possible) bases: ker(GammaTilde'), Im(GammaTilde),
/// and an integer basis of ker(Gamma). Bases are verified by multiplication
/// before being returned.
inline KernelBases kernel_image(const Matrices& mat) {
    KernelBases out;

    if (mat.GammaTilde.cols == 0) {  // no reactions: every direction is conserved
        out.exact = true;
        for (int i = 0; i < mat.GammaTilde.rows; ++i) {
            Vec e(static_cast<size_t>(mat.GammaTilde.rows), 0.0);
            e[static_cast<size_t>(i)] = 1.0;
            out.ker_gamma_tilde_T.push_back(std::move(e));
        }
        return out;
    }

    const Mat gt_T = transpose(mat.GammaTilde);
    auto rat_gt_T = rat_matrix_from(gt_T);
    if (rat_gt_T) {
        try {
            for (const auto& kv : kernel_rational(*rat_gt_T)) {
                Vec v(kv.size());
                for (size_t i = 0; i < kv.size(); ++i) v[i] = kv[i].to_double();
                out.ker_gamma_tilde_T.push_back(std::move(v));
            }
            auto rat_gt = rat_matrix_from(mat.GammaTilde);
            RatMat work = *rat_gt;
            for (int c : rref_rational(work)) out.im_gamma_tilde.push_back(mat.GammaTilde.col(c));
            auto rat_g = rat_matrix_from(mat.Gamma);
            for (const auto& kv : kernel_rational(*rat_g)) out.ker_gamma.push_back(to_primitive_integer(kv));
            out.exact = true;
        } catch (const std::overflow_error&) {
            out = KernelBases{};
        }
    }
    if (!out.exact) {
        const double tol = 1e-10 * std::max(1.0, max_abs(mat.GammaTilde));
        Mat w = gt_T;
        std::vector<int> pivots = rref_double(w, tol);
        std::vector<bool> is_piv(gt_T.cols, false);
        for (int c : pivots) is_piv[c] = true;
        for (int f = 0; f < gt_T.cols; ++f) {
            if (is_piv[f]) continue;
            Vec v(gt_T.cols, 0.0);
            v[f] = 1.0;
            for (size_t rr = 0; rr < pivots.size(); ++rr) v[pivots[rr]] = -w(static_cast<int>(rr), f);
            out.ker_gamma_tilde_T.push_back(std::move(v));
        }
        Mat w2 = mat.GammaTilde;
        for (int c : rref_double(w2, tol)) out.im_gamma_tilde.push_back(mat.GammaTilde.col(c));
        auto rat_g = rat_matrix_from(mat.Gamma);  // Gamma is integer, always exact
        for (const auto& kv : kernel_rational(*rat_g)) out.ker_gamma.push_back(to_primitive_integer(kv));
    }

    const double scale = std::max(1.0, max_abs(mat.GammaTilde));
    const double ver_tol = out.exact ? 0.0 : 1e-12 * scale;
    for (const Vec& c : out.ker_gamma_tilde_T)
        for (int j = 0; j < mat.GammaTilde.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < mat.GammaTilde.rows; ++i) s += c[i] * mat.GammaTilde(i, j);
            if (std::abs(s) > ver_tol) throw std::logic_error("kernel_image: kernel verification failed");
        }
    for (const auto& lam : out.ker_gamma)
        for (int i = 0; i < mat.Gamma.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < mat.Gamma.cols; ++j) s += mat.Gamma(i, j) * static_cast<double>(lam[j]);
            if (s != 0.0) throw std::logic_error("kernel_image: integer kernel verification failed");
        }
    const int rank = mat.GammaTilde.rows - static_cast<int>(out.ker_gamma_tilde_T.size());
    if (rank != static_cast<int>(out.im_gamma_tilde.size()))
        throw std::logic_error("kernel_image: rank/nullity mismatch");
    return out;
}

/// Pass/fail entry for one of the five structural conditions.
struct ConditionResult {
    int condition = 0;
    bool pass = true;
    std::string detail;
};

struct ValidationReport {
    std::vector<ConditionResult> results;

    bool all_pass() const {
        for (const auto& c : results)
            if (!c.pass) return false;
        return true;
    }
    const ConditionResult& condition(int k) const { return results.at(static_cast<size_t>(k - 1)); }
};

namespace detail {

inline ActivationModel expected_gas(const NetworkSpec& spec, const Reaction& rx) {
    const double kappa = spec.constants.kappa;
    ActivationModel m{0.0, 0.0, kappa};  // kappa T ln T, the mass-flux/heat base form
    if (rx.kind == ReactionKind::IO_OUT) {
        int i = -1;
        if (rx.substrate.is_single(i)) {
            const SpeciesThermo& sp = spec.species[static_cast<size_t>(i)];
            m.a += sp.e;
            m.b += -kappa * std::log(sp.z);
            m.c += -kappa * sp.p;
        }
    }
    return m;
}

inline bool gas_close(const ActivationModel& x, const ActivationModel& y) {
    const auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a) + std::abs(b)); };
    return near(x.a, y.a) && near(x.b, y.b) && near(x.c, y.c);
}

}  // namespace detail

/// Re-verifies Conditions 1-5 on a spec (the parser enforces most of them by
/// construction; programmatically built specs get the full check here).
inline ValidationReport validate_conditions(const NetworkSpec& spec) {
    ValidationReport rep;
    rep.results.resize(5);
    for (int i = 0; i < 5; ++i) rep.results[static_cast<size_t>(i)].condition = i + 1;

    // Condition 1: every partition function grows without bound (p > 0).
    for (size_t i = 0; i < spec.species.size(); ++i)
        if (!(spec.species[i].p > 0.0)) {
            rep.results[0].pass = false;
            rep.results[0].detail += "species " + spec.species[i].name + " has p <= 0; ";
        }

    // Condition 2: block ordering CR | IO | HE and class shapes.
    int phase = 0;
    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        const int kind_phase = rx.kind == ReactionKind::CR ? 0 : rx.kind == ReactionKind::HE ? 2 : 1;
        if (kind_phase < phase) {
            rep.results[1].pass = false;
            rep.results[1].detail += "reaction " + std::to_string(j) + " out of block order; ";
        }
        phase = std::max(phase, kind_phase);
        int i = -1;
        bool shape_ok = true;
        switch (rx.kind) {
            case ReactionKind::CR:
                shape_ok = !rx.substrate.is_zero() && !rx.product.is_zero() && !(rx.substrate == rx.product);
                break;
            case ReactionKind::IO_IN: shape_ok = rx.substrate.is_zero() && rx.product.is_single(i); break;
            case ReactionKind::IO_OUT: shape_ok = rx.product.is_zero() && rx.substrate.is_single(i); break;
            case ReactionKind::HE: shape_ok = rx.substrate.is_zero() && rx.product.is_zero(); break;
        }
        if (!shape_ok) {
            rep.results[1].pass = false;
            rep.results[1].detail += "reaction " + std::to_string(j) + " does not fit its class; ";
        }
    }

    // Condition 3: isothermal systems carry no mass flux or heat exchange;
    // any flux/exchange needs the environment temperature.
    if (spec.energy_mode == EnergyMode::Isothermal && (spec.r_io() > 0 || spec.r_he() > 0)) {
        rep.results[2].pass = false;
        rep.results[2].detail = "isothermal mode admits no IO/HE reactions";
    }
    if ((spec.energy_mode == EnergyMode::Isothermal || spec.r_io() > 0 || spec.r_he() > 0) && !spec.T_env) {
        rep.results[2].pass = false;
        rep.results[2].detail += std::string(rep.results[2].detail.empty() ? "" : "; ") + "T_env required";
    }

    // Condition 4: mass-flux and heat-exchange edges carry the mandated
    // activation forms.
    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        if (rx.kind == ReactionKind::CR) continue;
        if (!detail::gas_close(rx.gas, detail::expected_gas(spec, rx))) {
            rep.results[3].pass = false;
            rep.results[3].detail += "reaction " + std::to_string(j) + " activation model off form; ";
        }
    }

    // Condition 5: paired chemical reactions share one activated state.
    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        if (rx.kind != ReactionKind::CR || rx.pair < j) continue;
        if (rx.pair >= 0 && !(rx.gas == spec.reactions[static_cast<size_t>(rx.pair)].gas)) {
            rep.results[4].pass = false;
            rep.results[4].detail +=
                "pair (" + std::to_string(j) + "," + std::to_string(rx.pair) + ") activation models differ; ";
        }
    }
    return rep;
}

}  // namespace thermocrn
