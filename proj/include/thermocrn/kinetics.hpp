#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "thermocrn/network.hpp"
#include "thermocrn/thermo.hpp"

namespace thermocrn {

/// Per-reaction rates in reaction-list order. The normalized block layout
/// makes the kind slices contiguous: chemical, then mass flux, then heat.
struct RateVector {
    Vec v;

    std::span<const double> cr(const NetworkSpec& spec) const {
        return {v.data(), static_cast<size_t>(spec.r_cr())};
    }
    std::span<const double> io(const NetworkSpec& spec) const {
        return {v.data() + spec.r_cr(), static_cast<size_t>(spec.r_io())};
    }
    std::span<const double> he(const NetworkSpec& spec) const {
        return {v.data() + spec.r_cr() + spec.r_io(), static_cast<size_t>(spec.r_he())};
    }
};

/// Transition-state rate law
///   v_j = k~_j T exp{-(g_AS_j(T) - y_sigma' g(T)) / (kappa T)} Exp(y_sigma' Ln N).
/// Mass-flux and heat-exchange edges reduce to pure mass action (k~, k~ N_i,
/// k~) through their mandated activation forms.
inline RateVector reaction_rates(const NetworkSpec& spec, const State& st) {
    const double T = temperature_of(st, spec.species, spec.constants);
    const double kappa = spec.constants.kappa;
    const Vec g = molar_g_vector(spec.species, T, spec.constants);

    RateVector out;
    out.v.resize(static_cast<size_t>(spec.r()));
    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        double sub_g = 0.0;
        double sub_lnN = 0.0;
        for (const auto& [i, coeff] : rx.substrate.terms) {
            sub_g += coeff * g[static_cast<size_t>(i)];
            sub_lnN += coeff * std::log(st.N[static_cast<size_t>(i)]);
        }
        out.v[static_cast<size_t>(j)] = rx.k * T * std::exp(-(rx.gas(T) - sub_g) / (kappa * T) + sub_lnN);
    }
    return out;
}

/// Instantaneous energy increment of one reaction at a state: zero for
/// chemical reactions in isolated mode, (y_pi - y_sigma)' u(T_e) in
/// isothermal mode, u_i(T_e) / -u_i(T) for in/out flux, T_e - T for heat
/// exchange.
inline double delta_u(const NetworkSpec& spec, const Reaction& rx, double T) {
    const ThermoConstants& k = spec.constants;
    switch (rx.kind) {
        case ReactionKind::CR: {
            if (spec.energy_mode == EnergyMode::Isolated) return 0.0;
            const double Te = spec.env_temperature();
            double du = 0.0;
            for (const auto& [i, c] : rx.product.terms) du += c * molar_u(spec.species[static_cast<size_t>(i)], Te, k);
            for (const auto& [i, c] : rx.substrate.terms)
                du -= c * molar_u(spec.species[static_cast<size_t>(i)], Te, k);
            return du;
        }
        case ReactionKind::IO_IN: {
            const int i = rx.product.terms[0].first;
            return molar_u(spec.species[static_cast<size_t>(i)], spec.env_temperature(), k);
        }
        case ReactionKind::IO_OUT: {
            const int i = rx.substrate.terms[0].first;
            return -molar_u(spec.species[static_cast<size_t>(i)], T, k);
        }
        case ReactionKind::HE: return spec.env_temperature() - T;
    }
    return 0.0;
}

struct StateDerivative {
    double dU = 0.0;
    Vec dN;
};

/// (U_dot; N_dot) = (DeltaU; Gamma) v(U,N).
inline StateDerivative vector_field(const NetworkSpec& spec, const Matrices& mat, const State& st) {
    const RateVector rates = reaction_rates(spec, st);
    const double T = temperature_of(st, spec.species, spec.constants);
    StateDerivative d;
    d.dN.assign(static_cast<size_t>(spec.n()), 0.0);
    for (int j = 0; j < spec.r(); ++j) {
        const double vj = rates.v[static_cast<size_t>(j)];
        d.dU += delta_u(spec, spec.reactions[static_cast<size_t>(j)], T) * vj;
        for (int i = 0; i < spec.n(); ++i) d.dN[static_cast<size_t>(i)] += mat.Gamma(i, j) * vj;
    }
    return d;
}

class BalanceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Diagonal conductances attached to a detailed-balanced reference state:
/// K_CR(T) per chemical pair and the constant K_IO per flux pair.
struct Conductances {
    double T_star = 0.0;
    double kappa = 1.0;
    std::vector<double> cr_rate_star;        ///< forward rate at the reference
    std::vector<ActivationModel> cr_gas;     ///< shared activated state per pair
    std::vector<double> io;                  ///< K_IO diagonal

    /// K_CR(T)_jj = (T/T*) exp{-g_AS(T)/(kappa T) + g_AS(T*)/(kappa T*)} v*_fwd.
    std::vector<double> k_cr(double T) const {
        std::vector<double> d(cr_rate_star.size());
        for (size_t j = 0; j < d.size(); ++j) {
            const ActivationModel& gas = cr_gas[j];
            d[j] = (T / T_star) * std::exp(-gas(T) / (kappa * T) + gas(T_star) / (kappa * T_star)) * cr_rate_star[j];
        }
        return d;
    }
};

/// Builds the conductance matrices at a reference equilibrium, verifying the
/// forward/backward expressions agree (detailed balance plus the shared
/// activated state make them one number).
inline Conductances conductance_matrices(const NetworkSpec& spec, const Matrices& mat, const State& ref) {
    (void)mat;
    const RateVector rates = reaction_rates(spec, ref);
    Conductances K;
    K.T_star = temperature_of(ref, spec.species, spec.constants);
    K.kappa = spec.constants.kappa;

    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        if (rx.pair < j) continue;
        const Reaction& back = spec.reactions[static_cast<size_t>(rx.pair)];
        const double du_f = delta_u(spec, rx, K.T_star);
        const double du_b = delta_u(spec, back, K.T_star);
        const double energy_res = std::abs(du_f + du_b) * (rx.pair == j ? 0.5 : 1.0);
        if (energy_res > 1e-10 * (1.0 + std::abs(du_f)))
            throw BalanceError("reference state is not detailed balanced: pair (" + std::to_string(j) + "," +
                               std::to_string(rx.pair) + ") energy residual " + std::to_string(energy_res));
        if (rx.pair == j) continue;
        const double vf = rates.v[static_cast<size_t>(j)];
        const double vb = rates.v[static_cast<size_t>(rx.pair)];
        const double rate_res = std::abs(vf - vb) / std::max(vf, vb);
        if (rate_res > 1e-10)
            throw BalanceError("reference state is not detailed balanced: pair (" + std::to_string(j) + "," +
                               std::to_string(rx.pair) + ") rate residual " + std::to_string(rate_res));
        if (rx.kind == ReactionKind::CR) {
            // The forward and backward conductance expressions must be one
            // number; probing an off-reference temperature exposes a shared
            // activated state wandering between the pair members.
            const double kappa = K.kappa;
            for (const double T : {K.T_star, 2.0 * K.T_star}) {
                const double kf = (T / K.T_star) *
                                  std::exp(-rx.gas(T) / (kappa * T) + rx.gas(K.T_star) / (kappa * K.T_star)) * vf;
                const double kb = (T / K.T_star) *
                                  std::exp(-back.gas(T) / (kappa * T) + back.gas(K.T_star) / (kappa * K.T_star)) * vb;
                if (std::abs(kf - kb) > 1e-10 * std::max(kf, kb))
                    throw BalanceError("pair (" + std::to_string(j) + "," + std::to_string(rx.pair) +
                                       ") conductance expressions disagree");
            }
            K.cr_rate_star.push_back(vf);
            K.cr_gas.push_back(rx.gas);
        } else if (rx.kind == ReactionKind::IO_IN) {
            K.io.push_back(vf);
        }
    }
    return K;
}

/// Compact detailed-balanced form:
///   N_dot = -Y B_CR K_CR(T) B_CR' Exp(Y (mu/(kappa T) - mu*/(kappa T*)))
///           -Y B_IO K_IO  B_IO' Exp(Y (Ln N - Ln N*)),
/// with U_dot assembled from the same per-pair rates plus k~ (T* - T) for
/// heat exchange. Must reproduce vector_field at every positive state.
inline StateDerivative compact_vector_field(const NetworkSpec& spec, const Matrices& mat, const Conductances& K,
                                            const State& ref, const State& st) {
    if (!spec.reversible()) throw BalanceError("compact form requires a reversible network");
    const int n = spec.n();
    const int m = mat.m();
    const double kappa = spec.constants.kappa;

    const ResolvedState cur = system_potentials(st, spec.species, spec.constants);
    const ResolvedState star = system_potentials(ref, spec.species, spec.constants);

    // Complex-space exponents for the chemical and flux blocks.
    Vec w_cr(static_cast<size_t>(m)), w_io(static_cast<size_t>(m));
    for (int c = 0; c < m; ++c) {
        double s_cr = 0.0, s_io = 0.0;
        for (int i = 0; i < n; ++i) {
            const double y = mat.Y(i, c);
            if (y == 0.0) continue;
            s_cr += y * (cur.mu[static_cast<size_t>(i)] / (kappa * cur.T) -
                         star.mu[static_cast<size_t>(i)] / (kappa * star.T));
            s_io += y * (std::log(st.N[static_cast<size_t>(i)]) - std::log(ref.N[static_cast<size_t>(i)]));
        }
        w_cr[static_cast<size_t>(c)] = std::exp(s_cr);
        w_io[static_cast<size_t>(c)] = std::exp(s_io);
    }

    const std::vector<double> kcr = K.k_cr(cur.T);

    StateDerivative d;
    d.dN.assign(static_cast<size_t>(n), 0.0);

    // Walk B's pair columns; chemical pairs use K_CR(T), flux pairs K_IO.
    int col = 0;
    size_t cr_at = 0, io_at = 0;
    for (int j = 0; j < spec.r(); ++j) {
        const Reaction& rx = spec.reactions[static_cast<size_t>(j)];
        if (rx.kind == ReactionKind::HE || rx.pair <= j) continue;
        const bool is_cr = rx.kind == ReactionKind::CR;
        const double kjj = is_cr ? kcr[cr_at++] : K.io[io_at++];
        const Vec& w = is_cr ? w_cr : w_io;
        double flow = 0.0;  // B' w scaled by the conductance: v_fwd - v_bwd
        for (int c = 0; c < m; ++c) flow += mat.B(c, col) * w[static_cast<size_t>(c)];
        flow *= kjj;
        for (int i = 0; i < n; ++i) {
            double yb = 0.0;
            for (int c = 0; c < m; ++c) yb += mat.Y(i, c) * mat.B(c, col);
            d.dN[static_cast<size_t>(i)] -= yb * flow;
        }
        // Per-direction rates recovered from the conductance form feed U_dot.
        double e_sub = 0.0, e_prod = 0.0;
        for (const auto& [i, cf] : rx.substrate.terms)
            e_sub += cf * (is_cr ? cur.mu[static_cast<size_t>(i)] / (kappa * cur.T) -
                                       star.mu[static_cast<size_t>(i)] / (kappa * star.T)
                                 : std::log(st.N[static_cast<size_t>(i)]) - std::log(ref.N[static_cast<size_t>(i)]));
        for (const auto& [i, cf] : rx.product.terms)
            e_prod += cf * (is_cr ? cur.mu[static_cast<size_t>(i)] / (kappa * cur.T) -
                                        star.mu[static_cast<size_t>(i)] / (kappa * star.T)
                                  : std::log(st.N[static_cast<size_t>(i)]) - std::log(ref.N[static_cast<size_t>(i)]));
        const double v_fwd = kjj * std::exp(e_sub);
        const double v_bwd = kjj * std::exp(e_prod);
        d.dU += delta_u(spec, rx, cur.T) * v_fwd;
        d.dU += delta_u(spec, spec.reactions[static_cast<size_t>(rx.pair)], cur.T) * v_bwd;
        ++col;
    }
    for (int j = 0; j < spec.r(); ++j)
        if (spec.reactions[static_cast<size_t>(j)].kind == ReactionKind::HE)
            d.dU += spec.reactions[static_cast<size_t>(j)].k * (K.T_star - cur.T);
    return d;
}

/// L = B K B' for a positive diagonal K: nonnegative diagonal, nonpositive
/// off-diagonal, zero row and column sums.
inline Mat laplacian(const Mat& B, const Vec& K_diag) {
    if (static_cast<int>(K_diag.size()) != B.cols) throw std::invalid_argument("laplacian: size mismatch");
    for (double k : K_diag)
        if (!(k > 0.0)) throw std::invalid_argument("laplacian: nonpositive conductance");
    Mat L(B.rows, B.rows);
    for (int i = 0; i < B.rows; ++i)
        for (int j = 0; j < B.rows; ++j) {
            double s = 0.0;
            for (int c = 0; c < B.cols; ++c) s += B(i, c) * K_diag[static_cast<size_t>(c)] * B(j, c);
            L(i, j) = s;
        }
    return L;
}

}  // namespace thermocrn
