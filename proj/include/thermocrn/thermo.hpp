#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermocrn/linalg.hpp"

namespace thermocrn {

/// Error raised when an operation is evaluated outside the positive state
/// space (nonpositive temperature, amount, or parameter).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// kappa is the molar gas constant, the only physical constant entering the
/// molar formulas. Defaults to 1 for nondimensional desk units.
struct ThermoConstants {
    double kappa = 1.0;
};

/// One species' partition-function model Z(T) = z * T^p * exp(-e / (kappa*T)).
/// z is the entropic prefactor, p the number of quadratic modes per two, and
/// e the molar ground-state energy. p > 0 makes Z unbounded in T; e >= 0
/// keeps the ground state the energy floor.
struct SpeciesThermo {
    std::string name;
    double z = 1.0;
    double p = 1.0;
    double e = 0.0;
};

/// Extensive state (internal energy, mole amounts). Positive temperature
/// requires U > N . e.
struct State {
    double U = 0.0;
    Vec N;
};

/// Intensive quantities derived from a State.
struct ResolvedState {
    double T = 0.0;
    Vec mu;
    double S = 0.0;
    double G = 0.0;
    double C = 0.0;
};

/// Per-species molar quantities at one temperature.
struct MolarQuantities {
    double Z;  ///< partition function
    double u;  ///< molar internal energy
    double g;  ///< molar Helmholtz free energy
    double s;  ///< molar entropy
    double c;  ///< molar heat capacity
};

inline void check_species(const SpeciesThermo& sp) {
    if (!(sp.z > 0.0)) throw DomainError("species '" + sp.name + "': nonpositive prefactor z");
    if (!(sp.p > 0.0)) throw DomainError("species '" + sp.name + "': nonpositive exponent p");
    if (sp.e < 0.0) throw DomainError("species '" + sp.name + "': negative ground energy e");
}

/// Closed forms generated by Z(T) = z T^p exp(-e/(kappa T)):
///   u = e + kappa p T,   g = e - kappa T ln z - kappa p T ln T,
///   s = (u - g)/T,       c = kappa p.
inline MolarQuantities molar_quantities(const SpeciesThermo& sp, double T, const ThermoConstants& k) {
    if (!(T > 0.0)) throw DomainError("molar_quantities: nonpositive temperature");
    check_species(sp);
    MolarQuantities q;
    const double kappa = k.kappa;
    q.Z = sp.z * std::pow(T, sp.p) * std::exp(-sp.e / (kappa * T));
    q.u = sp.e + kappa * sp.p * T;
    q.g = sp.e - kappa * T * std::log(sp.z) - kappa * sp.p * T * std::log(T);
    q.s = (q.u - q.g) / T;
    q.c = kappa * sp.p;
    return q;
}

inline double molar_u(const SpeciesThermo& sp, double T, const ThermoConstants& k) {
    return sp.e + k.kappa * sp.p * T;
}

inline double molar_g(const SpeciesThermo& sp, double T, const ThermoConstants& k) {
    return sp.e - k.kappa * T * std::log(sp.z) - k.kappa * sp.p * T * std::log(T);
}

inline Vec molar_u_vector(std::span<const SpeciesThermo> species, double T, const ThermoConstants& k) {
    Vec u(species.size());
    for (size_t i = 0; i < species.size(); ++i) u[i] = molar_u(species[i], T, k);
    return u;
}

inline Vec molar_g_vector(std::span<const SpeciesThermo> species, double T, const ThermoConstants& k) {
    Vec g(species.size());
    for (size_t i = 0; i < species.size(); ++i) g[i] = molar_g(species[i], T, k);
    return g;
}

inline void check_state(const State& st, std::span<const SpeciesThermo> species) {
    if (st.N.size() != species.size()) throw std::invalid_argument("state/species size mismatch");
    for (size_t i = 0; i < st.N.size(); ++i)
        if (!(st.N[i] > 0.0)) throw DomainError("nonpositive amount of species '" + species[i].name + "'");
}

/// Inverts U = N . u(T). For the power-law family this is the closed form
/// T = (U - N.e) / (kappa N.p).
inline double temperature_of(const State& st, std::span<const SpeciesThermo> species, const ThermoConstants& k) {
    check_state(st, species);
    double ne = 0.0, np = 0.0;
    for (size_t i = 0; i < species.size(); ++i) {
        check_species(species[i]);
        ne += st.N[i] * species[i].e;
        np += st.N[i] * species[i].p;
    }
    const double T = (st.U - ne) / (k.kappa * np);
    if (!(T > 0.0)) throw DomainError("nonpositive temperature: U <= N'u(0)");
    return T;
}

/// Whole-system potentials at a state: T, mu = g(T) + kappa T Ln N,
/// G = sum (g_i - kappa T) N_i + kappa T N_i ln N_i, S from molar entropies,
/// C = N . c.
inline ResolvedState system_potentials(const State& st, std::span<const SpeciesThermo> species,
                                       const ThermoConstants& k) {
    ResolvedState r;
    r.T = temperature_of(st, species, k);
    const double kappa = k.kappa;
    r.mu.resize(species.size());
    for (size_t i = 0; i < species.size(); ++i) {
        const MolarQuantities q = molar_quantities(species[i], r.T, k);
        const double lnN = std::log(st.N[i]);
        r.mu[i] = q.g + kappa * r.T * lnN;
        r.G += (q.g - kappa * r.T) * st.N[i] + kappa * r.T * st.N[i] * lnN;
        r.S += (q.s + kappa) * st.N[i] - kappa * st.N[i] * lnN;
        r.C += st.N[i] * q.c;
    }
    return r;
}

inline double entropy_of_state(const State& st, std::span<const SpeciesThermo> species, const ThermoConstants& k) {
    return system_potentials(st, species, k).S;
}

/// Fundamental relation dS = (1/T) dU - (mu/T)' dN.
struct EntropyGradient {
    double dS_dU;
    Vec dS_dN;
};

inline EntropyGradient entropy_gradient(const State& st, std::span<const SpeciesThermo> species,
                                        const ThermoConstants& k) {
    const ResolvedState r = system_potentials(st, species, k);
    EntropyGradient g;
    g.dS_dU = 1.0 / r.T;
    g.dS_dN.resize(r.mu.size());
    for (size_t i = 0; i < r.mu.size(); ++i) g.dS_dN[i] = -r.mu[i] / r.T;
    return g;
}

}  // namespace thermocrn
