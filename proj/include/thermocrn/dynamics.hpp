#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "thermocrn/equilibrium.hpp"
#include "thermocrn/kinetics.hpp"
#include "thermocrn/network.hpp"

namespace thermocrn {

struct IntegratorOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
    double t_end = 1.0;
    bool dense_output = false;
    double initial_step = 0.0;  ///< 0 selects a heuristic start
};

/// Accepted integration samples plus optional dense-output segments.
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    bool converged = false;        ///< vector field stayed below atol
    bool step_underflow = false;   ///< stopped at the positivity boundary
    std::string diagnostic;
    long accepted = 0;
    long rejected = 0;

    struct DenseSegment {
        double t0 = 0.0, h = 0.0;
        std::vector<Vec> rcont;  // 5 interpolation vectors
    };
    std::vector<DenseSegment> dense;

    const State& initial() const { return states.front(); }
    const State& terminal() const { return states.back(); }

    /// Dense-output evaluation; requires dense_output at integration time.
    State at(double t) const;
};

namespace rk {

// Dormand-Prince 5(4) tableau with error and dense-output weights.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace rk

namespace detail {

inline Vec pack(const State& st) {
    Vec y(st.N.size() + 1);
    y[0] = st.U;
    for (size_t i = 0; i < st.N.size(); ++i) y[i + 1] = st.N[i];
    return y;
}

inline State unpack(const Vec& y) {
    State st;
    st.U = y[0];
    st.N.assign(y.begin() + 1, y.end());
    return st;
}

inline bool state_valid(const NetworkSpec& spec, const Vec& y) {
    double ne = 0.0;
    for (int i = 0; i < spec.n(); ++i) {
        const double Ni = y[static_cast<size_t>(i) + 1];
        if (!(Ni > 0.0) || !std::isfinite(Ni)) return false;
        ne += Ni * spec.species[static_cast<size_t>(i)].e;
    }
    return std::isfinite(y[0]) && y[0] > ne;
}

inline Vec field(const NetworkSpec& spec, const Matrices& mat, const Vec& y) {
    const StateDerivative d = vector_field(spec, mat, unpack(y));
    Vec f(y.size());
    f[0] = d.dU;
    for (size_t i = 0; i < d.dN.size(); ++i) f[i + 1] = d.dN[i];
    return f;
}

}  // namespace detail

/// One fixed Dormand-Prince step; returns the 5th-order update or nullopt if
/// a stage leaves the positive state space. Exposed for order verification.
inline std::optional<State> rk45_fixed_step(const NetworkSpec& spec, const Matrices& mat, const State& from,
                                            double h) {
    using namespace rk;
    const Vec y = detail::pack(from);
    const size_t nn = y.size();
    auto stage = [&](const Vec& v) -> std::optional<Vec> {
        if (!detail::state_valid(spec, v)) return std::nullopt;
        return detail::field(spec, mat, v);
    };
    auto comb = [&](std::initializer_list<std::pair<double, const Vec*>> terms) {
        Vec v = y;
        for (const auto& [w, k] : terms)
            for (size_t i = 0; i < nn; ++i) v[i] += h * w * (*k)[i];
        return v;
    };
    auto k1 = stage(y);
    if (!k1) return std::nullopt;
    auto k2 = stage(comb({{a21, &*k1}}));
    if (!k2) return std::nullopt;
    auto k3 = stage(comb({{a31, &*k1}, {a32, &*k2}}));
    if (!k3) return std::nullopt;
    auto k4 = stage(comb({{a41, &*k1}, {a42, &*k2}, {a43, &*k3}}));
    if (!k4) return std::nullopt;
    auto k5 = stage(comb({{a51, &*k1}, {a52, &*k2}, {a53, &*k3}, {a54, &*k4}}));
    if (!k5) return std::nullopt;
    auto k6 = stage(comb({{a61, &*k1}, {a62, &*k2}, {a63, &*k3}, {a64, &*k4}, {a65, &*k5}}));
    if (!k6) return std::nullopt;
    Vec y1 = comb({{a71, &*k1}, {a73, &*k3}, {a74, &*k4}, {a75, &*k5}, {a76, &*k6}});
    if (!detail::state_valid(spec, y1)) return std::nullopt;
    return detail::unpack(y1);
}

/// Adaptive integration of the (U,N) dynamics with PI step control and
/// reject-and-halve positivity guarding. Stops at t_end, on a converged
/// vector field (5 accepted steps below atol), or on step underflow at the
/// boundary.
inline Trajectory integrate(const NetworkSpec& spec, const Matrices& mat, const State& state0,
                            const IntegratorOptions& opts) {
    using namespace rk;
    check_state(state0, spec.species);
    temperature_of(state0, spec.species, spec.constants);
    if (spec.energy_mode == EnergyMode::Isothermal) {
        const Vec uTe = molar_u_vector(spec.species, spec.env_temperature(), spec.constants);
        double surf = state0.U;
        for (size_t i = 0; i < state0.N.size(); ++i) surf -= state0.N[i] * uTe[i];
        if (std::abs(surf) > 1e-9 * (1.0 + std::abs(state0.U)))
            throw DomainError("initial state violates the isothermal surface U = N'u(T_env)");
    }
    if (!(opts.rtol > 0.0) || !(opts.atol > 0.0)) throw std::invalid_argument("tolerances must be positive");

    Trajectory traj;
    Vec y = detail::pack(state0);
    const size_t nn = y.size();
    double t = 0.0;
    traj.times.push_back(t);
    traj.states.push_back(state0);

    Vec k1 = detail::field(spec, mat, y);
    double h = opts.initial_step > 0.0
                   ? opts.initial_step
                   : std::min({opts.max_step, opts.t_end, 1e-2 * (1.0 + norm_inf(y)) / (1.0 + norm_inf(k1))});

    auto err_norm = [&](const Vec& ynew, const Vec& errv) {
        double s = 0.0;
        for (size_t i = 0; i < nn; ++i) {
            const double sc = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            s += (errv[i] / sc) * (errv[i] / sc);
        }
        return std::sqrt(s / static_cast<double>(nn));
    };

    constexpr double safe = 0.9, beta = 0.04, facl = 0.2, facr = 10.0;
    const double expo1 = 0.2 - beta * 0.75;
    double facold = 1e-4;
    int quiet_steps = 0;

    while (t < opts.t_end) {
        if (opts.t_end - t <= 1e-14 * std::max(1.0, opts.t_end)) break;  // horizon reached up to rounding
        h = std::min({h, opts.max_step, opts.t_end - t});
        if (h < 1e-14 * std::max(1.0, std::abs(t))) {
            traj.step_underflow = true;
            traj.diagnostic = "step size underflow near the positivity boundary at t = " + format_g17(t);
            break;
        }

        auto stage = [&](const Vec& v) -> std::optional<Vec> {
            if (!detail::state_valid(spec, v)) return std::nullopt;
            return detail::field(spec, mat, v);
        };
        auto comb = [&](std::initializer_list<std::pair<double, const Vec*>> terms) {
            Vec v = y;
            for (const auto& [w, k] : terms)
                for (size_t i = 0; i < nn; ++i) v[i] += h * w * (*k)[i];
            return v;
        };

        bool bad_stage = false;
        Vec y1, k7;
        std::array<Vec, 7> ks;
        do {
            ks[0] = k1;
            auto k2 = stage(comb({{a21, &ks[0]}}));
            if (!k2) { bad_stage = true; break; }
            ks[1] = std::move(*k2);
            auto k3 = stage(comb({{a31, &ks[0]}, {a32, &ks[1]}}));
            if (!k3) { bad_stage = true; break; }
            ks[2] = std::move(*k3);
            auto k4 = stage(comb({{a41, &ks[0]}, {a42, &ks[1]}, {a43, &ks[2]}}));
            if (!k4) { bad_stage = true; break; }
            ks[3] = std::move(*k4);
            auto k5 = stage(comb({{a51, &ks[0]}, {a52, &ks[1]}, {a53, &ks[2]}, {a54, &ks[3]}}));
            if (!k5) { bad_stage = true; break; }
            ks[4] = std::move(*k5);
            auto k6 = stage(comb({{a61, &ks[0]}, {a62, &ks[1]}, {a63, &ks[2]}, {a64, &ks[3]}, {a65, &ks[4]}}));
            if (!k6) { bad_stage = true; break; }
            ks[5] = std::move(*k6);
            y1 = comb({{a71, &ks[0]}, {a73, &ks[2]}, {a74, &ks[3]}, {a75, &ks[4]}, {a76, &ks[5]}});
            auto k7o = stage(y1);
            if (!k7o) { bad_stage = true; break; }
            ks[6] = std::move(*k7o);
            k7 = ks[6];
        } while (false);

        if (bad_stage) {
            h *= 0.5;  // positivity guard: reject and halve
            ++traj.rejected;
            continue;
        }

        Vec errv(nn);
        for (size_t i = 0; i < nn; ++i)
            errv[i] = h * (e1 * ks[0][i] + e3 * ks[2][i] + e4 * ks[3][i] + e5 * ks[4][i] + e6 * ks[5][i] +
                           e7 * ks[6][i]);
        const double err = err_norm(y1, errv);
        const double fac11 = std::pow(std::max(err, 1e-16), expo1);

        if (err <= 1.0) {
            if (opts.dense_output) {
                Trajectory::DenseSegment seg;
                seg.t0 = t;
                seg.h = h;
                seg.rcont.assign(5, Vec(nn));
                for (size_t i = 0; i < nn; ++i) {
                    const double dy = y1[i] - y[i];
                    const double bspl = h * ks[0][i] - dy;
                    seg.rcont[0][i] = y[i];
                    seg.rcont[1][i] = dy;
                    seg.rcont[2][i] = bspl;
                    seg.rcont[3][i] = dy - h * ks[6][i] - bspl;
                    seg.rcont[4][i] = h * (d1 * ks[0][i] + d3 * ks[2][i] + d4 * ks[3][i] + d5 * ks[4][i] +
                                           d6 * ks[5][i] + d7 * ks[6][i]);
                }
                traj.dense.push_back(std::move(seg));
            }
            t += h;
            y = y1;
            k1 = k7;  // first-same-as-last
            traj.times.push_back(t);
            traj.states.push_back(detail::unpack(y));
            ++traj.accepted;
            facold = std::max(err, 1e-4);
            double fac = fac11 / std::pow(facold, beta);
            fac = std::max(1.0 / facr, std::min(1.0 / facl, fac / safe));
            h /= fac;

            quiet_steps = norm2(k1) < opts.atol ? quiet_steps + 1 : 0;
            if (quiet_steps >= 5) {
                traj.converged = true;
                break;
            }
        } else {
            ++traj.rejected;
            h /= std::min(1.0 / facl, fac11 / safe);
        }
    }
    return traj;
}

inline State Trajectory::at(double t) const {
    if (dense.empty()) throw std::logic_error("trajectory has no dense output");
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    size_t lo = 0, hi = dense.size();
    while (lo + 1 < hi) {
        const size_t mid = (lo + hi) / 2;
        (dense[mid].t0 <= t ? lo : hi) = mid;
    }
    const DenseSegment& seg = dense[lo];
    const double th = (t - seg.t0) / seg.h;
    const double th1 = 1.0 - th;
    Vec y(seg.rcont[0].size());
    for (size_t i = 0; i < y.size(); ++i)
        y[i] = seg.rcont[0][i] +
               th * (seg.rcont[1][i] + th1 * (seg.rcont[2][i] + th * (seg.rcont[3][i] + th1 * seg.rcont[4][i])));
    return detail::unpack(y);
}

/// Largest kernel-projected deviation from the initial state: every vector
/// of ker(GammaTilde') is conserved along trajectories.
inline double class_drift(const Matrices& mat, const Trajectory& traj) {
    if (traj.states.empty()) throw std::invalid_argument("class_drift: empty trajectory");
    const State& s0 = traj.initial();
    double scale = 1.0 + std::abs(s0.U);
    for (double v : s0.N) scale += v * v;
    scale = 1.0 + std::sqrt(scale);
    double worst = 0.0;
    for (const Vec& c0 : mat.bases.ker_gamma_tilde_T) {
        const Vec c = scaled(c0, 1.0 / norm2(c0));
        for (const State& st : traj.states) {
            double s = c[0] * (st.U - s0.U);
            for (size_t i = 0; i < st.N.size(); ++i) s += c[i + 1] * (st.N[i] - s0.N[i]);
            worst = std::max(worst, std::abs(s) / scale);
        }
    }
    return worst;
}

/// Availability series along a trajectory with its dissipation certificate.
struct LyapunovTrace {
    Vec S_A;
    Vec rate;                           ///< analytic dS_A/dt at each sample
    Vec grad_projection;                ///< availability gradient projected onto Im(GammaTilde)
    double max_forward_increase = 0.0;  ///< worst S_A(t_{k+1}) - S_A(t_k)
    double max_rate = 0.0;              ///< worst analytic rate (should be <= 0)

    /// Worst dissipation rate over samples whose gradient projection exceeds
    /// gtol; strictly negative means the rate vanishes only at (numerical)
    /// equilibria.
    double max_rate_off_equilibrium(double gtol = 1e-8) const {
        double worst = -std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < rate.size(); ++k)
            if (grad_projection[k] >= gtol) worst = std::max(worst, rate[k]);
        return worst;
    }
};

inline LyapunovTrace lyapunov_trace(const ReferenceEquilibrium& ref, const NetworkSpec& spec, const Matrices& mat,
                                    const Trajectory& traj) {
    LyapunovTrace tr;
    const std::vector<Vec> Q = orthonormalize(mat.bases.ker_gamma_tilde_T);
    tr.S_A.resize(traj.states.size());
    tr.rate.resize(traj.states.size());
    tr.grad_projection.resize(traj.states.size());
    tr.max_rate = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const State& st = traj.states[k];
        tr.S_A[k] = availability_S_A(ref, spec, st);
        const DualPoint d = dual_of_state(ref, spec, st);
        const StateDerivative f = vector_field(spec, mat, st);
        double rate = d.beta * f.dU;
        for (size_t i = 0; i < d.gamma.size(); ++i) rate += d.gamma[i] * f.dN[i];
        tr.rate[k] = rate;
        tr.max_rate = std::max(tr.max_rate, rate);
        if (k) tr.max_forward_increase = std::max(tr.max_forward_increase, tr.S_A[k] - tr.S_A[k - 1]);

        Vec g(d.gamma.size() + 1);
        g[0] = d.beta;
        for (size_t i = 0; i < d.gamma.size(); ++i) g[i + 1] = d.gamma[i];
        Vec proj = g;
        for (const Vec& q : Q) {
            const double c = dot(q, g);
            for (size_t i = 0; i < proj.size(); ++i) proj[i] -= c * q[i];
        }
        tr.grad_projection[k] = norm2(proj);
    }
    return tr;
}

/// Distance-to-target report over a trajectory.
struct ConvergenceReport {
    double terminal_distance = 0.0;
    std::optional<double> first_time_within;
    bool monotone_tail = false;
};

inline ConvergenceReport converged_state(const Trajectory& traj, const State& target, double tol) {
    if (traj.states.empty()) throw std::invalid_argument("converged_state: empty trajectory");
    ConvergenceReport rep;
    Vec dist(traj.states.size());
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const State& st = traj.states[k];
        double s = (st.U - target.U) * (st.U - target.U);
        for (size_t i = 0; i < st.N.size(); ++i) s += (st.N[i] - target.N[i]) * (st.N[i] - target.N[i]);
        dist[k] = std::sqrt(s);
        if (!rep.first_time_within && dist[k] < tol) rep.first_time_within = traj.times[k];
    }
    rep.terminal_distance = dist.back();
    // Monotone tail up to noise: wandering inside the tolerance band does not
    // count against the flag.
    const size_t tail = std::max<size_t>(2, dist.size() / 4);
    rep.monotone_tail = true;
    const double slack = 1e-9 * (1.0 + dist.front());
    for (size_t k = dist.size() - tail + 1; k < dist.size(); ++k)
        if (dist[k] > tol && dist[k] > dist[k - 1] + slack) rep.monotone_tail = false;
    return rep;
}

}  // namespace thermocrn
