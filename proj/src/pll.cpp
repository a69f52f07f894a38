#include "gridsync/pll.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gridsync {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Loop output at a given (delta, integrator) state. The q-axis voltage and
// the loop rate form an algebraic loop because the inductive term carries the
// loop's own frequency; it is closed exactly:
//   u * (1 - kp*x*i_d/omega0) = core + integrator*x*i_d/omega0
// with core = -|e| sin(delta - angle(e)) + x*i_d + r*i_q. When the rate
// saturates, the frequency is pinned and u is re-evaluated at the rail.
struct LoopEval {
    double u = 0.0;          // q-axis voltage, pu
    double delta_dot = 0.0;  // clamped loop rate, rad/s
    double i_dot = 0.0;      // accumulator rate, rad/s^2
};

LoopEval eval_loop(double delta, double integ, const TheveninParams& te,
                   const DqCurrent& cur, const PllParams& pll) {
    const double emag = te.e.magnitude();
    const double eang = te.e.angle();
    const double xid = te.x * cur.i_d;
    const double den = 1.0 - pll.kp * xid / pll.omega0;
    if (std::abs(den) < 1e-9) {
        throw SingularDenominator("loop gain cancels the inductive feedthrough");
    }
    const double core = -emag * std::sin(delta - eang) + xid + te.r * cur.i_q;

    LoopEval out;
    out.u = (core + integ * xid / pll.omega0) / den;
    out.delta_dot = pll.kp * out.u + integ;
    bool hi = false, lo = false;
    if (out.delta_dot > pll.freq_limit) {
        hi = true;
        out.delta_dot = pll.freq_limit;
        out.u = core + out.delta_dot * xid / pll.omega0;
    } else if (out.delta_dot < -pll.freq_limit) {
        lo = true;
        out.delta_dot = -pll.freq_limit;
        out.u = core + out.delta_dot * xid / pll.omega0;
    }
    out.i_dot = pll.ki * out.u;
    // Conditional integration: while saturated, only accumulate when the
    // input drives the output back toward the linear range.
    if ((hi && out.u > 0.0) || (lo && out.u < 0.0)) out.i_dot = 0.0;
    return out;
}

}  // namespace

PllParams PllParams::from_damping(double zeta, double omega_n, double omega0,
                                  double freq_limit) {
    if (omega_n <= 0.0) omega_n = kTwoPi * 10.0;
    if (omega0 <= 0.0) omega0 = kTwoPi * 50.0;
    if (freq_limit <= 0.0) freq_limit = kTwoPi * 2.5;
    PllParams p;
    p.kp = 2.0 * zeta * omega_n;
    p.ki = omega_n * omega_n;
    p.omega0 = omega0;
    p.freq_limit = freq_limit;
    p.damping = zeta;
    p.validate();
    return p;
}

void PllParams::validate() const {
    if (!(kp > 0.0) || !(ki > 0.0) || !(freq_limit > 0.0) || !(omega0 > 0.0)) {
        throw ConfigError("loop gains, nominal frequency and rate limit must be positive");
    }
}

double q_axis_voltage(const TheveninParams& te, const DqCurrent& cur,
                      double delta, double omega1, const PerUnitBase& base) {
    const double emag = te.e.magnitude();
    const double eang = te.e.angle();
    return -emag * std::sin(delta - eang) +
           (omega1 / base.omega0()) * te.x * cur.i_d + te.r * cur.i_q;
}

bool equilibrium_exists(const TheveninParams& te, const DqCurrent& cur,
                        double omega1, const PerUnitBase& base) {
    return (omega1 / base.omega0()) * te.x * cur.i_d + te.r * cur.i_q <=
           te.e.magnitude();
}

std::optional<EquilibriumPair> equilibrium_points(const TheveninParams& te,
                                                  const DqCurrent& cur) {
    const double emag = te.e.magnitude();
    if (!(emag > 0.0)) return std::nullopt;
    const double s = (te.x * cur.i_d + te.r * cur.i_q) / emag;
    if (s > 1.0 || s < -1.0) return std::nullopt;
    const double eang = te.e.angle();
    const double a = std::asin(s);
    return EquilibriumPair{eang + a, eang + std::numbers::pi - a};
}

std::pair<double, double> swing_rhs(const PllState& state, const TheveninParams& te,
                                    const DqCurrent& cur, const PllParams& pll) {
    const double emag = te.e.magnitude();
    const double eang = te.e.angle();
    const double xid = te.x * cur.i_d;
    const double den = 1.0 - pll.kp * xid / pll.omega0;
    if (std::abs(den) < 1e-9) {
        throw SingularDenominator("loop gain cancels the inductive feedthrough");
    }
    const double dp = state.delta - eang;
    const double u = -emag * std::sin(dp) +
                     (1.0 + state.delta_dot / pll.omega0) * xid + te.r * cur.i_q;
    const double accel =
        (pll.ki * u - pll.kp * emag * std::cos(dp) * state.delta_dot) / den;
    return {state.delta_dot, accel};
}

PllState pll_step(const PllState& state, double u_msq, const PllParams& pll, double dt) {
    if (!(dt > 0.0)) throw ConfigError("step size must be positive");
    PllState next = state;
    next.integrator = state.integrator + pll.ki * u_msq * dt;
    double rate = pll.kp * u_msq + next.integrator;
    if (rate > pll.freq_limit) {
        rate = pll.freq_limit;
        if (u_msq > 0.0) next.integrator = state.integrator;  // hold while winding deeper
    } else if (rate < -pll.freq_limit) {
        rate = -pll.freq_limit;
        if (u_msq < 0.0) next.integrator = state.integrator;
    }
    next.delta = state.delta + rate * dt;
    next.delta_dot = rate;
    return next;
}

PllState initial_state_from(double delta, double delta_dot, const TheveninParams& te,
                            const DqCurrent& cur, const PllParams& pll) {
    pll.validate();
    const double rate = std::clamp(delta_dot, -pll.freq_limit, pll.freq_limit);
    const double emag = te.e.magnitude();
    const double eang = te.e.angle();
    const double xid = te.x * cur.i_d;
    const double u = -emag * std::sin(delta - eang) + xid + te.r * cur.i_q +
                     rate * xid / pll.omega0;
    PllState s;
    s.delta = delta;
    s.delta_dot = rate;
    s.integrator = rate - pll.kp * u;
    return s;
}

Trajectory integrate(const PllState& initial, const TheveninParams& te,
                     const DqCurrent& cur, const PllParams& pll,
                     double t_end, double dt) {
    pll.validate();
    if (!(dt > 0.0) || dt > 1e-3) throw ConfigError("step size must lie in (0, 1e-3] s");
    if (!(t_end > 0.0)) throw ConfigError("horizon must be positive");
    const long long steps = std::llround(t_end / dt);
    if (steps < 1 || static_cast<double>(steps) > 1e7) {
        throw ConfigError("step count out of range");
    }

    Trajectory traj;
    traj.points.reserve(static_cast<std::size_t>(steps) + 1);

    double delta = initial.delta;
    double integ = initial.integrator;

    auto record = [&](double t) {
        const LoopEval ev = eval_loop(delta, integ, te, cur, pll);
        traj.points.push_back({t, delta, ev.delta_dot, pll.omega0 + ev.delta_dot, ev.u});
    };

    record(0.0);
    for (long long k = 0; k < steps; ++k) {
        const LoopEval k1 = eval_loop(delta, integ, te, cur, pll);
        const LoopEval k2 = eval_loop(delta + 0.5 * dt * k1.delta_dot,
                                      integ + 0.5 * dt * k1.i_dot, te, cur, pll);
        const LoopEval k3 = eval_loop(delta + 0.5 * dt * k2.delta_dot,
                                      integ + 0.5 * dt * k2.i_dot, te, cur, pll);
        const LoopEval k4 = eval_loop(delta + dt * k3.delta_dot,
                                      integ + dt * k3.i_dot, te, cur, pll);
        delta += dt / 6.0 *
                 (k1.delta_dot + 2.0 * k2.delta_dot + 2.0 * k3.delta_dot + k4.delta_dot);
        integ += dt / 6.0 * (k1.i_dot + 2.0 * k2.i_dot + 2.0 * k3.i_dot + k4.i_dot);
        record(static_cast<double>(k + 1) * dt);
    }
    traj.classification = classify(traj, te, cur, pll);
    return traj;
}

SyncClass classify(const Trajectory& traj, const TheveninParams& te,
                   const DqCurrent& cur, const PllParams& pll) {
    if (traj.points.empty()) throw ConfigError("cannot classify an empty trajectory");
    const auto eq = equilibrium_points(te, cur);
    const double escape_ref =
        (eq ? eq->delta_unstable : traj.points.front().delta) + kTwoPi;
    for (const auto& p : traj.points) {
        if (p.delta > escape_ref) return SyncClass::LossOfSync;
    }

    const double t_last = traj.points.back().t;
    bool pinned = true;
    bool pin_window_seen = false;
    for (const auto& p : traj.points) {
        if (p.t < t_last - 0.2) continue;
        pin_window_seen = true;
        if (std::abs(p.delta_dot) < pll.freq_limit - 1e-9) {
            pinned = false;
            break;
        }
    }
    if (pin_window_seen && pinned) return SyncClass::LossOfSync;

    if (eq) {
        const double t_first = traj.points.front().t;
        const double t_tail = t_last - 0.1 * (t_last - t_first);
        bool settled = true;
        for (const auto& p : traj.points) {
            if (p.t < t_tail) continue;
            if (std::abs(p.delta - eq->delta_stable) >= 0.01 ||
                std::abs(p.delta_dot) >= 0.1) {
                settled = false;
                break;
            }
        }
        if (settled) return SyncClass::Synchronous;
    }
    return SyncClass::Undecided;
}

std::vector<PortraitBatch> phase_portrait(const TheveninParams& te,
                                          const std::vector<double>& i_d_list,
                                          double i_q, const PllParams& pll,
                                          const std::vector<PhasePoint>& grid,
                                          double t_end, double dt) {
    if (i_d_list.empty() || grid.empty()) {
        throw ConfigError("portrait needs at least one current and one start point");
    }
    auto worse = [](SyncClass a, SyncClass b) {
        auto rank = [](SyncClass c) {
            switch (c) {
                case SyncClass::Synchronous: return 0;
                case SyncClass::Undecided: return 1;
                case SyncClass::LossOfSync: return 2;
            }
            return 2;
        };
        return rank(b) > rank(a) ? b : a;
    };

    std::vector<PortraitBatch> out;
    out.reserve(i_d_list.size());
    for (double i_d : i_d_list) {
        PortraitBatch batch;
        batch.i_d = i_d;
        batch.classification = SyncClass::Synchronous;
        const DqCurrent cur{i_d, i_q};
        for (const auto& p : grid) {
            const PllState init = initial_state_from(p.delta, p.delta_dot, te, cur, pll);
            batch.trajectories.push_back(integrate(init, te, cur, pll, t_end, dt));
            batch.classification =
                worse(batch.classification, batch.trajectories.back().classification);
        }
        out.push_back(std::move(batch));
    }
    return out;
}

}  // namespace gridsync
