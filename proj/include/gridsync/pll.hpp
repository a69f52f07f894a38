#pragma once

#include <optional>
#include <vector>

#include "gridsync/types.hpp"

namespace gridsync {

// ---------------------------------------------------------------------------
// PLL configuration and state.
//
// The loop drives the q-axis PCC voltage to zero through a PI controller:
//   d(integrator)/dt = ki * u_q
//   delta_dot        = clamp(kp * u_q + integrator, +-freq_limit)
// The power angle delta is measured against the grid-equivalent potential
// angle, so the equilibrium condition depends only on |e|.
// ---------------------------------------------------------------------------

struct PllParams {
    double kp = 0.0;          // rad/s per pu volt
    double ki = 0.0;          // rad/s^2 per pu volt
    double omega0 = 0.0;      // nominal angular frequency, rad/s
    double freq_limit = 0.0;  // max |omega1 - omega0|, rad/s
    double damping = 0.707;   // design damping ratio (informational)

    // Second-order synthesis: kp = 2*zeta*omega_n, ki = omega_n^2, designed
    // around a stiff operating point. omega_n defaults to 2*pi*10 rad/s, the
    // frequency excursion limit to +-2.5 Hz, nominal frequency to 50 Hz.
    static PllParams from_damping(double zeta = 0.707,
                                  double omega_n = -1.0,
                                  double omega0 = -1.0,
                                  double freq_limit = -1.0);

    void validate() const;  // throws ConfigError on non-positive gains/limits
};

struct PllState {
    double delta = 0.0;       // power angle, rad
    double delta_dot = 0.0;   // d(delta)/dt = omega1 - omega0, rad/s
    double integrator = 0.0;  // PI accumulator, rad/s
};

enum class SyncClass { Synchronous, LossOfSync, Undecided };

struct TrajectoryPoint {
    double t = 0.0;
    double delta = 0.0;
    double delta_dot = 0.0;  // rad/s, already clamped
    double omega1 = 0.0;     // rad/s
    double u_msq = 0.0;      // q-axis voltage, pu
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    SyncClass classification = SyncClass::Undecided;
};

struct EquilibriumPair {
    double delta_stable = 0.0;    // rad
    double delta_unstable = 0.0;  // rad
};

// q-axis PCC voltage seen by the PLL:
//   -|e| * sin(delta - angle(e)) + (omega1/omega0) * x * i_d + r * i_q
// with omega0 taken from the per-unit base. All electrical quantities in pu;
// the off-nominal inductive term is carried by the frequency ratio.
double q_axis_voltage(const TheveninParams& te, const DqCurrent& cur,
                      double delta, double omega1, const PerUnitBase& base);

// True iff a steady operating angle exists at the given frequency:
//   (omega1/omega0) * x * i_d + r * i_q <= |e|.
bool equilibrium_exists(const TheveninParams& te, const DqCurrent& cur,
                        double omega1, const PerUnitBase& base = {});

// Stable/unstable angle pair at nominal frequency, or nullopt when no
// equilibrium exists. With s = (x*i_d + r*i_q)/|e|:
//   delta_stable   = angle(e) + asin(s)
//   delta_unstable = angle(e) + pi - asin(s)
std::optional<EquilibriumPair> equilibrium_points(const TheveninParams& te,
                                                  const DqCurrent& cur);

// Right-hand side of the second-order power-angle equation (unclamped loop):
//   u      = -|e| sin(d') + (1 + delta_dot/omega0) * x * i_d + r * i_q
//   dd/dt  = delta_dot
//   dv/dt  = (ki * u - kp * |e| cos(d') * delta_dot) / (1 - kp * x * i_d / omega0)
// where d' = delta - angle(e). Throws SingularDenominator when the
// denominator magnitude is below 1e-9.
std::pair<double, double> swing_rhs(const PllState& state, const TheveninParams& te,
                                    const DqCurrent& cur, const PllParams& pll);

// One explicit PI update driven by an externally supplied u_msq:
// integrator accumulates ki*u*dt first, then delta_dot = kp*u + integrator is
// clamped to +-freq_limit; while clamped, the accumulator only moves if the
// update drives the output away from the saturated rail. delta advances by
// the clamped rate.
PllState pll_step(const PllState& state, double u_msq, const PllParams& pll, double dt);

// Builds the loop state that realizes a requested (delta, delta_dot) start
// point against the given grid equivalent: the accumulator is back-solved so
// the clamped loop output equals delta_dot there. Rates beyond the frequency
// limit are clamped to the reachable range.
PllState initial_state_from(double delta, double delta_dot, const TheveninParams& te,
                            const DqCurrent& cur, const PllParams& pll);

// Fixed-step 4th-order Runge-Kutta integration of the clamped loop coupled to
// the grid equivalent. dt must lie in (0, 1e-3] s and t_end/dt must not
// exceed 1e7 steps. Every recorded u_msq equals q_axis_voltage evaluated at
// the recorded (delta, omega1) with the loop's nominal frequency.
Trajectory integrate(const PllState& initial, const TheveninParams& te,
                     const DqCurrent& cur, const PllParams& pll,
                     double t_end, double dt);

// Classification rules, applied in order:
//   LossOfSync  - delta ever exceeds (unstable angle, or the starting angle
//                 when no equilibrium exists) + 2*pi, or |delta_dot| is
//                 pinned at the frequency limit for the final 0.2 s;
//   Synchronous - an equilibrium exists and over the final 10% of the run
//                 max|delta - delta_stable| < 0.01 rad and
//                 max|delta_dot| < 0.1 rad/s;
//   Undecided   - otherwise.
SyncClass classify(const Trajectory& traj, const TheveninParams& te,
                   const DqCurrent& cur, const PllParams& pll);

struct PhasePoint {
    double delta = 0.0;      // rad
    double delta_dot = 0.0;  // rad/s
};

struct PortraitBatch {
    double i_d = 0.0;
    std::vector<Trajectory> trajectories;
    // Worst classification across the batch grid (LossOfSync dominates
    // Undecided dominates Synchronous).
    SyncClass classification = SyncClass::Undecided;
};

// One trajectory batch per d-axis current, sweeping the grid of initial
// (delta, delta_dot) points, emitted in input order.
std::vector<PortraitBatch> phase_portrait(const TheveninParams& te,
                                          const std::vector<double>& i_d_list,
                                          double i_q, const PllParams& pll,
                                          const std::vector<PhasePoint>& grid,
                                          double t_end, double dt);

}  // namespace gridsync
