#pragma once

#include "gridsync/estimator.hpp"
#include "gridsync/pll.hpp"
#include "gridsync/types.hpp"

namespace gridsync {

// ---------------------------------------------------------------------------
// Maximum synchronizable d-axis current for a given grid equivalent, and the
// translation of online estimates into converter current commands.
// ---------------------------------------------------------------------------

struct ImaxConfig {
    double tol = 0.01;       // bisection tolerance, pu
    double t_end = 2.0;      // simulated horizon per candidate, s
    double dt = 5e-5;        // integration step, s
    double i_ceiling = 1.2;  // converter current ceiling, pu
    double delta0 = 0.0;     // starting angle (pre-event operating point), rad

    void validate() const;
};

struct ImaxResult {
    double i_max = 0.0;  // largest current verified convergent, pu
    double lo = 0.0;     // bracket: lo convergent, hi divergent (or ceiling)
    double hi = 0.0;
    int iterations = 0;              // bisection refinements
    int trajectories_evaluated = 0;  // total integrations performed
};

struct CurrentCommand {
    double i_d_ref = 0.0;
    double i_q_ref = 0.0;
    double issued_at = 0.0;  // s
    TheveninParams basis;    // grid equivalent the command was computed from
};

// Bisection over simulated trajectories. Each candidate i_d starts from
// (delta = cfg.delta0, accumulator = 0); the loop rate then follows from the
// closed algebraic loop at that state. Throws NoStableCurrent when i_d = 0
// already diverges and UndecidedBoundary when any probed point classifies
// Undecided (extend t_end). When the ceiling itself converges, the ceiling is
// returned with a degenerate bracket.
ImaxResult max_stable_current(const TheveninParams& te, const PllParams& pll,
                              double i_q, const ImaxConfig& cfg);

// Existence-limit current at nominal frequency: (|e| - r*i_q)/x. Requires
// |e| > r*i_q; returns +infinity when x == 0. Always an upper bound on the
// dynamic limit.
double static_limit(const TheveninParams& te, double i_q);

// Turns an Updated estimate into a command: i_d_ref = min(prefault command,
// margin * dynamic limit of the estimated equivalent); q-axis carried over.
// When no current is stable the command falls back to zero d-axis current.
CurrentCommand command_from_estimate(const EstimateRecord& rec,
                                     const CurrentCommand& prefault,
                                     const PllParams& pll, double margin,
                                     const ImaxConfig& cfg);

}  // namespace gridsync
