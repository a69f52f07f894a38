#include "gridsync/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridsync {

void ImaxConfig::validate() const {
    if (!(tol > 0.0) || !(t_end > 0.0) || !(dt > 0.0) || !(i_ceiling > 0.0)) {
        throw ConfigError("bisection tolerances, horizon and ceiling must be positive");
    }
}

namespace {

SyncClass classify_at(double i_d, const TheveninParams& te, const PllParams& pll,
                      double i_q, const ImaxConfig& cfg, int& evals) {
    const DqCurrent cur{i_d, i_q};
    // The accumulator starts at zero; the realized starting rate is whatever
    // the closed loop produces at delta0, not a free parameter.
    const PllState start{cfg.delta0, 0.0, 0.0};
    ++evals;
    return integrate(start, te, cur, pll, cfg.t_end, cfg.dt).classification;
}

}  // namespace

ImaxResult max_stable_current(const TheveninParams& te, const PllParams& pll,
                              double i_q, const ImaxConfig& cfg) {
    cfg.validate();
    pll.validate();

    int evals = 0;
    const SyncClass at_zero = classify_at(0.0, te, pll, i_q, cfg, evals);
    if (at_zero == SyncClass::LossOfSync) {
        throw NoStableCurrent("zero d-axis current already loses synchronization");
    }
    if (at_zero == SyncClass::Undecided) {
        throw UndecidedBoundary("zero-current run is undecided; extend the horizon");
    }

    const SyncClass at_ceiling = classify_at(cfg.i_ceiling, te, pll, i_q, cfg, evals);
    if (at_ceiling == SyncClass::Synchronous) {
        return {cfg.i_ceiling, cfg.i_ceiling, cfg.i_ceiling, 0, evals};
    }
    if (at_ceiling == SyncClass::Undecided) {
        throw UndecidedBoundary("ceiling run is undecided; extend the horizon");
    }

    double lo = 0.0, hi = cfg.i_ceiling;
    int iterations = 0;
    while (hi - lo > cfg.tol) {
        const double mid = 0.5 * (lo + hi);
        const SyncClass c = classify_at(mid, te, pll, i_q, cfg, evals);
        if (c == SyncClass::Undecided) {
            throw UndecidedBoundary("bisection midpoint is undecided; extend the horizon");
        }
        if (c == SyncClass::Synchronous) {
            lo = mid;
        } else {
            hi = mid;
        }
        ++iterations;
    }
    return {lo, lo, hi, iterations, evals};
}

double static_limit(const TheveninParams& te, double i_q) {
    const double head = te.e.magnitude() - te.r * i_q;
    if (!(head > 0.0)) {
        throw ConfigError("potential does not exceed the resistive q-axis drop");
    }
    if (te.x == 0.0) return std::numeric_limits<double>::infinity();
    return head / te.x;
}

CurrentCommand command_from_estimate(const EstimateRecord& rec,
                                     const CurrentCommand& prefault,
                                     const PllParams& pll, double margin,
                                     const ImaxConfig& cfg) {
    if (rec.status != RecordStatus::Updated || !rec.z || !rec.e) {
        throw ConfigError("commands can only be derived from updated estimates");
    }
    if (!(margin > 0.0) || margin > 1.0) {
        throw ConfigError("command margin must lie in (0, 1]");
    }
    TheveninParams te;
    te.e = *rec.e;
    te.r = rec.z->r;
    te.x = rec.z->x;

    CurrentCommand cmd;
    cmd.i_q_ref = prefault.i_q_ref;
    cmd.issued_at = rec.t;
    cmd.basis = te;
    try {
        const ImaxResult res = max_stable_current(te, pll, prefault.i_q_ref, cfg);
        cmd.i_d_ref = std::min(prefault.i_d_ref, margin * res.i_max);
    } catch (const NoStableCurrent&) {
        cmd.i_d_ref = 0.0;
    }
    return cmd;
}

}  // namespace gridsync
