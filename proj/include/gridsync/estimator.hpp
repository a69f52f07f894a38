#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gridsync/types.hpp"

namespace gridsync {

// ---------------------------------------------------------------------------
// Online grid-equivalent estimation from PCC measurement streams.
//
// The pipeline: difference consecutive samples, keep only differences whose
// voltage change clears a threshold and whose single-pair solution satisfies
// physical constraints, then solve a sliding-window least squares over the
// kept differences. Baseline estimators (plain window LS, recursive LS, and
// the per-pair quotient) are provided for comparison.
// ---------------------------------------------------------------------------

struct DiffSample {
    double t = 0.0;   // timestamp of the later sample, s
    Phasor dv;        // voltage change, pu
    Phasor di;        // current change, pu
    PmuSample endpoint;  // the later raw sample, used for the potential check
};

struct GateConfig {
    double dv_threshold = 0.02;  // minimum |dv| to consider a difference, pu
    double x_max = 0.0;          // offline pre-event reactance ceiling, pu
    double e_max = 1.0;          // ceiling on the implied potential magnitude, pu
    int window_m = 5;            // sliding-window length, in kept differences

    void validate() const;  // throws ConfigError on non-positive fields
};

struct Impedance {
    double r = 0.0;  // pu
    double x = 0.0;  // pu
};

enum class RecordStatus { Updated, Held };

struct EstimateRecord {
    double t = 0.0;
    std::optional<Impedance> z;  // carried forward while Held
    std::optional<Phasor> e;     // potential back-solved at the record's sample
    int n_selected = 0;          // kept differences currently in the window
    RecordStatus status = RecordStatus::Held;
};

// Difference of two consecutive samples. The samples must be exactly
// expected_dt apart (within 1e-9 s) or NonAdjacentSamples is thrown.
DiffSample diff(const PmuSample& prev, const PmuSample& next, double expected_dt);

// Single-pair impedance: the complex quotient dv/di. Throws SingularDiff when
// |di| <= 1e-9.
Impedance solve_pair(const DiffSample& d);

// Potential back-solve at one sample: e = v - (r + jx) * i, with i the
// converter output current (see PmuSample).
Phasor estimate_potential(const PmuSample& s, const Impedance& z);

// True iff the difference clears the voltage threshold, its single-pair
// solve succeeds, 0 <= x <= x_max (tiny negative r is tolerated and treated
// as zero), r <= x, and the potential implied at the difference's endpoint
// has magnitude <= e_max. Never throws; any solve failure gates out.
bool gate(const DiffSample& d, const GateConfig& cfg);

// Least squares over a window of kept differences: each difference
// contributes the two stacked real equations of dv = (r + jx) * di. Requires
// at least two entries; throws RankDeficient when the normal equations have
// condition number above 1e12 (in particular when every di is zero).
Impedance estimate(std::span<const DiffSample> window, const GateConfig& cfg);

// Streaming estimator: differences consecutive samples, gates each one,
// slides a window of the most recent window_m kept differences, and emits one
// record per incoming sample starting with the second. A record is Updated
// when this sample's difference was kept and the window then holds >= 2
// entries (the estimate is re-solved and re-checked against the gate
// constraints); otherwise the previous estimate is carried forward Held.
std::vector<EstimateRecord> run_stream(std::span<const PmuSample> samples,
                                       const GateConfig& cfg, double expected_dt);

// Incremental form of run_stream for online use: feed samples one at a time;
// every sample after the first yields a record with identical semantics.
class StreamEstimator {
public:
    StreamEstimator(const GateConfig& cfg, double expected_dt);

    std::optional<EstimateRecord> push(const PmuSample& s);

private:
    GateConfig cfg_;
    double dt_;
    std::optional<PmuSample> prev_;
    std::vector<DiffSample> window_;
    std::optional<Impedance> last_z_;
    std::optional<Phasor> last_e_;
};

// ---------------------------------------------------------------------------
// Analytic error bounds for the single-pair solve under potential drift.
// ---------------------------------------------------------------------------

struct BoundInputs {
    double t_d0p = 0.0;      // transient open-circuit time constant, s
    double d_efd_max = 0.0;  // largest no-load potential change, pu
    double dT = 0.0;         // sampling interval, s

    void validate() const;
};

// Largest per-sample potential change: d_efd_max * dT / t_d0p.
double de_max(const BoundInputs& b);

// Voltage-change threshold guaranteeing relative impedance error below
// k_percent: (100/k_percent + 1) * de.
double required_dv(double k_percent, double de);

// Upper bound on the relative impedance error of one pair solve:
// de / (dv - de). Throws BoundUndefined when dv <= de.
double relative_error_bound(double dv_norm, double de_norm);

// ---------------------------------------------------------------------------
// Baseline estimators. All emit one record per incoming sample starting with
// the second, mirroring run_stream's cadence, and never throw on degenerate
// data (they hold the previous value instead).
// ---------------------------------------------------------------------------

// Sliding window of the most recent window_m raw differences, no gating.
std::vector<EstimateRecord> baseline_window_ls(std::span<const PmuSample> samples,
                                               const GateConfig& cfg,
                                               double expected_dt);

struct RlsConfig {
    double forgetting = 0.98;  // exponential weight on past data
    double p0 = 100.0;         // initial covariance scale
};

// Exponentially weighted recursive least squares over raw differences.
std::vector<EstimateRecord> baseline_rls(std::span<const PmuSample> samples,
                                         const RlsConfig& cfg, double expected_dt);

// Per-pair quotient of raw differences, carrying forward on degenerate pairs.
std::vector<EstimateRecord> baseline_dv_di(std::span<const PmuSample> samples,
                                           double expected_dt);

}  // namespace gridsync
