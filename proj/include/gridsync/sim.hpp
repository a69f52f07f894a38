#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gridsync/estimator.hpp"
#include "gridsync/network.hpp"
#include "gridsync/pll.hpp"
#include "gridsync/stability.hpp"
#include "gridsync/types.hpp"

namespace gridsync {

// ---------------------------------------------------------------------------
// Deterministic phasor-domain simulation: the converter is a PLL-driven
// current source with first-order reference tracking, the grid is the linear
// network of `network.hpp` (optionally with a regulated flux-decay
// generator), and measurements are sampled on a fixed grid with optional
// Gaussian phasor noise.
// ---------------------------------------------------------------------------

struct NoiseConfig {
    double sigma = 0.0;         // std-dev added to each phasor component, pu
    std::uint64_t seed = 0;
};

struct ConverterConfig {
    double i_d_prefault = 0.0;
    double i_q = 0.0;
    // Open-loop command schedule: the during-fault and post-clear d-axis
    // commands take effect command_delay seconds after the respective event.
    double fault_i_d = 0.0;
    double postclear_i_d = 0.0;
    double command_delay = 0.01;  // s
    double tracking_tau = 0.01;   // s, first-order reference tracking
    double i_ceiling = 1.2;       // pu
};

struct PllConfig {
    double damping = 0.707;
    double omega_n = 0.0;     // rad/s; <= 0 selects the library default
    double freq_limit = 0.0;  // rad/s; <= 0 selects +-2.5 Hz
};

struct ControllerConfig {
    bool enabled = false;   // closed loop: command from the live estimate
    double margin = 0.95;
    double imax_tol = 0.01;
    double imax_t_end = 2.0;
    double imax_dt = 5e-5;
    double imax_ceiling = 1.2;
};

struct Scenario {
    std::string name;
    PerUnitBase base;
    Network net;
    ConverterConfig conv;
    PllConfig pll;
    GateConfig gate;
    double t_end = 2.0;
    double dt = 5e-5;      // integration step, s
    double pmu_dt = 0.01;  // sampling interval, s (must be a multiple of dt)
    ControllerConfig controller;
    NoiseConfig noise;

    void validate() const;
};

struct GenState {
    double e_qp = 0.0;  // internal potential, pu
    double e_fd = 0.0;  // field voltage (saturating state), pu
};

struct SimState {
    double t = 0.0;
    double i_d = 0.0;
    double i_q = 0.0;
    double delta = 0.0;   // PLL angle, rad
    double integ = 0.0;   // PLL accumulator, rad/s
    std::vector<GenState> gens;
};

struct StatePoint {
    double t = 0.0;
    Phasor v;             // PCC voltage
    double i_d = 0.0;     // converter dq current (actual)
    double i_q = 0.0;
    double delta = 0.0;
    double omega1 = 0.0;  // rad/s
    double p = 0.0;       // injected active power, pu
    double q = 0.0;       // injected reactive power, pu
    double truth_x = 0.0;     // live equivalent reactance, pu
    double truth_e = 0.0;     // live equivalent potential magnitude, pu
    double truth_r = 0.0;     // live equivalent resistance, pu
    double truth_e_ang = 0.0; // live equivalent potential angle, rad
};

struct TruthPoint {
    double t = 0.0;
    TheveninParams te;
};

struct SimResult {
    std::vector<PmuSample> pmu;
    std::vector<TruthPoint> truth;
    std::vector<StatePoint> log;          // at the sampling cadence
    SyncClass classification = SyncClass::Undecided;
    std::vector<EstimateRecord> estimates;  // closed loop only
    std::vector<CurrentCommand> commands;   // commands issued by the controller
    PllParams pll;                          // resolved loop parameters
    double prefault_delta0 = 0.0;           // starting operating angle, rad
};

// Stepwise simulator: initialized at the pre-event steady state (all state
// derivatives vanish), advanced one fixed step at a time. Events scheduled at
// time T take effect on the step leaving T, so a measurement taken at T still
// reflects the pre-event topology.
class Simulator {
public:
    explicit Simulator(const Scenario& scn);
    ~Simulator();
    Simulator(Simulator&&) noexcept;
    Simulator& operator=(Simulator&&) noexcept;

    void step();                  // advance by scn.dt
    double time() const;
    const SimState& state() const;
    const PllParams& pll() const;
    double prefault_delta() const;

    // Noiseless measurement of the PCC voltage/current phasors, consistent
    // with the topology of the last completed step.
    PmuSample measure() const;
    StatePoint state_point() const;

    // Grid equivalent at the live generator potentials: for the topology of
    // the last completed step, and for the topology the next step will use.
    TheveninParams truth() const;
    TheveninParams truth_ahead() const;
    bool topology_changes_next() const;

    // Overrides the open-loop command schedule from now on (controller path).
    void set_command(const DqCurrent& cmd);
    DqCurrent active_command() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Full run: simulate, sample, optionally estimate-and-command in closed loop,
// classify the outcome against the drifting equilibrium of the live grid
// equivalent (loose thresholds 0.05 rad / 0.5 rad/s, angle-slip latch, and
// the pinned-frequency rule over the final 0.2 s).
SimResult run_scenario(const Scenario& scn);

}  // namespace gridsync
