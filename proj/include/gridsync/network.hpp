#pragma once

#include <complex>
#include <string>
#include <variant>
#include <vector>

#include "gridsync/types.hpp"

namespace gridsync {

// ---------------------------------------------------------------------------
// Static network description: inductive branches between named buses, ideal
// and regulated sources, and a scripted fault/clear sequence. Reduction to a
// grid equivalent seen from the measurement bus is exact linear algebra on
// the nodal admittance matrix of the topology in force at a given time.
// ---------------------------------------------------------------------------

struct Branch {
    std::string id;
    std::string from;
    std::string to;
    double l_henries = 0.0;
    bool in_service = true;
};

struct IdealSource {
    Phasor e;  // fixed bus voltage, pu
};

// First-order internal-potential generator behind its transient reactance,
// with a first-order excitation regulator driving the field voltage.
struct FluxDecayGenParams {
    double t_d0p = 5.0;    // transient open-circuit time constant, s
    double x_d = 1.8;      // synchronous reactance, pu
    double x_dp = 0.3;     // transient reactance, pu
    double e_q0 = 1.0;     // initial internal potential, pu
    double e_fd_max = 5.0; // field-voltage ceiling, pu
    double avr_gain = 50.0;
    double avr_tau = 0.05; // s

    void validate() const;
};

struct Source {
    std::string bus;
    std::variant<IdealSource, FluxDecayGenParams> kind;
};

enum class ClearingAction { OpenBranch, RemoveFaultOnly };

struct FaultEvent {
    double t_apply = 0.0;
    double t_clear = 0.0;
    std::string branch;      // Branch::id
    double position = 0.0;   // fraction along the branch from its `from` bus
    ClearingAction clearing_action = ClearingAction::OpenBranch;
};

struct Network {
    std::vector<std::string> buses;
    std::vector<Branch> branches;
    std::vector<Source> sources;
    std::string pcc_bus;
    std::vector<FaultEvent> faults;

    void validate() const;  // throws ConfigError on structural problems
};

// Linear solution of one topology epoch, expressed as coefficient rows so a
// simulation can re-evaluate voltages and currents cheaply as source
// potentials and the injected current change. All coefficients are per source
// in network order (ideal sources contribute their fixed phasor; regulated
// generators contribute their live internal potential).
struct GenRow {
    std::vector<std::complex<double>> i_coeff;  // stator current per source EMF
    std::complex<double> i_inj;                 // stator current per unit injection
    std::vector<std::complex<double>> v_coeff;  // terminal-bus voltage per source EMF
    std::complex<double> v_inj;                 // terminal-bus voltage per unit injection
};

struct NetworkSolution {
    std::complex<double> z;                     // driving-point impedance at pcc, pu
    std::vector<std::complex<double>> e_coeff;  // open-circuit pcc voltage per source EMF
    std::vector<GenRow> gens;                   // one row per regulated generator
};

// Solves the topology in force at at_time (fault grounding and clearing
// actions applied; a fault splits its branch proportionally at `position`).
// Throws DisconnectedPcc when the measurement bus has no path to any source
// or ground tie.
NetworkSolution solve_topology(const Network& net, const PerUnitBase& base,
                               double at_time);

// Open-circuit potential and driving-point impedance at the measurement bus.
// gen_potentials supplies the live internal potential of each regulated
// generator in network order; when empty, each generator's e_q0 is used.
TheveninParams thevenin_reduce(const Network& net, const PerUnitBase& base,
                               double at_time,
                               const std::vector<double>& gen_potentials = {});

// Source potentials in network order (ideal phasors as given; generators at
// the supplied or initial internal potential).
std::vector<std::complex<double>> source_potentials(
    const Network& net, const std::vector<double>& gen_potentials = {});

}  // namespace gridsync
