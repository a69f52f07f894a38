#pragma once

#include <string>

#include "gridsync/sim.hpp"

namespace gridsync {

// ---------------------------------------------------------------------------
// Scenario file handling (JSON) and the two built-in study cases.
// ---------------------------------------------------------------------------

// Serializes with stable key ordering so repeated saves are byte-identical.
std::string scenario_to_json(const Scenario& scn);

// Parses and validates; malformed input raises ConfigError with the origin
// and byte position of the problem.
Scenario scenario_from_json(const std::string& text,
                            const std::string& origin = "<inline>");

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scn, const std::string& path);

struct BuiltinScenarios {
    Scenario ideal_source;
    Scenario two_area;
};

// The two study cases:
//
// ideal_source - a stiff 1 pu source feeding the converter bus through a
// 0.05 H + 0.1 H + 0.01 H chain, with a 0.02 H spur; a bolted fault near the
// far end of the spur (position calibrated so the faulted equivalent is
// exactly 0.285 pu behind 0.12425 H) hits at 0.5 s and clears at 1.1 s by
// opening the spur.
//
// two_area - a regulated flux-decay generator behind 0.18 pu transient
// reactance feeding the converter bus over a double 0.25 H corridor plus a
// double 0.01 H tie; a bolted fault at 80% of one corridor line hits at
// 1.0 s and clears at 1.6 s by opening the faulted line.
BuiltinScenarios builtin_scenarios();

}  // namespace gridsync
