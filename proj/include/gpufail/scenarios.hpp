#pragma once

// Drift schedule presets used by the CLI and the experiment suites.
//
// Two regime "families" split the six failure causes in half. In family A
// the thermal/power/memory shapes precede failures and the stall/throttle/
// jitter shapes are benign; family B swaps the roles and also flips which
// driver version is riskier.

#include <string>

#include "gpufail/telemetry.hpp"

namespace gpufail::telemetry {

Regime family_a();
Regime family_b();

/// Linear blend of two regimes (fraction 0 -> a, 1 -> b).
Regime blend(const Regime& a, const Regime& b, double fraction);

/// One regime for the whole horizon.
DriftSchedule stationary_schedule();

/// A until `flip_day`, B afterwards.
DriftSchedule flip_schedule(double flip_day);

/// A until `begin_day`, then three stages at `begin_day`, the midpoint and
/// `end_day`, each moving one failing cause from A's set to B's.
DriftSchedule crossover_schedule(double begin_day, double end_day);

/// A until `first_flip_day`, then the families alternate every
/// `period_days`, up to `horizon_days`.
DriftSchedule alternating_schedule(double first_flip_day, double period_days, int horizon_days);

/// Named preset lookup ("stationary", "flip", "crossover", "alternating").
DriftSchedule named_schedule(const std::string& name, int horizon_days);

}  // namespace gpufail::telemetry
