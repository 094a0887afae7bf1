#include "gpufail/scenarios.hpp"

#include <cmath>

namespace gpufail::telemetry {

namespace {

constexpr double kActiveDecoys = 0.006;   // benign episodes/GPU-day for a failing shape
constexpr double kBenignDecoys = 0.1;     // benign episodes/GPU-day for a harmless shape

Regime base_regime() {
  Regime r;
  r.precursor_min_ticks = 36;
  r.precursor_max_ticks = 108;
  r.min_magnitude = 1.0;
  r.max_magnitude = 1.8;
  return r;
}

}  // namespace

Regime family_a() {
  Regime r = base_regime();
  r.name = "A";
  r.weights = {0.3, 0.4, 0.2, 0.4, 0.2, 0.0};
  r.cause_mix = {1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
  r.decoy_rate = {kActiveDecoys, kActiveDecoys, kActiveDecoys,
                  kBenignDecoys, kBenignDecoys, kBenignDecoys};
  return r;
}

Regime family_b() {
  Regime r = base_regime();
  r.name = "B";
  r.weights = {0.3, 0.4, 0.2, -0.4, 0.0, 0.2};
  r.cause_mix = {0.0, 0.0, 0.0, 1.0, 1.0, 1.0};
  r.decoy_rate = {kBenignDecoys, kBenignDecoys, kBenignDecoys,
                  kActiveDecoys, kActiveDecoys, kActiveDecoys};
  return r;
}

Regime blend(const Regime& a, const Regime& b, double fraction) {
  auto mix = [fraction](double x, double y) { return (1.0 - fraction) * x + fraction * y; };
  Regime r = a;
  r.name = a.name + "->" + b.name + "@" + std::to_string(static_cast<int>(std::lround(fraction * 100)));
  r.base_logit = mix(a.base_logit, b.base_logit);
  r.weights = {mix(a.weights.temperature, b.weights.temperature),
               mix(a.weights.sm_util, b.weights.sm_util),
               mix(a.weights.uptime, b.weights.uptime),
               mix(a.weights.driver_418, b.weights.driver_418),
               mix(a.weights.v100, b.weights.v100),
               mix(a.weights.t4, b.weights.t4)};
  for (std::size_t c = 0; c < kCauseCount; ++c) {
    r.cause_mix[c] = mix(a.cause_mix[c], b.cause_mix[c]);
    r.decoy_rate[c] = mix(a.decoy_rate[c], b.decoy_rate[c]);
  }
  return r;
}

DriftSchedule stationary_schedule() { return {{{0.0, family_a()}}}; }

DriftSchedule flip_schedule(double flip_day) {
  return {{{0.0, family_a()}, {flip_day, family_b()}}};
}

DriftSchedule crossover_schedule(double begin_day, double end_day) {
  // Failing causes are handed over from A to B one at a time, so every stage
  // has the same number of failing and benign shapes.
  constexpr int kStages = 3;
  const Regime a = family_a(), b = family_b();
  DriftSchedule s;
  s.regimes.push_back({0.0, a});
  for (int k = 1; k <= kStages; ++k) {
    const double day = begin_day + (end_day - begin_day) * (k - 1) / (kStages - 1);
    Regime r = blend(a, b, static_cast<double>(k) / kStages);
    for (int c = 0; c < kStages; ++c) {
      const bool from_b = c < k;
      r.cause_mix[c] = from_b ? b.cause_mix[c] : a.cause_mix[c];
      r.decoy_rate[c] = from_b ? b.decoy_rate[c] : a.decoy_rate[c];
      r.cause_mix[c + kStages] = from_b ? b.cause_mix[c + kStages] : a.cause_mix[c + kStages];
      r.decoy_rate[c + kStages] = from_b ? b.decoy_rate[c + kStages] : a.decoy_rate[c + kStages];
    }
    if (day <= 0.0) {
      s.regimes.front().regime = r;
      continue;
    }
    s.regimes.push_back({day, r});
  }
  return s;
}

DriftSchedule alternating_schedule(double first_flip_day, double period_days, int horizon_days) {
  if (!(period_days > 0)) throw ConfigError("alternating period_days must be positive");
  DriftSchedule s;
  s.regimes.push_back({0.0, family_a()});
  bool b = true;
  for (double day = first_flip_day; day < horizon_days; day += period_days, b = !b) {
    if (day <= 0.0) {
      s.regimes.front().regime = b ? family_b() : family_a();
    } else {
      s.regimes.push_back({day, b ? family_b() : family_a()});
    }
  }
  return s;
}

DriftSchedule named_schedule(const std::string& name, int horizon_days) {
  const double mid = horizon_days / 2.0;
  if (name == "stationary") return stationary_schedule();
  if (name == "flip") return flip_schedule(mid);
  if (name == "crossover") return crossover_schedule(mid - 10.0, mid + 10.0);
  if (name == "alternating") return alternating_schedule(mid - 10.0, 12.0, horizon_days);
  throw ConfigError("unknown drift preset '" + name +
                    "' (valid: stationary, flip, crossover, alternating)");
}

}  // namespace gpufail::telemetry
