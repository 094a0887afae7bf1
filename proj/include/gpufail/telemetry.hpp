#pragma once

// Synthetic per-GPU telemetry with drifting failure signatures.
//
// Each GPU is simulated tick by tick (10 minutes). A workload state machine
// drives utilisation, power and temperature; a per-tick failure hazard is a
// logistic function of the active regime's weights and the GPU's recent
// trajectory. Every sampled failure is preceded by a cause-specific
// precursor ramp, and every regime also emits benign "decoy" episodes with
// the same shapes. Which shapes precede failures and which are benign is
// what drifts between regimes.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gpufail/common.hpp"

namespace gpufail::telemetry {

inline constexpr std::array<std::string_view, 3> kGpuTypes = {"V100", "T4", "P4"};
inline constexpr std::array<std::string_view, 2> kDriverVersions = {"418", "450"};

struct StaticConfig {
  std::string serial;
  std::string datacenter;  // prefix of rack
  std::string gpu_type;
  std::string driver_version;
  std::int32_t expiration_date = 0;  // epoch day
  std::string rack;
  int position = 0;  // slot in the 8-card machine
  std::string ip;

  bool operator==(const StaticConfig&) const = default;
};

/// One 10-minute sample of a GPU. The serial lives on the owning GpuStream.
struct TelemetryRecord {
  std::int64_t timestamp = 0;  // epoch minutes, multiple of 10
  int temperature = 0;         // degC, (20, 90)
  int power = 0;               // W, [0, 400)
  int sm_util = 0;             // percent
  int mem_util = 0;            // percent
  std::int64_t uptime = 0;     // seconds
  bool failure_status = false;

  bool operator==(const TelemetryRecord&) const = default;
};

struct GpuStream {
  std::string serial;
  std::vector<TelemetryRecord> records;

  bool operator==(const GpuStream&) const = default;
};

enum class Cause : int {
  ThermalRamp = 0,
  PowerSpikes,
  MemoryLeak,
  SmStall,
  ThermalThrottle,
  UtilJitter,
};
inline constexpr std::size_t kCauseCount = 6;
std::string_view cause_name(Cause c);

/// Coefficients of the per-tick failure logit over trajectory features.
struct HazardWeights {
  double temperature = 0.0;  // (3h mean temperature - 60) / 10
  double sm_util = 0.0;      // 3h mean sm_util / 100 - 0.5
  double uptime = 0.0;       // uptime in units of 30 days
  double driver_418 = 0.0;
  double v100 = 0.0;
  double t4 = 0.0;

  bool operator==(const HazardWeights&) const = default;
};

struct Regime {
  std::string name;
  double base_logit = -7.6;  // per-tick failure logit intercept
  HazardWeights weights;
  std::array<double, kCauseCount> cause_mix{};   // relative weight of each cause among failures
  std::array<double, kCauseCount> decoy_rate{};  // benign episodes per GPU-day, per cause
  int precursor_min_ticks = 18;
  int precursor_max_ticks = 72;
  double min_magnitude = 0.6;  // per-episode signature strength range
  double max_magnitude = 1.2;

  bool operator==(const Regime&) const = default;
};

struct RegimeStart {
  double start_day = 0.0;  // days since fleet start
  Regime regime;

  bool operator==(const RegimeStart&) const = default;
};

struct DriftSchedule {
  std::vector<RegimeStart> regimes;  // start_day strictly increasing

  void validate() const;
  bool operator==(const DriftSchedule&) const = default;
};

/// Regime with the largest start_day <= day.
const Regime& regime_at(double day, const DriftSchedule& schedule);
std::size_t regime_index_at(double day, const DriftSchedule& schedule);

struct RepairDelay {
  double min_hours = 6.0;
  double max_hours = 48.0;

  bool operator==(const RepairDelay&) const = default;
};

struct FleetConfig {
  int n_gpus = 64;
  int horizon_days = 30;
  std::uint64_t seed = 1;
  std::int32_t start_day = 18687;  // 2021-03-01
  int datacenters = 3;
  DriftSchedule drift;
  RepairDelay repair_delay;

  void validate() const;
  bool operator==(const FleetConfig&) const = default;
};

/// Ground truth for one sampled failure. Never part of model inputs.
struct FailureEvent {
  std::string serial;
  std::int64_t onset = 0;   // first timestamp with failure_status = 1
  std::int64_t repair = 0;  // first healthy timestamp after the failure
  Cause cause = Cause::ThermalRamp;
  std::size_t regime = 0;
  int precursor_ticks = 0;
};

struct DecoyEvent {
  std::string serial;
  std::int64_t begin = 0;
  std::int64_t end = 0;
  Cause cause = Cause::ThermalRamp;
};

struct Fleet {
  std::vector<StaticConfig> inventory;
  std::vector<GpuStream> streams;  // same order as inventory
  std::vector<FailureEvent> failures;
  std::vector<DecoyEvent> decoys;
};

Fleet generate_fleet(const FleetConfig& config);

std::int64_t start_minutes(const FleetConfig& config);

/// One JSON object per line, fields named as in TelemetryRecord plus serial.
void write_telemetry_jsonl(std::ostream& out, const std::vector<GpuStream>& streams);
void write_inventory_jsonl(std::ostream& out, const std::vector<StaticConfig>& inventory);
std::vector<StaticConfig> read_inventory_jsonl(std::istream& in);

}  // namespace gpufail::telemetry
