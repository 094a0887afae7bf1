#pragma once

// JSON run configuration shared by the CLI subcommands. Parsing collects every
// schema violation and reports them together in one ConfigError.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gpufail/collection.hpp"
#include "gpufail/dataset.hpp"
#include "gpufail/harness.hpp"
#include "gpufail/telemetry.hpp"

namespace gpufail::config {

enum class ExperimentMode { Static, Sliding, VariableLength };

struct DriftSpec {
  std::string preset = "stationary";  // stationary | flip | crossover | alternating
  double day = -1;                    // flip day (default: mid-horizon)
  double begin_day = -1;              // crossover start (default: mid - 10)
  double end_day = -1;                // crossover end (default: mid + 10)
  double first_flip_day = -1;         // alternating (default: mid - 10)
  double period_days = 12;            // alternating

  telemetry::DriftSchedule build(int horizon_days) const;
};

struct NamedSplit {
  std::string name;
  TimeRange range;
};

struct RunConfig {
  std::uint64_t seed = 1;
  telemetry::FleetConfig fleet;
  DriftSpec drift;
  collection::CollectingPolicy policy = collection::CollectingPolicy::all_attributes();
  dataset::WindowingParams windowing;
  dataset::Windowing windowing_mode = dataset::Windowing::Sliding;
  std::vector<NamedSplit> splits;  // prepare

  bool has_experiment = false;
  ExperimentMode mode = ExperimentMode::Sliding;
  harness::ExperimentConfig experiment;
  harness::SlidingConfig sliding;  // horizon is shared with static runs
  TimeRange static_train;
  bool static_windows = false;  // static: evaluate per t_retrain window instead of daily

  /// Applies the root seed to the fleet and experiment sub-seeds.
  void apply_seed(std::uint64_t root);
};

/// Parses JSON text. Unknown keys, wrong types and invalid values are all
/// reported at once.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::string& path);

/// Canonical JSON of the effective configuration.
std::string snapshot(const RunConfig& config);

std::string_view mode_name(ExperimentMode mode);

}  // namespace gpufail::config
