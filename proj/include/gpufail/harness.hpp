#pragma once

// Experiment drivers: a static (train once) baseline, fixed-length sliding
// retraining and variable-length sliding retraining.
//
// A retrain point n trains on [start + n*T - L, start + n*T) days and is
// evaluated on the test window [start + n*T, start + (n+1)*T). Training
// instances must have their whole prediction horizon inside the training
// range so no label peeks into the test window.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpufail/dataset.hpp"
#include "gpufail/ensemble.hpp"
#include "gpufail/eval.hpp"
#include "gpufail/models.hpp"

namespace gpufail::harness {

enum class MethodKind { Single, Parallel, Cascade };

struct Method {
  std::string name;
  MethodKind kind = MethodKind::Single;
  models::ModelKind model = models::ModelKind::CNN1D;  // Single only
};

/// "GBDT", "MLP", "LSTM", "1D-CNN", "parallel" or "cascade". Throws
/// ConfigError naming the valid methods.
Method method_from_name(const std::string& name);

struct ExperimentConfig {
  std::vector<std::string> methods = {"1D-CNN"};
  double k = eval::kDefaultK;
  double threshold = eval::kDefaultThreshold;
  double k1 = 0.05;  // cascade stage-1 survivors
  double k2 = 0.02;  // cascade positives
  double cascade_positive_weight = 2.0;
  double cascade_negative_weight = 1.0;
  int n_bucket = 50;
  std::optional<std::size_t> max_per_class;  // balancing cap
  std::map<std::string, std::map<std::string, double>> hyperparameters;  // by kind name
  std::uint64_t seed = 1;
  bool keep_models = false;
  std::function<void(const std::string&)> log;  // progress messages

  void validate() const;
};

struct SlidingConfig {
  int t_retrain = 3;  // days
  int l_train = 15;   // days
  std::vector<int> l_candidates = {9, 12, 15};
  TimeRange horizon;  // epoch minutes, whole days

  void validate(bool variable_length) const;
};

struct ScheduleEntry {
  int n = 0;
  TimeRange train_range;
  TimeRange test_window;
  int chosen_l = 0;  // days
};

/// Test windows tiling `horizon` with training ranges of `l_train` days.
/// Throws ConfigError unless the horizon is a whole number of windows.
std::vector<ScheduleEntry> make_schedule(const SlidingConfig& config, int l_train);

struct WindowReport {
  ScheduleEntry entry;
  std::string method;
  eval::MetricReport metrics;
};

/// Precision of one candidate length on one test window (variable length).
struct CandidateLog {
  int n = 0;
  std::string method;
  int l_train = 0;
  std::optional<double> precision;
};

struct StoredModel {
  int n = 0;
  int l_train = 0;
  std::string key;
  models::TrainedModel model;
};

struct RunResult {
  std::vector<WindowReport> reports;
  std::vector<CandidateLog> candidates;
  std::vector<StoredModel> models;  // when keep_models

  /// Reports of one method in window order.
  std::vector<eval::MetricReport> metrics_of(const std::string& method) const;
  /// Mean and population variance of the method's per-window precision.
  eval::WindowedMetrics summary(const std::string& method) const;
};

/// Trains once on `train_range` and evaluates over `horizon`, daily or per
/// the given windows. Throws ConfigError when the ranges overlap.
RunResult run_static(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                     const TimeRange& train_range, const TimeRange& horizon,
                     std::span<const TimeRange> windows = {});

RunResult run_sliding(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                      const SlidingConfig& config);

RunResult run_variable_length(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                              const SlidingConfig& config);

/// Candidate whose previous-window precision is highest (ties go to the
/// longer length; undefined precision ranks lowest). With no previous
/// window, the longest candidate.
int select_length(std::span<const int> candidates,
                  const std::map<int, std::optional<double>>* previous);

/// Run directory content: summary.csv, plot.csv (long format),
/// windows/<n>/metrics.csv, windows/<n>/<key>_L<l>.model.json and
/// candidates.csv for variable-length runs.
void write_run(const std::string& dir, const RunResult& result);

}  // namespace gpufail::harness
