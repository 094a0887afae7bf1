#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gpufail/common.hpp"
#include "gpufail/dataset.hpp"
#include "gpufail/ensemble.hpp"

namespace gpufail::eval {

using models::ScoredInstance;

inline constexpr double kDefaultK = 0.02;
inline constexpr double kDefaultThreshold = 0.7;

// Labels are aligned with scores; nonzero means failure.

/// TP within top_k / floor(K*N). Throws on misaligned lengths.
std::optional<double> precision_at_k(std::span<const ScoredInstance> scores,
                                     std::span<const std::uint8_t> labels, double k);
/// TP within the set / |set|; nullopt for an empty set.
std::optional<double> precision_in_set(std::span<const ScoredInstance> scores,
                                       std::span<const std::uint8_t> labels,
                                       const std::set<std::uint64_t>& positive_set);

/// TP within top_k / total positives; nullopt when there are no positives.
std::optional<double> recall_at_k(std::span<const ScoredInstance> scores,
                                  std::span<const std::uint8_t> labels, double k);
std::optional<double> recall_in_set(std::span<const ScoredInstance> scores,
                                    std::span<const std::uint8_t> labels,
                                    const std::set<std::uint64_t>& positive_set);

/// Fraction of instances with (score > threshold) == label.
double accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                double threshold = kDefaultThreshold);

struct MetricReport {
  std::string window;
  std::string model;
  std::size_t n = 0;
  std::size_t positives = 0;
  std::size_t selected = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double k = kDefaultK;
  double threshold = kDefaultThreshold;
  std::optional<double> precision_at_k;
  std::optional<double> recall_at_k;
  double accuracy = 0.0;
};

/// Metrics for one group. `positive_set` replaces the top-K selection when
/// given (ensembles); `combined` replaces the scores for accuracy.
MetricReport evaluate(std::span<const ScoredInstance> scores, std::span<const std::uint8_t> labels,
                      double k, const std::set<std::uint64_t>* positive_set = nullptr,
                      std::span<const double> combined = {},
                      double threshold = kDefaultThreshold);

struct BalanceConfig {
  double positive_ratio = 1.0;
  double negative_ratio = 1.0;
  std::uint64_t seed = 1;
  /// Optional cap on the per-class target.
  std::optional<std::size_t> max_per_class;
};

/// round(sqrt(P * Nneg)).
std::size_t balance_target(std::size_t positives, std::size_t negatives);

/// Indices into `labels` forming the balanced sample, shuffled. The minority
/// class keeps every original and is topped up by draws with replacement;
/// the majority class is sampled without replacement. Throws
/// std::invalid_argument for single-class input.
std::vector<std::size_t> balance_indices(std::span<const std::uint8_t> labels,
                                         const BalanceConfig& config);

dataset::Dataset balance(const dataset::Dataset& train, const BalanceConfig& config);

struct Group {
  std::string name;
  TimeRange range;
  std::vector<std::size_t> indices;
};

/// Groups instance indices by UTC day of end_timestamp (windows empty) or by
/// the given windows (which may leave a group empty).
std::vector<Group> group_instances(std::span<const std::int64_t> end_timestamps,
                                   std::span<const TimeRange> windows = {});

struct WindowedMetrics {
  std::vector<MetricReport> reports;
  std::vector<std::string> omitted;  // groups without instances
  double precision_variance = 0.0;
  std::optional<double> mean_precision;
};

/// Per-group single-model metrics.
WindowedMetrics windowed_metrics(std::span<const ScoredInstance> scores,
                                 std::span<const std::uint8_t> labels,
                                 std::span<const std::int64_t> end_timestamps, double k,
                                 std::span<const TimeRange> windows = {});

/// Population variance; 0 for fewer than two values.
double population_variance(std::span<const double> values);

/// Mean and variance of the defined precision values of `reports`.
void summarize_precision(WindowedMetrics& metrics);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricReport& report);

}  // namespace gpufail::eval
