#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpufail/models.hpp"

namespace gpufail::ensemble {

using models::ScoredInstance;

/// floor(K * N), at least 1. Throws std::invalid_argument unless 0 < K <= 1.
std::size_t cutoff_count(std::size_t n, double k);

struct TopKSelection {
  double k = 0.0;
  std::vector<std::uint64_t> selected;  // by (score desc, id asc)
  std::size_t cutoff_count = 0;
};

/// Throws std::invalid_argument on empty scores.
TopKSelection top_k(std::span<const ScoredInstance> scores, double k);

/// The `count` best instances by (score desc, id asc); count is clamped to N.
std::vector<std::uint64_t> top_count(std::span<const ScoredInstance> scores, std::size_t count);

struct EnsemblePrediction {
  std::vector<std::uint64_t> ids;  // test order
  std::vector<std::string> model_names;
  std::vector<std::vector<double>> per_model_scores;  // [model][instance]; NaN if not scored
  std::vector<double> combined_score;
  std::set<std::uint64_t> positive_set;

  bool in_positive_set(std::uint64_t id) const { return positive_set.count(id) != 0; }
};

/// Intersection of each model's top-K set; combined score is the minimum.
/// All score lists must cover the same ids in the same order.
EnsemblePrediction parallel_combine(std::span<const std::string> names,
                                    std::span<const std::vector<ScoredInstance>> scores, double k);

/// Stage 1 keeps its top k1*N; stage 2 scores rank only those survivors and
/// the top k2*N of them are positive. Entries of `stage2` for non-survivors
/// are ignored. Non-survivors get a combined score below every survivor:
/// min_survivor_stage2 * s1 / s1_cutoff.
EnsemblePrediction cascade_combine(std::span<const ScoredInstance> stage1,
                                   std::span<const ScoredInstance> stage2, double k1, double k2);

using NamedModel = std::pair<std::string, models::TrainedModel>;

EnsemblePrediction parallel_predict(std::span<const NamedModel> members,
                                    std::span<const features::Instance> test, double k);

EnsemblePrediction cascade_predict(const models::TrainedModel& stage1,
                                   const models::TrainedModel& stage2,
                                   std::span<const features::Instance> test, double k1, double k2);

/// CSV: id, one score column per model, combined, in_positive_set.
void write_prediction_report(std::ostream& out, const EnsemblePrediction& prediction);

}  // namespace gpufail::ensemble
