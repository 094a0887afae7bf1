#include "gpufail/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace gpufail::ensemble {

std::size_t cutoff_count(std::size_t n, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw std::invalid_argument("K must lie in (0, 1]");
  const auto c = static_cast<std::size_t>(std::floor(k * static_cast<double>(n) + 1e-9));
  return std::max<std::size_t>(1, std::min(c, n));
}

std::vector<std::uint64_t> top_count(std::span<const ScoredInstance> scores, std::size_t count) {
  count = std::min(count, scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return scores[a].id < scores[b].id;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    better);
  std::vector<std::uint64_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(scores[order[i]].id);
  return out;
}

TopKSelection top_k(std::span<const ScoredInstance> scores, double k) {
  if (scores.empty()) throw std::invalid_argument("top_k of empty scores");
  TopKSelection sel;
  sel.k = k;
  sel.cutoff_count = cutoff_count(scores.size(), k);
  sel.selected = top_count(scores, sel.cutoff_count);
  return sel;
}

namespace {

void check_aligned(std::span<const ScoredInstance> a, std::span<const ScoredInstance> b) {
  if (a.size() != b.size()) throw std::invalid_argument("score lists differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id) throw std::invalid_argument("score lists are not aligned by id");
  }
}

std::vector<double> values(std::span<const ScoredInstance> s) {
  std::vector<double> v;
  v.reserve(s.size());
  for (const auto& x : s) v.push_back(x.score);
  return v;
}

}  // namespace

EnsemblePrediction parallel_combine(std::span<const std::string> names,
                                    std::span<const std::vector<ScoredInstance>> scores, double k) {
  if (scores.empty() || names.size() != scores.size()) {
    throw std::invalid_argument("parallel ensemble needs one name per score list");
  }
  if (scores.front().empty()) throw std::invalid_argument("parallel ensemble of empty scores");
  for (const auto& s : scores) check_aligned(scores.front(), s);

  EnsemblePrediction out;
  for (const auto& s : scores.front()) out.ids.push_back(s.id);
  out.model_names.assign(names.begin(), names.end());
  out.combined_score.assign(out.ids.size(), std::numeric_limits<double>::infinity());
  std::vector<std::uint64_t> common;
  for (std::size_t m = 0; m < scores.size(); ++m) {
    out.per_model_scores.push_back(values(scores[m]));
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
      out.combined_score[i] = std::min(out.combined_score[i], scores[m][i].score);
    }
    auto sel = top_k(scores[m], k).selected;
    std::sort(sel.begin(), sel.end());
    if (m == 0) {
      common = std::move(sel);
    } else {
      std::vector<std::uint64_t> next;
      std::set_intersection(common.begin(), common.end(), sel.begin(), sel.end(),
                            std::back_inserter(next));
      common = std::move(next);
    }
  }
  out.positive_set.insert(common.begin(), common.end());
  return out;
}

EnsemblePrediction cascade_combine(std::span<const ScoredInstance> stage1,
                                   std::span<const ScoredInstance> stage2, double k1, double k2) {
  if (stage1.empty()) throw std::invalid_argument("cascade of empty scores");
  if (k2 > k1) throw std::invalid_argument("cascade requires k2 <= k1");
  check_aligned(stage1, stage2);
  const std::size_t n = stage1.size();
  const std::size_t n1 = cutoff_count(n, k1);
  const std::size_t n2 = std::min(cutoff_count(n, k2), n1);

  const auto survivors = top_count(stage1, n1);
  const std::set<std::uint64_t> survivor_set(survivors.begin(), survivors.end());

  EnsemblePrediction out;
  out.model_names = {"stage1", "stage2"};
  out.per_model_scores.assign(2, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
  std::vector<ScoredInstance> surviving;
  double s1_cut = std::numeric_limits<double>::infinity();
  double s2_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    out.ids.push_back(stage1[i].id);
    out.per_model_scores[0][i] = stage1[i].score;
    if (survivor_set.count(stage1[i].id)) {
      out.per_model_scores[1][i] = stage2[i].score;
      surviving.push_back(stage2[i]);
      s1_cut = std::min(s1_cut, stage1[i].score);
      s2_min = std::min(s2_min, stage2[i].score);
    }
  }
  out.combined_score.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (survivor_set.count(stage1[i].id)) {
      out.combined_score[i] = stage2[i].score;
    } else {
      out.combined_score[i] = s1_cut > 0 ? s2_min * stage1[i].score / s1_cut : 0.0;
    }
  }
  const auto positives = top_count(surviving, n2);
  out.positive_set.insert(positives.begin(), positives.end());
  return out;
}

EnsemblePrediction parallel_predict(std::span<const NamedModel> members,
                                    std::span<const features::Instance> test, double k) {
  if (members.empty()) throw std::invalid_argument("parallel ensemble needs models");
  std::vector<std::string> names;
  std::vector<std::vector<ScoredInstance>> scores;
  for (const auto& [name, model] : members) {
    names.push_back(name);
    scores.push_back(models::predict(model, test));
  }
  return parallel_combine(names, scores, k);
}

EnsemblePrediction cascade_predict(const models::TrainedModel& stage1,
                                   const models::TrainedModel& stage2,
                                   std::span<const features::Instance> test, double k1, double k2) {
  if (k2 > k1) throw std::invalid_argument("cascade requires k2 <= k1");
  const auto s1 = models::predict(stage1, test);
  const auto keep = top_count(s1, cutoff_count(test.size(), k1));
  const std::set<std::uint64_t> keep_set(keep.begin(), keep.end());
  std::vector<features::Instance> survivors;
  for (const auto& inst : test) {
    if (keep_set.count(inst.id)) survivors.push_back(inst);
  }
  const auto rescored = models::predict(stage2, survivors);
  std::vector<ScoredInstance> s2(test.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    s2[i] = {test[i].id, 0.0};
    if (j < rescored.size() && rescored[j].id == test[i].id) s2[i].score = rescored[j++].score;
  }
  return cascade_combine(s1, s2, k1, k2);
}

void write_prediction_report(std::ostream& out, const EnsemblePrediction& p) {
  out << "id";
  for (const auto& name : p.model_names) out << ',' << name;
  out << ",combined,in_positive_set\n";
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    out << p.ids[i];
    for (const auto& s : p.per_model_scores) {
      out << ',';
      if (std::isnan(s[i])) {
        out << "NA";
      } else {
        out << s[i];
      }
    }
    out << ',' << p.combined_score[i] << ',' << (p.in_positive_set(p.ids[i]) ? 1 : 0) << '\n';
  }
}

}  // namespace gpufail::ensemble
