#include "gpufail/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace gpufail::eval {
namespace {

void check_aligned(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("scores and labels differ in length");
}

struct Counts {
  std::size_t selected = 0, tp = 0, positives = 0;
};

Counts count(std::span<const ScoredInstance> scores, std::span<const std::uint8_t> labels,
             const std::set<std::uint64_t>& selection) {
  check_aligned(scores.size(), labels.size());
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool in = selection.count(scores[i].id) != 0;
    c.selected += in;
    c.positives += labels[i] != 0;
    c.tp += in && labels[i] != 0;
  }
  return c;
}

std::set<std::uint64_t> top_set(std::span<const ScoredInstance> scores, double k) {
  const auto sel = ensemble::top_k(scores, k).selected;
  return {sel.begin(), sel.end()};
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::optional<double> precision_at_k(std::span<const ScoredInstance> scores,
                                     std::span<const std::uint8_t> labels, double k) {
  check_aligned(scores.size(), labels.size());
  return precision_in_set(scores, labels, top_set(scores, k));
}

std::optional<double> precision_in_set(std::span<const ScoredInstance> scores,
                                       std::span<const std::uint8_t> labels,
                                       const std::set<std::uint64_t>& positive_set) {
  const Counts c = count(scores, labels, positive_set);
  return ratio(c.tp, c.selected);
}

std::optional<double> recall_at_k(std::span<const ScoredInstance> scores,
                                  std::span<const std::uint8_t> labels, double k) {
  check_aligned(scores.size(), labels.size());
  return recall_in_set(scores, labels, top_set(scores, k));
}

std::optional<double> recall_in_set(std::span<const ScoredInstance> scores,
                                    std::span<const std::uint8_t> labels,
                                    const std::set<std::uint64_t>& positive_set) {
  const Counts c = count(scores, labels, positive_set);
  return ratio(c.tp, c.positives);
}

double accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                double threshold) {
  check_aligned(scores.size(), labels.size());
  if (scores.empty()) return 0.0;
  std::size_t right = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    right += (scores[i] > threshold) == (labels[i] != 0);
  }
  return static_cast<double>(right) / static_cast<double>(scores.size());
}

MetricReport evaluate(std::span<const ScoredInstance> scores, std::span<const std::uint8_t> labels,
                      double k, const std::set<std::uint64_t>* positive_set,
                      std::span<const double> combined, double threshold) {
  check_aligned(scores.size(), labels.size());
  MetricReport r;
  r.k = k;
  r.threshold = threshold;
  r.n = scores.size();
  const auto selection = positive_set ? *positive_set : top_set(scores, k);
  const Counts c = count(scores, labels, selection);
  r.positives = c.positives;
  r.selected = c.selected;
  r.tp = c.tp;
  r.fp = c.selected - c.tp;
  r.fn = c.positives - c.tp;
  r.tn = r.n - c.selected - r.fn;
  r.precision_at_k = ratio(c.tp, c.selected);
  r.recall_at_k = ratio(c.tp, c.positives);
  if (combined.empty()) {
    std::vector<double> s;
    s.reserve(scores.size());
    for (const auto& x : scores) s.push_back(x.score);
    r.accuracy = accuracy(s, labels, threshold);
  } else {
    r.accuracy = accuracy(combined, labels, threshold);
  }
  return r;
}

std::size_t balance_target(std::size_t positives, std::size_t negatives) {
  return static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(positives) * static_cast<double>(negatives))));
}

std::vector<std::size_t> balance_indices(std::span<const std::uint8_t> labels,
                                         const BalanceConfig& config) {
  if (!(config.positive_ratio > 0 && config.negative_ratio > 0)) {
    throw ConfigError("balance ratio components must be positive");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw std::invalid_argument("cannot balance a dataset with a single class");
  }
  const std::size_t t = balance_target(pos.size(), neg.size());
  std::size_t t_pos = t;
  auto t_neg = static_cast<std::size_t>(
      std::llround(static_cast<double>(t) * config.negative_ratio / config.positive_ratio));
  if (config.max_per_class) {
    t_pos = std::min(t_pos, *config.max_per_class);
    t_neg = std::min(t_neg, *config.max_per_class);
  }
  t_pos = std::max<std::size_t>(t_pos, 1);
  t_neg = std::max<std::size_t>(t_neg, 1);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> out;
  auto take = [&](std::vector<std::size_t> cls, std::size_t target) {
    if (target >= cls.size()) {
      out.insert(out.end(), cls.begin(), cls.end());
      std::uniform_int_distribution<std::size_t> pick(0, cls.size() - 1);
      for (std::size_t i = cls.size(); i < target; ++i) out.push_back(cls[pick(rng)]);
    } else {
      for (std::size_t i = 0; i < target; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, cls.size() - 1);
        std::swap(cls[i], cls[pick(rng)]);
        out.push_back(cls[i]);
      }
    }
  };
  take(std::move(pos), t_pos);
  take(std::move(neg), t_neg);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

dataset::Dataset balance(const dataset::Dataset& train, const BalanceConfig& config) {
  std::vector<std::uint8_t> labels;
  labels.reserve(train.instances.size());
  for (const auto& inst : train.instances) labels.push_back(inst.label);
  dataset::Dataset out;
  for (std::size_t i : balance_indices(labels, config)) out.instances.push_back(train.instances[i]);
  return out;
}

std::vector<Group> group_instances(std::span<const std::int64_t> end_timestamps,
                                   std::span<const TimeRange> windows) {
  std::vector<Group> out;
  if (windows.empty()) {
    std::map<std::int64_t, std::vector<std::size_t>> by_day;
    for (std::size_t i = 0; i < end_timestamps.size(); ++i) {
      by_day[day_of(end_timestamps[i])].push_back(i);
    }
    for (auto& [day, idx] : by_day) {
      out.push_back({format_date(static_cast<std::int32_t>(day)),
                     {day * kMinutesPerDay, (day + 1) * kMinutesPerDay},
                     std::move(idx)});
    }
    return out;
  }
  for (const auto& w : windows) {
    Group g;
    g.name = format_date(static_cast<std::int32_t>(day_of(w.begin))) + "_" +
             format_date(static_cast<std::int32_t>(day_of(w.end - 1)));
    g.range = w;
    for (std::size_t i = 0; i < end_timestamps.size(); ++i) {
      if (w.contains(end_timestamps[i])) g.indices.push_back(i);
    }
    out.push_back(std::move(g));
  }
  return out;
}

double population_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size());
}

void summarize_precision(WindowedMetrics& metrics) {
  std::vector<double> p;
  for (const auto& r : metrics.reports) {
    if (r.precision_at_k) p.push_back(*r.precision_at_k);
  }
  metrics.precision_variance = population_variance(p);
  metrics.mean_precision = p.empty() ? std::nullopt
                                     : std::optional<double>(std::accumulate(p.begin(), p.end(), 0.0) /
                                                             static_cast<double>(p.size()));
}

WindowedMetrics windowed_metrics(std::span<const ScoredInstance> scores,
                                 std::span<const std::uint8_t> labels,
                                 std::span<const std::int64_t> end_timestamps, double k,
                                 std::span<const TimeRange> windows) {
  check_aligned(scores.size(), labels.size());
  check_aligned(scores.size(), end_timestamps.size());
  WindowedMetrics out;
  for (const Group& g : group_instances(end_timestamps, windows)) {
    if (g.indices.empty()) {
      out.omitted.push_back(g.name);
      continue;
    }
    std::vector<ScoredInstance> s;
    std::vector<std::uint8_t> y;
    for (std::size_t i : g.indices) {
      s.push_back(scores[i]);
      y.push_back(labels[i]);
    }
    auto r = evaluate(s, y, k);
    r.window = g.name;
    out.reports.push_back(std::move(r));
  }
  summarize_precision(out);
  return out;
}

void write_metrics_header(std::ostream& out) {
  out << "window,model,n,positives,selected,k,threshold,tp,fp,fn,tn,precision_at_k,recall_at_k,"
         "accuracy\n";
}

void write_metrics_row(std::ostream& out, const MetricReport& r) {
  auto opt = [&](const std::optional<double>& v) {
    if (v) {
      out << *v;
    } else {
      out << "NA";
    }
  };
  out << r.window << ',' << r.model << ',' << r.n << ',' << r.positives << ',' << r.selected << ','
      << r.k << ',' << r.threshold << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ',';
  opt(r.precision_at_k);
  out << ',';
  opt(r.recall_at_k);
  out << ',' << r.accuracy << '\n';
}

}  // namespace gpufail::eval
