#include "gpufail/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace gpufail::harness {
namespace {

constexpr const char* kWeightedCnn = "1D-CNN-weighted";

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"GBDT", "MLP", "LSTM", "1D-CNN", "parallel",
                                                 "cascade"};
  return names;
}

// Model keys a method needs: base kinds by name plus the weighted stage-1
// network of the cascade.
std::vector<std::string> needed_keys(const std::vector<Method>& methods) {
  std::set<std::string> keys;
  for (const auto& m : methods) {
    switch (m.kind) {
      case MethodKind::Single: keys.insert(std::string(models::kind_name(m.model))); break;
      case MethodKind::Parallel: keys.insert({"1D-CNN", "MLP", "GBDT"}); break;
      case MethodKind::Cascade: keys.insert({kWeightedCnn, "MLP"}); break;
    }
  }
  return {keys.begin(), keys.end()};
}

std::vector<Method> resolve(const ExperimentConfig& exp) {
  std::vector<Method> out;
  for (const auto& name : exp.methods) out.push_back(method_from_name(name));
  return out;
}

std::string range_name(const TimeRange& r) {
  return format_date(static_cast<std::int32_t>(day_of(r.begin))) + "_" +
         format_date(static_cast<std::int32_t>(day_of(r.end - 1)));
}

std::int64_t earliest_timestamp(const dataset::InstancePool& pool) {
  std::int64_t t = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : pool.series()) {
    if (!s->records.empty()) t = std::min(t, s->records.front().timestamp());
  }
  if (t == std::numeric_limits<std::int64_t>::max()) throw ConfigError("the raw store is empty");
  return t;
}

struct TrainedSet {
  features::Encoder encoder;
  std::map<std::string, models::TrainedModel> models;
};

TrainedSet train_range(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                       const std::vector<std::string>& keys, const TimeRange& range,
                       const std::string& tag) {
  const auto data = pool.select(range, range.end);
  if (data.positives() == 0 || data.negatives() == 0) {
    throw std::runtime_error("training range " + range_name(range) + " (" + tag +
                             ") does not contain both classes");
  }
  TrainedSet set{features::fit_encoder(data, exp.n_bucket), {}};
  eval::BalanceConfig bc;
  bc.seed = derive_seed(exp.seed, "balance/" + tag);
  bc.max_per_class = exp.max_per_class;
  const auto encoded = features::encode_all(set.encoder, eval::balance(data, bc));
  for (const auto& key : keys) {
    const bool weighted = key == kWeightedCnn;
    const auto kind = weighted ? models::ModelKind::CNN1D : models::kind_from_name(key);
    auto spec = models::ModelSpec::defaults(kind, derive_seed(exp.seed, "model/" + key));
    if (const auto it = exp.hyperparameters.find(std::string(models::kind_name(kind)));
        it != exp.hyperparameters.end()) {
      for (const auto& [k, v] : it->second) spec.hyperparameters[k] = v;
    }
    if (weighted) {
      const auto w = models::class_weights(encoded, exp.cascade_positive_weight,
                                           exp.cascade_negative_weight);
      set.models.emplace(key, models::train(spec, encoded, &w));
    } else {
      set.models.emplace(key, models::train(spec, encoded));
    }
  }
  return set;
}

struct ScoredGroup {
  std::vector<std::uint8_t> labels;
  std::map<std::string, std::vector<models::ScoredInstance>> scores;
};

ScoredGroup score_group(const TrainedSet& set, const dataset::Dataset& test) {
  ScoredGroup g;
  for (const auto& inst : test.instances) g.labels.push_back(inst.label);
  const auto encoded = features::encode_all(set.encoder, test);
  for (const auto& [key, model] : set.models) g.scores.emplace(key, models::predict(model, encoded));
  return g;
}

eval::MetricReport evaluate_method(const Method& m, const ScoredGroup& g,
                                   const ExperimentConfig& exp) {
  eval::MetricReport r;
  switch (m.kind) {
    case MethodKind::Single:
      r = eval::evaluate(g.scores.at(std::string(models::kind_name(m.model))), g.labels, exp.k,
                         nullptr, {}, exp.threshold);
      break;
    case MethodKind::Parallel: {
      const std::vector<std::string> names = {"1D-CNN", "MLP", "GBDT"};
      std::vector<std::vector<models::ScoredInstance>> s;
      for (const auto& n : names) s.push_back(g.scores.at(n));
      const auto pred = ensemble::parallel_combine(names, s, exp.k);
      r = eval::evaluate(s.front(), g.labels, exp.k, &pred.positive_set, pred.combined_score,
                         exp.threshold);
      break;
    }
    case MethodKind::Cascade: {
      const auto& s1 = g.scores.at(kWeightedCnn);
      const auto pred = ensemble::cascade_combine(s1, g.scores.at("MLP"), exp.k1, exp.k2);
      r = eval::evaluate(s1, g.labels, exp.k2, &pred.positive_set, pred.combined_score,
                         exp.threshold);
      break;
    }
  }
  r.model = m.name;
  return r;
}

void note(const ExperimentConfig& exp, const std::string& message) {
  if (exp.log) exp.log(message);
}

void keep(RunResult& result, const ExperimentConfig& exp, const TrainedSet& set, int n, int l) {
  if (!exp.keep_models) return;
  for (const auto& [key, model] : set.models) result.models.push_back({n, l, key, model});
}

RunResult run_windows(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                      const SlidingConfig& config, const std::vector<int>& candidates,
                      bool log_candidates) {
  exp.validate();
  const auto methods = resolve(exp);
  const auto keys = needed_keys(methods);
  const std::int64_t first = earliest_timestamp(pool);

  std::map<int, std::vector<ScheduleEntry>> schedules;
  for (int l : candidates) {
    schedules[l] = make_schedule(config, l);
    const auto& s = schedules[l];
    if (!s.empty() && s.front().train_range.begin < first) {
      throw ConfigError("insufficient history: training range " + range_name(s.front().train_range) +
                        " starts before the first record");
    }
  }
  const std::size_t windows = schedules.begin()->second.size();

  RunResult result;
  std::map<std::string, std::map<int, std::optional<double>>> previous;
  for (std::size_t n = 0; n < windows; ++n) {
    const TimeRange test_window = schedules.begin()->second[n].test_window;
    note(exp, "window " + std::to_string(n) + " " + range_name(test_window));
    std::vector<std::optional<TrainedSet>> sets(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t c) {
      const int l = candidates[c];
      sets[c].emplace(train_range(pool, exp, keys, schedules.at(l)[n].train_range,
                                  "n" + std::to_string(n) + "/L" + std::to_string(l)));
    });
    const auto test = pool.select(test_window);
    if (test.instances.empty()) {
      note(exp, "window " + range_name(test_window) + " has no test instances; omitted");
      previous.clear();
      continue;
    }

    std::map<std::string, std::map<int, eval::MetricReport>> by_method;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const int l = candidates[c];
      keep(result, exp, *sets[c], static_cast<int>(n), l);
      const auto group = score_group(*sets[c], test);
      sets[c].reset();
      for (const auto& m : methods) {
        auto r = evaluate_method(m, group, exp);
        r.window = range_name(test_window);
        if (log_candidates) result.candidates.push_back({static_cast<int>(n), m.name, l, r.precision_at_k});
        by_method[m.name].emplace(l, std::move(r));
      }
    }
    for (const auto& m : methods) {
      auto& reports = by_method[m.name];
      const auto prev = previous.find(m.name);
      const int chosen = select_length(candidates, prev == previous.end() ? nullptr : &prev->second);
      ScheduleEntry entry = schedules[chosen][n];
      entry.chosen_l = chosen;
      result.reports.push_back({entry, m.name, reports.at(chosen)});
      auto& now = previous[m.name];
      now.clear();
      for (const auto& [l, r] : reports) now[l] = r.precision_at_k;
    }
  }
  return result;
}

}  // namespace

Method method_from_name(const std::string& name) {
  if (name == "parallel") return {name, MethodKind::Parallel, models::ModelKind::CNN1D};
  if (name == "cascade") return {name, MethodKind::Cascade, models::ModelKind::CNN1D};
  try {
    const auto kind = models::kind_from_name(name);
    return {std::string(models::kind_name(kind)), MethodKind::Single, kind};
  } catch (const ConfigError&) {
    std::string valid;
    for (const auto& n : method_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown method '" + name + "' (expected one of " + valid + ")");
  }
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (const auto& m : methods) (void)method_from_name(m);
  if (!(k > 0 && k <= 1)) throw ConfigError("k must lie in (0, 1]");
  if (!(k1 > 0 && k1 <= 1) || !(k2 > 0 && k2 <= 1)) throw ConfigError("k1 and k2 must lie in (0, 1]");
  if (k2 > k1) throw ConfigError("cascade k2 must not exceed k1");
  if (!(cascade_positive_weight > 0 && cascade_negative_weight > 0)) {
    throw ConfigError("cascade weights must be positive");
  }
  if (n_bucket < 1) throw ConfigError("n_bucket must be positive");
  if (max_per_class && *max_per_class < 1) throw ConfigError("max_per_class must be positive");
  for (const auto& [kind, hp] : hyperparameters) {
    models::ModelSpec spec{models::kind_from_name(kind), hp, 1};
    spec.validate();
  }
}

void SlidingConfig::validate(bool variable_length) const {
  if (t_retrain < 1) throw ConfigError("t_retrain must be at least 1 day");
  if (l_train < 1) throw ConfigError("l_train must be at least 1 day");
  if (horizon.empty()) throw ConfigError("horizon must not be empty");
  if (horizon.begin % kMinutesPerDay != 0 || horizon.end % kMinutesPerDay != 0) {
    throw ConfigError("horizon must start and end at midnight");
  }
  const std::int64_t days = (horizon.end - horizon.begin) / kMinutesPerDay;
  if (days % t_retrain != 0) {
    throw ConfigError("horizon of " + std::to_string(days) + " days is not a multiple of t_retrain=" +
                      std::to_string(t_retrain));
  }
  if (variable_length) {
    if (l_candidates.size() < 2) throw ConfigError("variable-length runs need at least two l_candidates");
    for (int l : l_candidates) {
      if (l < 1) throw ConfigError("l_candidates must be at least 1 day");
    }
  }
}

std::vector<ScheduleEntry> make_schedule(const SlidingConfig& config, int l_train) {
  config.validate(false);
  if (l_train < 1) throw ConfigError("l_train must be at least 1 day");
  std::vector<ScheduleEntry> out;
  const std::int64_t step = static_cast<std::int64_t>(config.t_retrain) * kMinutesPerDay;
  int n = 0;
  for (std::int64_t t = config.horizon.begin; t < config.horizon.end; t += step, ++n) {
    ScheduleEntry e;
    e.n = n;
    e.test_window = {t, t + step};
    e.train_range = {t - static_cast<std::int64_t>(l_train) * kMinutesPerDay, t};
    e.chosen_l = l_train;
    out.push_back(e);
  }
  return out;
}

int select_length(std::span<const int> candidates,
                  const std::map<int, std::optional<double>>* previous) {
  if (candidates.empty()) throw std::invalid_argument("no candidate lengths");
  int best = *std::max_element(candidates.begin(), candidates.end());
  if (!previous) return best;
  std::optional<double> best_p;
  bool first = true;
  for (int l : candidates) {
    const auto it = previous->find(l);
    const std::optional<double> p = it == previous->end() ? std::nullopt : it->second;
    const auto rank = [](const std::optional<double>& v) { return v ? *v : -1.0; };
    if (first || rank(p) > rank(best_p) || (rank(p) == rank(best_p) && l > best)) {
      best = l;
      best_p = p;
      first = false;
    }
  }
  return best;
}

RunResult run_static(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                     const TimeRange& train, const TimeRange& horizon,
                     std::span<const TimeRange> windows) {
  exp.validate();
  if (train.empty() || horizon.empty()) throw ConfigError("empty training range or horizon");
  if (train.overlaps(horizon) || horizon.end <= train.begin) {
    throw ConfigError("training range " + range_name(train) + " must precede the horizon " +
                      range_name(horizon));
  }
  std::vector<TimeRange> groups(windows.begin(), windows.end());
  if (groups.empty()) {
    for (std::int64_t t = horizon.begin; t < horizon.end; t += kMinutesPerDay) {
      groups.push_back({t, std::min(t + kMinutesPerDay, horizon.end)});
    }
  }
  const auto methods = resolve(exp);
  const auto set = train_range(pool, exp, needed_keys(methods), train, "static");
  const int train_days = static_cast<int>((train.end - train.begin) / kMinutesPerDay);

  RunResult result;
  keep(result, exp, set, 0, train_days);
  int n = 0;
  for (const auto& window : groups) {
    const auto test = pool.select(window);
    if (test.instances.empty()) {
      note(exp, "window " + range_name(window) + " has no test instances; omitted");
      continue;
    }
    const auto group = score_group(set, test);
    for (const auto& m : methods) {
      auto r = evaluate_method(m, group, exp);
      r.window = range_name(window);
      result.reports.push_back({{n, train, window, train_days}, m.name, std::move(r)});
    }
    ++n;
  }
  return result;
}

RunResult run_sliding(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                      const SlidingConfig& config) {
  config.validate(false);
  return run_windows(pool, exp, config, {config.l_train}, false);
}

RunResult run_variable_length(const dataset::InstancePool& pool, const ExperimentConfig& exp,
                              const SlidingConfig& config) {
  config.validate(true);
  return run_windows(pool, exp, config, config.l_candidates, true);
}

std::vector<eval::MetricReport> RunResult::metrics_of(const std::string& method) const {
  std::vector<eval::MetricReport> out;
  for (const auto& r : reports) {
    if (r.method == method) out.push_back(r.metrics);
  }
  return out;
}

eval::WindowedMetrics RunResult::summary(const std::string& method) const {
  eval::WindowedMetrics m;
  m.reports = metrics_of(method);
  eval::summarize_precision(m);
  return m;
}

void write_run(const std::string& dir, const RunResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };

  std::vector<std::string> methods;
  for (const auto& r : result.reports) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  {
    auto out = open(fs::path(dir) / "summary.csv");
    out << "method,windows,mean_precision_at_k,precision_variance,mean_recall_at_k,mean_accuracy\n";
    for (const auto& m : methods) {
      const auto s = result.summary(m);
      double recall = 0, acc = 0;
      std::size_t nr = 0;
      for (const auto& r : s.reports) {
        if (r.recall_at_k) {
          recall += *r.recall_at_k;
          ++nr;
        }
        acc += r.accuracy;
      }
      out << m << ',' << s.reports.size() << ',';
      if (s.mean_precision) {
        out << *s.mean_precision;
      } else {
        out << "NA";
      }
      out << ',' << s.precision_variance << ',';
      if (nr) {
        out << recall / static_cast<double>(nr);
      } else {
        out << "NA";
      }
      out << ',' << (s.reports.empty() ? 0.0 : acc / static_cast<double>(s.reports.size())) << '\n';
    }
  }
  {
    auto out = open(fs::path(dir) / "plot.csv");
    out << "window,model,metric,value\n";
    for (const auto& r : result.reports) {
      const auto& m = r.metrics;
      if (m.precision_at_k) out << m.window << ',' << r.method << ",precision_at_k," << *m.precision_at_k << '\n';
      if (m.recall_at_k) out << m.window << ',' << r.method << ",recall_at_k," << *m.recall_at_k << '\n';
      out << m.window << ',' << r.method << ",accuracy," << m.accuracy << '\n';
    }
  }
  std::map<int, std::vector<const WindowReport*>> by_window;
  for (const auto& r : result.reports) by_window[r.entry.n].push_back(&r);
  for (const auto& [n, reports] : by_window) {
    const fs::path wdir = fs::path(dir) / "windows" / std::to_string(n);
    fs::create_directories(wdir);
    auto out = open(wdir / "metrics.csv");
    out << "train_begin,train_end,chosen_l,";
    eval::write_metrics_header(out);
    for (const auto* r : reports) {
      out << r->entry.train_range.begin << ',' << r->entry.train_range.end << ',' << r->entry.chosen_l << ',';
      eval::write_metrics_row(out, r->metrics);
    }
  }
  for (const auto& m : result.models) {
    const fs::path wdir = fs::path(dir) / "windows" / std::to_string(m.n);
    fs::create_directories(wdir);
    auto out = open(wdir / (m.key + "_L" + std::to_string(m.l_train) + ".model.json"));
    m.model.save(out);
    auto loss = open(wdir / (m.key + "_L" + std::to_string(m.l_train) + ".loss.csv"));
    models::write_loss_csv(loss, m.model);
  }
  if (!result.candidates.empty()) {
    auto out = open(fs::path(dir) / "candidates.csv");
    out << "n,method,l_train,precision_at_k\n";
    for (const auto& c : result.candidates) {
      out << c.n << ',' << c.method << ',' << c.l_train << ',';
      if (c.precision) {
        out << *c.precision;
      } else {
        out << "NA";
      }
      out << '\n';
    }
  }
}

}  // namespace gpufail::harness
