#include "gpufail/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gpufail/scenarios.hpp"

namespace gpufail::config {

using nlohmann::json;

namespace {

// Collects schema errors instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& message) {
    errors.push_back(path + ": " + message);
  }

  void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : obj.items()) {
      bool known = false;
      for (const char* a : keys) known = known || k == a;
      if (!known) fail(path + "." + k, "unknown key");
    }
  }

  const json* object(const json& parent, const char* key, const std::string& path) {
    if (!parent.contains(key)) return nullptr;
    const json& v = parent.at(key);
    if (!v.is_object()) {
      fail(path + "." + key, "expected an object");
      return nullptr;
    }
    return &v;
  }

  template <class T>
  void get(const json& obj, const char* key, T& out, const std::string& path) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned()) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      fail(path + "." + key, e.what());
    }
  }

  std::optional<TimeRange> date_range(const json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_string() || !v[1].is_string()) {
      fail(path + "." + key, "expected [\"YYYY-MM-DD\", \"YYYY-MM-DD\"]");
      return std::nullopt;
    }
    try {
      const TimeRange r{parse_date(v[0].get<std::string>()) * kMinutesPerDay,
                        parse_date(v[1].get<std::string>()) * kMinutesPerDay};
      if (r.empty()) {
        fail(path + "." + key, "end date must follow the begin date");
        return std::nullopt;
      }
      return r;
    } catch (const std::exception& e) {
      fail(path + "." + key, e.what());
      return std::nullopt;
    }
  }

  template <class Fn>
  void check(const std::string& path, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      fail(path, e.what());
    }
  }
};

json range_json(const TimeRange& r) {
  return json::array({format_date(static_cast<std::int32_t>(day_of(r.begin))),
                      format_date(static_cast<std::int32_t>(day_of(r.end)))});
}

}  // namespace

std::string_view mode_name(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Static: return "static";
    case ExperimentMode::Sliding: return "sliding";
    case ExperimentMode::VariableLength: return "variable_length";
  }
  return "?";
}

telemetry::DriftSchedule DriftSpec::build(int horizon_days) const {
  const double mid = horizon_days / 2.0;
  if (preset == "stationary") return telemetry::stationary_schedule();
  if (preset == "flip") return telemetry::flip_schedule(day >= 0 ? day : mid);
  if (preset == "crossover") {
    return telemetry::crossover_schedule(begin_day >= 0 ? begin_day : mid - 10.0,
                                         end_day >= 0 ? end_day : mid + 10.0);
  }
  if (preset == "alternating") {
    return telemetry::alternating_schedule(first_flip_day >= 0 ? first_flip_day : mid - 10.0,
                                           period_days, horizon_days);
  }
  throw ConfigError("unknown drift preset '" + preset +
                    "' (valid: stationary, flip, crossover, alternating)");
}

void RunConfig::apply_seed(std::uint64_t root) {
  seed = root;
  fleet.seed = derive_seed(root, "telemetry");
  experiment.seed = derive_seed(root, "harness");
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  // A run manifest embeds the configuration it ran with.
  if (j.is_object() && j.contains("config") && j.contains("command")) j = j.at("config");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  Reader r;
  r.allow(j, "config", {"seed", "fleet", "collection", "windowing", "splits", "experiment"});
  std::uint64_t seed = 1;
  r.get(j, "seed", seed, "config");

  if (const json* f = r.object(j, "fleet", "config")) {
    const std::string p = "config.fleet";
    r.allow(*f, p, {"n_gpus", "horizon_days", "start_date", "datacenters", "drift", "repair_delay_hours"});
    r.get(*f, "n_gpus", c.fleet.n_gpus, p);
    r.get(*f, "horizon_days", c.fleet.horizon_days, p);
    r.get(*f, "datacenters", c.fleet.datacenters, p);
    if (f->contains("start_date")) {
      std::string d;
      r.get(*f, "start_date", d, p);
      r.check(p + ".start_date", [&] { c.fleet.start_day = parse_date(d); });
    }
    if (f->contains("repair_delay_hours")) {
      const json& v = f->at("repair_delay_hours");
      if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        c.fleet.repair_delay = {v[0].get<double>(), v[1].get<double>()};
      } else {
        r.fail(p + ".repair_delay_hours", "expected [min_hours, max_hours]");
      }
    }
    if (f->contains("drift")) {
      const json& d = f->at("drift");
      const std::string dp = p + ".drift";
      if (d.is_string()) {
        c.drift.preset = d.get<std::string>();
      } else if (d.is_object()) {
        r.allow(d, dp, {"preset", "day", "begin_day", "end_day", "first_flip_day", "period_days"});
        r.get(d, "preset", c.drift.preset, dp);
        r.get(d, "day", c.drift.day, dp);
        r.get(d, "begin_day", c.drift.begin_day, dp);
        r.get(d, "end_day", c.drift.end_day, dp);
        r.get(d, "first_flip_day", c.drift.first_flip_day, dp);
        r.get(d, "period_days", c.drift.period_days, dp);
      } else {
        r.fail(dp, "expected a preset name or an object");
      }
    }
  }
  r.check("config.fleet", [&] {
    c.fleet.drift = c.drift.build(c.fleet.horizon_days);
    c.fleet.validate();
  });

  if (const json* col = r.object(j, "collection", "config")) {
    const std::string p = "config.collection";
    r.allow(*col, p, {"attributes", "period_minutes"});
    if (col->contains("attributes")) {
      const json& a = col->at("attributes");
      if (a.is_array() && std::all_of(a.begin(), a.end(), [](const json& x) { return x.is_string(); })) {
        c.policy.attributes_to_collect.clear();
        for (const auto& x : a) c.policy.attributes_to_collect.insert(x.get<std::string>());
      } else {
        r.fail(p + ".attributes", "expected an array of attribute names");
      }
    }
    r.get(*col, "period_minutes", c.policy.period_minutes, p);
    r.check(p, [&] { c.policy.validate(); });
  }

  if (const json* w = r.object(j, "windowing", "config")) {
    const std::string p = "config.windowing";
    r.allow(*w, p, {"l", "p", "slide_step", "mode"});
    r.get(*w, "l", c.windowing.l, p);
    r.get(*w, "p", c.windowing.p, p);
    r.get(*w, "slide_step", c.windowing.slide_step, p);
    std::string mode = "sliding";
    r.get(*w, "mode", mode, p);
    if (mode == "segmented") {
      c.windowing_mode = dataset::Windowing::Segmented;
    } else if (mode != "sliding") {
      r.fail(p + ".mode", "expected \"sliding\" or \"segmented\"");
    }
    r.check(p, [&] { c.windowing.validate(); });
  }

  if (j.contains("splits")) {
    const json& s = j.at("splits");
    if (!s.is_object()) {
      r.fail("config.splits", "expected an object of name -> [begin, end]");
    } else {
      for (const auto& [name, v] : s.items()) {
        if (auto range = r.date_range(s, name.c_str(), "config.splits")) c.splits.push_back({name, *range});
      }
      for (std::size_t a = 0; a < c.splits.size(); ++a) {
        for (std::size_t b = a + 1; b < c.splits.size(); ++b) {
          if (c.splits[a].range.overlaps(c.splits[b].range)) {
            r.fail("config.splits", "splits '" + c.splits[a].name + "' and '" + c.splits[b].name + "' overlap");
          }
        }
      }
    }
  }

  if (const json* e = r.object(j, "experiment", "config")) {
    const std::string p = "config.experiment";
    auto& x = c.experiment;
    c.has_experiment = true;
    r.allow(*e, p, {"mode", "methods", "k", "threshold", "k1", "k2", "cascade_weights", "n_bucket",
                    "max_per_class", "hyperparameters", "train_range", "horizon", "static_windows",
                    "t_retrain", "l_train", "l_candidates", "keep_models"});
    std::string mode = "sliding";
    r.get(*e, "mode", mode, p);
    if (mode == "static") {
      c.mode = ExperimentMode::Static;
    } else if (mode == "variable_length") {
      c.mode = ExperimentMode::VariableLength;
    } else if (mode != "sliding") {
      r.fail(p + ".mode", "expected static, sliding or variable_length");
    }
    if (e->contains("methods")) {
      const json& m = e->at("methods");
      if (m.is_array() && std::all_of(m.begin(), m.end(), [](const json& v) { return v.is_string(); })) {
        x.methods.clear();
        for (const auto& v : m) {
          const auto name = v.get<std::string>();
          r.check(p + ".methods", [&] { x.methods.push_back(harness::method_from_name(name).name); });
        }
      } else {
        r.fail(p + ".methods", "expected an array of method names");
      }
    }
    r.get(*e, "k", x.k, p);
    r.get(*e, "threshold", x.threshold, p);
    r.get(*e, "k1", x.k1, p);
    r.get(*e, "k2", x.k2, p);
    if (e->contains("cascade_weights")) {
      const json& v = e->at("cascade_weights");
      if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        x.cascade_positive_weight = v[0].get<double>();
        x.cascade_negative_weight = v[1].get<double>();
      } else {
        r.fail(p + ".cascade_weights", "expected [positive_weight, negative_weight]");
      }
    }
    r.get(*e, "n_bucket", x.n_bucket, p);
    if (e->contains("max_per_class")) {
      std::size_t cap = 0;
      r.get(*e, "max_per_class", cap, p);
      if (cap > 0) x.max_per_class = cap;
    }
    if (const json* h = r.object(*e, "hyperparameters", p)) {
      for (const auto& [kind, values] : h->items()) {
        const std::string hp = p + ".hyperparameters." + kind;
        if (!values.is_object()) {
          r.fail(hp, "expected an object of name -> number");
          continue;
        }
        std::map<std::string, double> m;
        for (const auto& [name, v] : values.items()) {
          if (v.is_number()) {
            m[name] = v.get<double>();
          } else {
            r.fail(hp + "." + name, "expected a number");
          }
        }
        r.check(hp, [&] {
          models::ModelSpec spec{models::kind_from_name(kind), m, 1};
          spec.validate();
          x.hyperparameters[std::string(models::kind_name(spec.kind))] = m;
        });
      }
    }
    r.get(*e, "keep_models", x.keep_models, p);
    r.get(*e, "static_windows", c.static_windows, p);
    r.get(*e, "t_retrain", c.sliding.t_retrain, p);
    r.get(*e, "l_train", c.sliding.l_train, p);
    if (e->contains("l_candidates")) {
      const json& v = e->at("l_candidates");
      if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& a) { return a.is_number_integer(); })) {
        c.sliding.l_candidates = v.get<std::vector<int>>();
      } else {
        r.fail(p + ".l_candidates", "expected an array of integers (days)");
      }
    }
    if (auto h = r.date_range(*e, "horizon", p)) {
      c.sliding.horizon = *h;
    } else if (!e->contains("horizon")) {
      r.fail(p + ".horizon", "required");
    }
    if (auto t = r.date_range(*e, "train_range", p)) {
      c.static_train = *t;
    } else if (c.mode == ExperimentMode::Static && !e->contains("train_range")) {
      r.fail(p + ".train_range", "required for static runs");
    }
    r.check(p, [&] {
      auto probe = x;
      probe.methods = x.methods.empty() ? std::vector<std::string>{"1D-CNN"} : x.methods;
      probe.validate();
    });
    if (!c.sliding.horizon.empty()) {
      r.check(p, [&] {
        if (c.mode == ExperimentMode::Static) {
          if (c.static_train.overlaps(c.sliding.horizon)) {
            throw ConfigError("train_range overlaps the horizon");
          }
          if (c.static_windows) c.sliding.validate(false);
        } else {
          c.sliding.validate(c.mode == ExperimentMode::VariableLength);
        }
      });
    }
  }

  if (!r.errors.empty()) {
    std::string all = std::to_string(r.errors.size()) + " configuration error(s):";
    for (const auto& e : r.errors) all += "\n  " + e;
    throw ConfigError(all);
  }
  c.apply_seed(seed);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string snapshot(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  json drift = {{"preset", c.drift.preset}};
  if (c.drift.day >= 0) drift["day"] = c.drift.day;
  if (c.drift.begin_day >= 0) drift["begin_day"] = c.drift.begin_day;
  if (c.drift.end_day >= 0) drift["end_day"] = c.drift.end_day;
  if (c.drift.first_flip_day >= 0) drift["first_flip_day"] = c.drift.first_flip_day;
  drift["period_days"] = c.drift.period_days;
  j["fleet"] = {{"n_gpus", c.fleet.n_gpus},
                {"horizon_days", c.fleet.horizon_days},
                {"start_date", format_date(c.fleet.start_day)},
                {"datacenters", c.fleet.datacenters},
                {"drift", drift},
                {"repair_delay_hours", {c.fleet.repair_delay.min_hours, c.fleet.repair_delay.max_hours}}};
  j["collection"] = {{"attributes", c.policy.attributes_to_collect},
                     {"period_minutes", c.policy.period_minutes}};
  j["windowing"] = {{"l", c.windowing.l},
                    {"p", c.windowing.p},
                    {"slide_step", c.windowing.slide_step},
                    {"mode", c.windowing_mode == dataset::Windowing::Sliding ? "sliding" : "segmented"}};
  if (!c.splits.empty()) {
    json s = json::object();
    for (const auto& sp : c.splits) s[sp.name] = range_json(sp.range);
    j["splits"] = s;
  }
  if (!c.has_experiment) return j.dump(2);
  const auto& x = c.experiment;
  json e = {{"mode", mode_name(c.mode)},
            {"methods", x.methods},
            {"k", x.k},
            {"threshold", x.threshold},
            {"k1", x.k1},
            {"k2", x.k2},
            {"cascade_weights", {x.cascade_positive_weight, x.cascade_negative_weight}},
            {"n_bucket", x.n_bucket},
            {"max_per_class", x.max_per_class.value_or(0)},
            {"hyperparameters", x.hyperparameters},
            {"static_windows", c.static_windows},
            {"t_retrain", c.sliding.t_retrain},
            {"l_train", c.sliding.l_train},
            {"l_candidates", c.sliding.l_candidates},
            {"keep_models", x.keep_models}};
  if (!c.sliding.horizon.empty()) e["horizon"] = range_json(c.sliding.horizon);
  if (!c.static_train.empty()) e["train_range"] = range_json(c.static_train);
  j["experiment"] = e;
  return j.dump(2);
}

}  // namespace gpufail::config
