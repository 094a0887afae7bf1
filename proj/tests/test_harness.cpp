#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "gpufail/collection.hpp"
#include "gpufail/harness.hpp"
#include "gpufail/scenarios.hpp"

using namespace gpufail;
using namespace gpufail::harness;

namespace {

constexpr std::int64_t kDay = kMinutesPerDay;

struct Fixture {
  telemetry::FleetConfig fleet;
  std::vector<collection::GpuRecord> records;
  std::int64_t start = 0;

  Fixture() {
    fleet.n_gpus = 60;
    fleet.horizon_days = 14;
    fleet.seed = 17;
    fleet.drift = telemetry::named_schedule("flip", fleet.horizon_days);
    records = collection::simulate_collection(telemetry::generate_fleet(fleet),
                                              collection::CollectingPolicy::all_attributes())
                  .records;
    start = telemetry::start_minutes(fleet);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

ExperimentConfig quick(std::vector<std::string> methods) {
  ExperimentConfig e;
  e.methods = std::move(methods);
  e.hyperparameters["GBDT"] = {{"trees", 15}, {"depth", 3}};
  e.hyperparameters["MLP"] = {{"epochs", 2}, {"hidden1", 16}, {"hidden2", 8}};
  e.hyperparameters["1D-CNN"] = {{"epochs", 1}, {"channels1", 4}, {"channels2", 4},
                                 {"channels3", 4}, {"channels4", 4}, {"fc_hidden", 8}};
  e.max_per_class = 400;
  e.seed = 3;
  return e;
}

}  // namespace

TEST_CASE("method names") {
  CHECK(method_from_name("1D-CNN").kind == MethodKind::Single);
  CHECK(method_from_name("GBDT").model == models::ModelKind::GBDT);
  CHECK(method_from_name("parallel").kind == MethodKind::Parallel);
  CHECK(method_from_name("cascade").kind == MethodKind::Cascade);
  try {
    method_from_name("forest");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cascade") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  ExperimentConfig e;
  CHECK_NOTHROW(e.validate());
  e.k2 = 0.1;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = {};
  e.methods.clear();
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = {};
  e.hyperparameters["MLP"] = {{"dropout", 0.5}};
  CHECK_THROWS_AS(e.validate(), ConfigError);

  SlidingConfig s;
  s.horizon = {10 * kDay, 20 * kDay};
  CHECK_THROWS_AS(s.validate(false), ConfigError);  // 10 days, T = 3
  s.t_retrain = 5;
  CHECK_NOTHROW(s.validate(false));
  s.horizon.begin += 60;
  CHECK_THROWS_AS(s.validate(false), ConfigError);
  s.horizon.begin -= 60;
  s.l_candidates = {15};
  CHECK_THROWS_AS(s.validate(true), ConfigError);
}

TEST_CASE("schedule tiles the horizon") {
  SlidingConfig s;
  s.t_retrain = 3;
  s.horizon = {30 * kDay, 45 * kDay};
  const auto sched = make_schedule(s, 15);
  REQUIRE(sched.size() == 5);
  for (std::size_t n = 0; n < sched.size(); ++n) {
    const auto& e = sched[n];
    CHECK(e.n == static_cast<int>(n));
    CHECK(e.test_window.begin == (30 + 3 * static_cast<std::int64_t>(n)) * kDay);
    CHECK(e.test_window.end == e.test_window.begin + 3 * kDay);
    CHECK(e.train_range.end == e.test_window.begin);
    CHECK(e.train_range.begin == e.test_window.begin - 15 * kDay);
  }
}

TEST_CASE("length selection") {
  const std::vector<int> c = {9, 12, 15};
  CHECK(select_length(c, nullptr) == 15);
  std::map<int, std::optional<double>> prev = {{9, 0.881}, {12, 0.80}, {15, 0.77}};
  CHECK(select_length(c, &prev) == 9);
  prev = {{9, 0.5}, {12, 0.7}, {15, 0.6}};
  CHECK(select_length(c, &prev) == 12);
  prev = {{9, 0.7}, {12, 0.7}, {15, 0.6}};
  CHECK(select_length(c, &prev) == 12);  // tie goes to the longer
  prev = {{9, std::nullopt}, {12, std::nullopt}, {15, std::nullopt}};
  CHECK(select_length(c, &prev) == 15);
  prev = {{9, 0.0}, {12, std::nullopt}, {15, std::nullopt}};
  CHECK(select_length(c, &prev) == 9);
}

TEST_CASE("static run evaluates each day after training") {
  const auto& f = fixture();
  const dataset::InstancePool pool(f.records, {});
  const auto exp = quick({"GBDT"});
  const TimeRange train{f.start, f.start + 5 * kDay};
  const TimeRange horizon{f.start + 5 * kDay, f.start + 9 * kDay};
  const auto r = run_static(pool, exp, train, horizon);
  REQUIRE(r.reports.size() == 4);
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto& rep = r.reports[i];
    CHECK(rep.entry.test_window.begin == horizon.begin + static_cast<std::int64_t>(i) * kDay);
    CHECK(rep.metrics.n == pool.select(rep.entry.test_window).size());
    CHECK(rep.metrics.selected == ensemble::cutoff_count(rep.metrics.n, 0.02));
  }
  CHECK(run_static(pool, exp, train, horizon).reports.front().metrics.tp == r.reports.front().metrics.tp);
  CHECK_THROWS_AS(run_static(pool, exp, horizon, train), ConfigError);
  CHECK_THROWS_AS(run_static(pool, exp, {f.start, f.start + 6 * kDay}, horizon), ConfigError);
}

TEST_CASE("sliding run and ensembles") {
  const auto& f = fixture();
  const dataset::InstancePool pool(f.records, {});
  auto exp = quick({"GBDT", "MLP", "1D-CNN", "parallel", "cascade"});
  exp.keep_models = true;
  SlidingConfig s;
  s.t_retrain = 2;
  s.l_train = 4;
  s.horizon = {f.start + 6 * kDay, f.start + 10 * kDay};
  const auto r = run_sliding(pool, exp, s);
  CHECK(r.reports.size() == 2 * 5);
  CHECK(r.candidates.empty());
  for (const auto& rep : r.reports) {
    CHECK(rep.entry.train_range.end == rep.entry.test_window.begin);
    CHECK(rep.entry.chosen_l == 4);
    if (rep.method == "parallel") CHECK(rep.metrics.selected <= ensemble::cutoff_count(rep.metrics.n, 0.02));
    if (rep.method == "cascade") CHECK(rep.metrics.selected == ensemble::cutoff_count(rep.metrics.n, 0.02));
  }
  // GBDT, MLP, 1D-CNN and the weighted stage-1 network, per window.
  CHECK(r.models.size() == 2 * 4);
  CHECK(r.summary("GBDT").reports.size() == 2);

  const auto dir = (std::filesystem::temp_directory_path() / "gpufail_test_run").string();
  std::filesystem::remove_all(dir);
  write_run(dir, r);
  CHECK(std::filesystem::exists(dir + "/summary.csv"));
  CHECK(std::filesystem::exists(dir + "/plot.csv"));
  CHECK(std::filesystem::exists(dir + "/windows/1/metrics.csv"));
  CHECK(std::filesystem::exists(dir + "/windows/0/1D-CNN-weighted_L4.model.json"));
  std::ifstream summary(dir + "/summary.csv");
  std::string line;
  int lines = 0;
  while (std::getline(summary, line)) ++lines;
  CHECK(lines == 6);
  std::filesystem::remove_all(dir);

  s.l_train = 9;  // starts before the first record
  CHECK_THROWS_AS(run_sliding(pool, exp, s), ConfigError);
}

TEST_CASE("variable-length audit") {
  const auto& f = fixture();
  const dataset::InstancePool pool(f.records, {});
  const auto exp = quick({"GBDT"});
  SlidingConfig s;
  s.t_retrain = 2;
  s.l_candidates = {2, 3, 4};
  s.horizon = {f.start + 6 * kDay, f.start + 12 * kDay};
  const auto r = run_variable_length(pool, exp, s);
  REQUIRE(r.reports.size() == 3);
  CHECK(r.candidates.size() == 9);

  std::map<int, std::map<int, std::optional<double>>> logged;
  for (const auto& c : r.candidates) logged[c.n][c.l_train] = c.precision;
  for (const auto& rep : r.reports) {
    const int n = rep.entry.n;
    const int expected = n == 0 ? 4 : select_length(s.l_candidates, &logged.at(n - 1));
    CHECK(rep.entry.chosen_l == expected);
    CHECK(rep.metrics.precision_at_k == logged.at(n).at(expected));
    CHECK(rep.entry.train_range.begin == rep.entry.test_window.begin - expected * kDay);
  }
}
