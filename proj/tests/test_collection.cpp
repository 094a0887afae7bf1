#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gpufail/collection.hpp"
#include "gpufail/scenarios.hpp"

using namespace gpufail;
using namespace gpufail::collection;

namespace {

telemetry::Fleet fleet(int gpus, int days, std::uint64_t seed = 4) {
  telemetry::FleetConfig c;
  c.n_gpus = gpus;
  c.horizon_days = days;
  c.seed = seed;
  c.drift = telemetry::stationary_schedule();
  return telemetry::generate_fleet(c);
}

telemetry::GpuStream scripted(const std::string& serial, std::vector<int> statuses) {
  telemetry::GpuStream s{serial, {}};
  for (std::size_t i = 0; i < statuses.size(); ++i) {
    telemetry::TelemetryRecord r;
    r.timestamp = static_cast<std::int64_t>(i) * 10;
    r.temperature = 40;
    r.failure_status = statuses[i] != 0;
    s.records.push_back(r);
  }
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("gpufail_test_" + name)).string();
}

}  // namespace

TEST_CASE("policy validation") {
  auto p = CollectingPolicy::all_attributes();
  CHECK_NOTHROW(p.validate());
  p.attributes_to_collect.insert("fan_speed");
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = CollectingPolicy::all_attributes(7);
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = CollectingPolicy::all_attributes(70);  // does not divide a day
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.attributes_to_collect.clear();
  p.period_minutes = 10;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  auto f = fleet(8, 1);
  std::vector<Agent> agents;
  agents.emplace_back("a", std::vector<const telemetry::GpuStream*>{&f.streams[0]});
  auto bad = CollectingPolicy::all_attributes();
  bad.attributes_to_collect.insert("voltage");
  CHECK_THROWS_AS(Controller{}.broadcast(bad, agents), ConfigError);
}

TEST_CASE("full policy at 10 minutes yields full records every tick") {
  const auto f = fleet(16, 1);
  const auto res = simulate_collection(f, CollectingPolicy::all_attributes());
  CHECK(res.records.size() == 16 * 144);
  for (const auto& r : res.records) {
    for (std::size_t a = 0; a < kAttributeNames.size(); ++a) CHECK(r.values.has(static_cast<Attribute>(a)));
  }
  for (const auto& ack : res.acknowledgements) CHECK(ack.accepted);
  CHECK(res.acknowledgements.size() == 2);
}

TEST_CASE("omitted attributes are absent and a 30 minute period gives 48 per day") {
  const auto f = fleet(8, 2);
  auto p = CollectingPolicy::all_attributes(30);
  p.attributes_to_collect.erase("sm_util");
  const auto res = simulate_collection(f, p);
  CHECK(res.records.size() == 8 * 48 * 2);
  for (const auto& r : res.records) {
    CHECK_FALSE(r.values.sm_util().has_value());
    CHECK(r.values.temperature().has_value());
    CHECK(r.timestamp() % 30 == 0);
  }
}

TEST_CASE("agent reports on the 0 to 1 edge only") {
  std::vector<telemetry::GpuStream> streams;
  for (int g = 0; g < 8; ++g) {
    streams.push_back(scripted("G" + std::to_string(g), g == 3 ? std::vector<int>{0, 1, 1, 1, 0}
                                                                 : std::vector<int>{0, 0, 0, 0, 0}));
  }
  std::vector<const telemetry::GpuStream*> ptrs;
  for (auto& s : streams) ptrs.push_back(&s);
  Agent agent("m0", ptrs);

  auto t0 = agent.tick(0);
  CHECK(t0.records.size() == 8);
  CHECK(t0.reports.empty());
  auto t1 = agent.tick(1);
  CHECK(t1.records.size() == 8);
  REQUIRE(t1.reports.size() == 1);
  CHECK(t1.reports[0].serial == "G3");
  CHECK(t1.reports[0].timestamp == 10);
  for (std::size_t t = 2; t < 5; ++t) {
    auto out = agent.tick(t);
    CHECK(out.reports.empty());
    if (t < 4) CHECK(*out.records[3].values.failure_status());
  }

  std::vector<const telemetry::GpuStream*> nine(9, &streams[0]);
  CHECK_THROWS_AS(Agent("big", nine), ConfigError);
}

TEST_CASE("report count equals 0 to 1 transitions") {
  const auto f = fleet(48, 20, 9);
  const auto res = simulate_collection(f, CollectingPolicy::all_attributes());
  std::size_t transitions = 0;
  for (const auto& s : f.streams) {
    bool prev = false;
    for (const auto& r : s.records) {
      transitions += r.failure_status && !prev;
      prev = r.failure_status;
    }
  }
  CHECK(transitions == f.failures.size());
  CHECK(res.reports.size() == transitions);
}

TEST_CASE("join") {
  const auto f = fleet(3, 1);
  std::vector<CollectedRecord> one{{f.inventory[0].serial, DynamicValues::from(f.streams[0].records[0])}};
  const auto joined = join_records(one, f.inventory);
  REQUIRE(joined.size() == 1);
  CHECK(joined[0].serial() == f.inventory[0].serial);
  CHECK(joined[0].config->rack == f.inventory[0].datacenter);
  CHECK(joined[0].config->gpu_type == f.inventory[0].gpu_type);

  std::vector<CollectedRecord> unknown{{"nope", {}}};
  try {
    join_records(unknown, f.inventory);
    FAIL("expected a join error");
  } catch (const JoinError& e) {
    CHECK(e.serial() == "nope");
  }
}

TEST_CASE("shuffled join keeps per-GPU order, collector is order independent") {
  const auto f = fleet(3, 1);
  std::vector<CollectedRecord> input;
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t t = 0; t < 4; ++t) {
      input.push_back({f.streams[g].serial, DynamicValues::from(f.streams[g].records[t])});
    }
  }
  std::mt19937_64 rng(3);
  std::shuffle(input.begin(), input.end(), rng);
  const auto joined = join_records(input, f.inventory);
  CHECK(joined.size() == 12);
  for (std::size_t i = 0; i < input.size(); ++i) {
    CHECK(joined[i].serial() == input[i].serial);
    CHECK(joined[i].values == input[i].values);
  }

  // Brute-force re-sort against the collector's canonical order, with a
  // duplicate delivery that must be dropped.
  Collector a(f.inventory), b(f.inventory);
  for (const auto& r : input) a.receive(r);
  a.receive(input.front());
  for (auto it = input.rbegin(); it != input.rend(); ++it) b.receive(*it);
  auto expected = input;
  std::stable_sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) {
    return std::tie(x.serial, x.values.timestamp) < std::tie(y.serial, y.values.timestamp);
  });
  const auto ra = a.records();
  REQUIRE(ra.size() == expected.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].serial() == expected[i].serial);
    CHECK(ra[i].values == expected[i].values);
  }
  CHECK(ra == b.records());
}

TEST_CASE("raw file round trip") {
  const auto path = temp_path("raw.csv");
  write_raw(path, {});
  {
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == std::string(kRawHeader) + "\n");
  }
  CHECK(read_raw(path).empty());

  const auto f = fleet(8, 2, 13);
  auto policy = CollectingPolicy::all_attributes();
  policy.attributes_to_collect.erase("power");
  const auto res = simulate_collection(f, policy);
  write_raw(path, res.records);
  CHECK(read_raw(path) == res.records);

  // Append-only writes.
  const std::size_t half = res.records.size() / 2;
  std::filesystem::remove(path);
  RawStoreWriter w(path);
  w.append(std::span(res.records).first(half));
  w.append(std::span(res.records).subspan(half));
  CHECK(read_raw(path) == res.records);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt raw input reports the line") {
  const auto f = fleet(2, 1);
  const auto res = simulate_collection(f, CollectingPolicy::all_attributes());
  std::ostringstream out;
  out << kRawHeader << '\n';
  const auto path = temp_path("raw2.csv");
  write_raw(path, res.records);
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::filesystem::remove(path);

  const std::size_t lines = res.records.size() + 1;
  SUBCASE("truncated last line") {
    std::istringstream s(content.substr(0, content.size() - 5));
    try {
      read_raw(s);
      FAIL("expected parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == lines);
    }
  }
  SUBCASE("corrupted byte") {
    // Break the timestamp of the 5th data line (file line 6).
    std::size_t pos = 0;
    for (int i = 0; i < 5; ++i) pos = content.find('\n', pos) + 1;
    const auto comma = content.find(',', pos);
    std::string bad = content;
    bad[comma + 1] = 'x';
    std::istringstream s(bad);
    try {
      read_raw(s);
      FAIL("expected parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 6);
    }
  }
  SUBCASE("bad header") {
    std::istringstream s("serial,timestamp\n");
    CHECK_THROWS_AS(read_raw(s), ParseError);
  }
}

TEST_CASE("policy file round trip") {
  const auto path = temp_path("policy.json");
  auto p = CollectingPolicy::all_attributes(20);
  p.attributes_to_collect.erase("uptime");
  write_policy(path, p);
  const auto q = read_policy(path);
  CHECK(q.attributes_to_collect == p.attributes_to_collect);
  CHECK(q.period_minutes == 20);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_policy(path), ConfigError);
}
