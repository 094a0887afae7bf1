#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "gpufail/scenarios.hpp"
#include "gpufail/telemetry.hpp"

using namespace gpufail;
using namespace gpufail::telemetry;

namespace {

FleetConfig small(int gpus, int days, std::uint64_t seed) {
  FleetConfig c;
  c.n_gpus = gpus;
  c.horizon_days = days;
  c.seed = seed;
  c.drift = stationary_schedule();
  return c;
}

std::string serialize(const Fleet& f) {
  std::ostringstream out;
  write_inventory_jsonl(out, f.inventory);
  write_telemetry_jsonl(out, f.streams);
  return out.str();
}

}  // namespace

TEST_CASE("one GPU for one day emits 144 records") {
  const auto f = generate_fleet(small(1, 1, 5));
  REQUIRE(f.streams.size() == 1);
  CHECK(f.streams[0].records.size() == 144);
  CHECK(f.streams[0].serial == f.inventory[0].serial);
}

TEST_CASE("same config gives bit-identical output") {
  const auto cfg = small(24, 4, 11);
  const auto a = generate_fleet(cfg);
  const auto b = generate_fleet(cfg);
  CHECK(a.streams == b.streams);
  CHECK(serialize(a) == serialize(b));
  auto other = cfg;
  other.seed = 12;
  CHECK(serialize(generate_fleet(other)) != serialize(a));
}

TEST_CASE("per-GPU streams do not depend on fleet size") {
  const auto a = generate_fleet(small(16, 3, 9));
  const auto b = generate_fleet(small(40, 3, 9));
  for (std::size_t i = 0; i < a.streams.size(); ++i) {
    CHECK(a.inventory[i] == b.inventory[i]);
    CHECK(a.streams[i] == b.streams[i]);
  }
}

TEST_CASE("record ranges hold over random configs") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto cfg = small(12, 6, seed * 77);
    cfg.drift = named_schedule(seed % 2 ? "flip" : "alternating", cfg.horizon_days);
    const auto f = generate_fleet(cfg);
    for (const auto& s : f.streams) {
      for (std::size_t i = 0; i < s.records.size(); ++i) {
        const auto& r = s.records[i];
        CHECK(r.timestamp % 10 == 0);
        CHECK(r.temperature > 20);
        CHECK(r.temperature < 90);
        CHECK(r.power >= 0);
        CHECK(r.power < 400);
        CHECK(r.sm_util >= 0);
        CHECK(r.sm_util <= 100);
        CHECK(r.mem_util >= 0);
        CHECK(r.mem_util <= 100);
        CHECK(r.uptime >= 0);
        if (i > 0) CHECK(r.timestamp - s.records[i - 1].timestamp == 10);
      }
    }
  }
}

TEST_CASE("failure status is 1 exactly between onset and repair") {
  auto cfg = small(64, 20, 3);
  const auto f = generate_fleet(cfg);
  REQUIRE(!f.failures.empty());
  std::map<std::string, std::vector<const FailureEvent*>> by_serial;
  for (const auto& e : f.failures) by_serial[e.serial].push_back(&e);
  for (const auto& s : f.streams) {
    for (const auto& r : s.records) {
      bool inside = false;
      for (const auto* e : by_serial[s.serial]) inside |= r.timestamp >= e->onset && r.timestamp < e->repair;
      CHECK(r.failure_status == inside);
    }
  }
  for (const auto& e : f.failures) {
    const auto delay = e.repair - e.onset;
    const auto end = start_minutes(cfg) + cfg.horizon_days * kMinutesPerDay;
    if (e.repair < end) {
      CHECK(delay >= 6 * 60);
      CHECK(delay <= 48 * 60);
    }
  }
}

TEST_CASE("inventory vocabularies") {
  const auto f = generate_fleet(small(200, 1, 21));
  std::set<std::string> serials;
  for (const auto& g : f.inventory) {
    serials.insert(g.serial);
    CHECK((g.gpu_type == "V100" || g.gpu_type == "T4" || g.gpu_type == "P4"));
    CHECK((g.driver_version == "418" || g.driver_version == "450"));
    CHECK(g.rack.rfind(g.datacenter + "-", 0) == 0);
    CHECK(g.position >= 0);
    CHECK(g.position <= 7);
  }
  CHECK(serials.size() == f.inventory.size());
}

TEST_CASE("inventory jsonl round trip") {
  const auto f = generate_fleet(small(20, 1, 2));
  std::stringstream io;
  write_inventory_jsonl(io, f.inventory);
  CHECK(read_inventory_jsonl(io) == f.inventory);
  std::istringstream bad("{\"serial\":\"x\"}\n");
  CHECK_THROWS_AS(read_inventory_jsonl(bad), ParseError);
}

TEST_CASE("regime_at picks the latest start") {
  Regime a, b;
  a.name = "A";
  b.name = "B";
  const DriftSchedule one{{{0.0, a}}};
  CHECK(regime_at(0.0, one).name == "A");
  const DriftSchedule two{{{0.0, a}, {30.0, b}}};
  CHECK(regime_at(29.9, two).name == "A");
  CHECK(regime_at(30.0, two).name == "B");
  const DriftSchedule late{{{5.0, a}}};
  CHECK_THROWS_AS(regime_at(4.0, late), std::out_of_range);
}

TEST_CASE("invalid configs are rejected") {
  auto c = small(0, 1, 1);
  CHECK_THROWS_AS(generate_fleet(c), ConfigError);
  c = small(1, 0, 1);
  CHECK_THROWS_AS(generate_fleet(c), ConfigError);
  c = small(1, 1, 1);
  c.drift.regimes.push_back(c.drift.regimes.front());
  CHECK_THROWS_AS(generate_fleet(c), ConfigError);
}

TEST_CASE("a mid-horizon flip changes the failure causes") {
  auto cfg = small(150, 60, 42);
  cfg.drift = named_schedule("flip", 60);
  const auto f = generate_fleet(cfg);
  const auto flip = start_minutes(cfg) + 30 * kMinutesPerDay;
  std::map<bool, std::map<Cause, int>> tally;
  for (const auto& e : f.failures) tally[e.onset >= flip][e.cause]++;
  const auto& a = family_a();
  const auto& b = family_b();
  for (std::size_t c = 0; c < kCauseCount; ++c) {
    const auto cause = static_cast<Cause>(c);
    if (a.cause_mix[c] == 0) CHECK(tally[false][cause] == 0);
    else CHECK(tally[false][cause] > 0);
    if (b.cause_mix[c] == 0) CHECK(tally[true][cause] == 0);
    else CHECK(tally[true][cause] > 0);
  }
}

TEST_CASE("schedule presets") {
  CHECK(named_schedule("stationary", 60).regimes.size() == 1);
  CHECK(named_schedule("flip", 60).regimes.at(1).start_day == 30.0);
  const auto x = named_schedule("crossover", 60);
  REQUIRE(x.regimes.size() == 4);
  CHECK(x.regimes[1].start_day == 20.0);
  CHECK(x.regimes[2].start_day == 30.0);
  CHECK(x.regimes[3].start_day == 40.0);
  CHECK(x.regimes[3].regime.cause_mix == family_b().cause_mix);
  // Every stage keeps three failing causes.
  for (const auto& r : x.regimes) {
    int failing = 0;
    for (double w : r.regime.cause_mix) failing += w > 0;
    CHECK(failing == 3);
  }
  const auto alt = named_schedule("alternating", 60);
  CHECK(alt.regimes.at(1).start_day == 20.0);
  CHECK(alt.regimes.at(2).start_day == 32.0);
  CHECK(alt.regimes.at(2).regime.name == "A");
  CHECK_THROWS_AS(named_schedule("chaos", 60), ConfigError);
}
