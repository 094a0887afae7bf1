#include <doctest.h>

#include <atomic>
#include <set>
#include <stdexcept>
#include <vector>

#include "gpufail/common.hpp"

using namespace gpufail;

TEST_CASE("time constants") {
  CHECK(kTicksPerDay == 144);
  CHECK(kMinutesPerDay == 1440);
}

TEST_CASE("time range") {
  const TimeRange r{10, 20};
  CHECK(r.contains(10));
  CHECK_FALSE(r.contains(20));
  CHECK(r.overlaps({19, 30}));
  CHECK_FALSE(r.overlaps({20, 30}));
  CHECK(TimeRange{5, 5}.empty());
}

TEST_CASE("dates round trip") {
  CHECK(format_date(0) == "1970-01-01");
  CHECK(parse_date("2021-03-01") == 18687);
  CHECK(format_date(18687) == "2021-03-01");
  for (std::int32_t d = 18000; d < 19500; d += 7) CHECK(parse_date(format_date(d)) == d);
  CHECK_THROWS_AS(parse_date("2021-02-30"), std::invalid_argument);
  CHECK_THROWS_AS(parse_date("2021-3-01"), std::invalid_argument);
  CHECK_THROWS_AS(parse_date("yesterday!"), std::invalid_argument);
}

TEST_CASE("day_of floors negative minutes") {
  CHECK(day_of(0) == 0);
  CHECK(day_of(1439) == 0);
  CHECK(day_of(1440) == 1);
  CHECK(day_of(-1) == -1);
}

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(1, "telemetry") == derive_seed(1, "telemetry"));
  CHECK(derive_seed(1, "telemetry") != derive_seed(1, "harness"));
  CHECK(derive_seed(1, "telemetry") != derive_seed(2, "telemetry"));
  // FNV-1a reference values.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 3) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("parse error carries its line") {
  const ParseError e(7, "bad");
  CHECK(e.line() == 7);
  CHECK(std::string(e.what()) == "line 7: bad");
}
