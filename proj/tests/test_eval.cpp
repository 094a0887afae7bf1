#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "gpufail/eval.hpp"
#include "support.hpp"

using namespace gpufail;
using namespace gpufail::eval;

namespace {

std::vector<ScoredInstance> scored(const std::vector<double>& s) {
  std::vector<ScoredInstance> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({i, s[i]});
  return out;
}

}  // namespace

TEST_CASE("precision and recall examples") {
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0};
  const std::vector<std::uint8_t> y = {1, 0, 1, 0, 0, 0, 0, 1, 0, 0};
  CHECK(*precision_at_k(scored(s), y, 0.2) == doctest::Approx(0.5));
  CHECK(*precision_at_k(scored(s), y, 0.3) == doctest::Approx(2.0 / 3));
  CHECK(*recall_at_k(scored(s), y, 0.3) == doctest::Approx(2.0 / 3));
  const std::vector<std::uint8_t> none(10, 0);
  CHECK_FALSE(recall_at_k(scored(s), none, 0.3).has_value());
  CHECK(*precision_at_k(scored(s), none, 0.3) == 0.0);
  CHECK_FALSE(precision_in_set(scored(s), y, {}).has_value());
  CHECK(*precision_in_set(scored(s), y, {0, 7}) == 1.0);
  CHECK_THROWS_AS(precision_at_k(scored(s), std::vector<std::uint8_t>(3), 0.2), std::invalid_argument);
}

TEST_CASE("accuracy uses a strict threshold") {
  const std::vector<double> s = {0.7, 0.70001, 0.2, 0.9};
  const std::vector<std::uint8_t> y = {1, 1, 0, 0};
  CHECK(accuracy(s, y) == doctest::Approx(0.5));
  CHECK(accuracy(s, y, 0.1) == doctest::Approx(0.5));
  CHECK(accuracy(std::vector<double>{0.7}, std::vector<std::uint8_t>{0}) == 1.0);
}

TEST_CASE("metric oracles on random vectors") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const double k = (1 + rng() % 30) / 100.0;
    const bool coarse = trial % 3 == 0;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? std::round(u(rng) * 10) / 10 : u(rng);
      y[i] = u(rng) < 0.2;
    }
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(k * n + 1e-9)));
    const auto top = testing_support::brute_top(s, y, count);
    std::size_t positives = 0, right = 0;
    for (std::size_t i = 0; i < n; ++i) {
      positives += y[i];
      right += (s[i] > 0.7) == (y[i] == 1);
    }
    const auto r = evaluate(scored(s), y, k);
    REQUIRE(r.precision_at_k.has_value());
    CHECK(*r.precision_at_k == doctest::Approx(static_cast<double>(top.tp) / count));
    if (positives == 0) {
      CHECK_FALSE(r.recall_at_k.has_value());
    } else {
      CHECK(*r.recall_at_k == doctest::Approx(static_cast<double>(top.tp) / positives));
    }
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(right) / n));
    CHECK(r.tp + r.fp + r.fn + r.tn == n);
    CHECK(r.selected == count);
  }
}

TEST_CASE("evaluate with an ensemble positive set") {
  const auto s = scored({0.1, 0.2, 0.3, 0.4});
  const std::vector<std::uint8_t> y = {1, 0, 0, 1};
  const std::set<std::uint64_t> set = {0, 1, 2};
  const std::vector<double> combined = {0.9, 0.1, 0.1, 0.9};
  const auto r = evaluate(s, y, 0.5, &set, combined);
  CHECK(r.selected == 3);
  CHECK(*r.precision_at_k == doctest::Approx(1.0 / 3));
  CHECK(*r.recall_at_k == doctest::Approx(0.5));
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("balance target") {
  CHECK(balance_target(100, 10000) == 1000);
  CHECK(balance_target(3, 7) == 5);  // sqrt(21) = 4.58
  CHECK(balance_target(1, 1) == 1);
}

TEST_CASE("balancing on random splits") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = 1 + rng() % 200;
    const std::size_t n = p + rng() % 5000;
    std::vector<std::uint8_t> y(p + n, 0);
    std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p), 1);
    std::shuffle(y.begin(), y.end(), rng);
    BalanceConfig cfg;
    cfg.seed = trial;
    const auto idx = balance_indices(y, cfg);
    const auto t = static_cast<std::size_t>(std::llround(std::sqrt(double(p) * double(n))));
    std::size_t pos = 0;
    std::map<std::size_t, int> seen;
    for (auto i : idx) {
      pos += y[i];
      seen[i]++;
    }
    const std::size_t neg = idx.size() - pos;
    CHECK(pos == t);
    CHECK(neg == t);
    // Every original positive survives; negatives are drawn without replacement.
    std::size_t distinct_pos = 0;
    for (auto& [i, c] : seen) {
      if (y[i]) ++distinct_pos;
      else CHECK(c == 1);
    }
    CHECK(distinct_pos == p);
    CHECK(balance_indices(y, cfg) == idx);
  }
  CHECK_THROWS_AS(balance_indices(std::vector<std::uint8_t>{1, 1}, {}), std::invalid_argument);
  BalanceConfig bad;
  bad.negative_ratio = 0;
  CHECK_THROWS_AS(balance_indices(std::vector<std::uint8_t>{1, 0}, bad), ConfigError);
}

TEST_CASE("balance ratio and cap") {
  std::vector<std::uint8_t> y(1100, 0);
  std::fill(y.begin(), y.begin() + 100, 1);
  BalanceConfig cfg;
  cfg.negative_ratio = 2;
  auto idx = balance_indices(y, cfg);
  std::size_t pos = 0;
  for (auto i : idx) pos += y[i];
  CHECK(pos == 316);  // round(sqrt(100 * 1000))
  CHECK(idx.size() - pos == 632);
  cfg.max_per_class = 50;
  idx = balance_indices(y, cfg);
  CHECK(idx.size() == 100);
}

TEST_CASE("grouping by day and by window") {
  const std::int64_t d = 18000LL * kMinutesPerDay;
  const std::vector<std::int64_t> ts = {d + 10, d + 1430, d + 1440, d + 5000, d + 20};
  const auto days = group_instances(ts);
  REQUIRE(days.size() == 3);
  CHECK(days[0].indices == std::vector<std::size_t>{0, 1, 4});
  CHECK(days[0].name == format_date(18000));
  CHECK(days[1].indices == std::vector<std::size_t>{2});

  const std::vector<TimeRange> windows = {{d, d + 2 * kMinutesPerDay}, {d + 10 * kMinutesPerDay, d + 11 * kMinutesPerDay}};
  const auto w = group_instances(ts, windows);
  REQUIRE(w.size() == 2);
  CHECK(w[0].indices == std::vector<std::size_t>{0, 1, 2, 4});
  CHECK(w[1].indices.empty());
}

TEST_CASE("windowed metrics and variance") {
  CHECK(population_variance(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(1.25));
  CHECK(population_variance(std::vector<double>{7}) == 0.0);

  const std::int64_t d = 18000LL * kMinutesPerDay;
  std::vector<ScoredInstance> s;
  std::vector<std::uint8_t> y;
  std::vector<std::int64_t> ts;
  for (int day = 0; day < 3; ++day) {
    for (int i = 0; i < 100; ++i) {
      s.push_back({static_cast<std::uint64_t>(day * 100 + i), static_cast<double>(i)});
      // Day 0: top 2 positive; day 1: one of them; day 2: none.
      y.push_back((day == 0 && i >= 98) || (day == 1 && i == 99));
      ts.push_back(d + day * kMinutesPerDay + i * 10);
    }
  }
  const std::vector<TimeRange> windows = {{d, d + kMinutesPerDay},
                                          {d + kMinutesPerDay, d + 2 * kMinutesPerDay},
                                          {d + 2 * kMinutesPerDay, d + 3 * kMinutesPerDay},
                                          {d + 5 * kMinutesPerDay, d + 6 * kMinutesPerDay}};
  const auto m = windowed_metrics(s, y, ts, 0.02, windows);
  REQUIRE(m.reports.size() == 3);
  CHECK(m.omitted.size() == 1);
  CHECK(*m.reports[0].precision_at_k == 1.0);
  CHECK(*m.reports[1].precision_at_k == 0.5);
  CHECK(*m.reports[2].precision_at_k == 0.0);
  CHECK(*m.mean_precision == doctest::Approx(0.5));
  CHECK(m.precision_variance == doctest::Approx(1.0 / 6));
  CHECK(windowed_metrics(s, y, ts, 0.02).reports.size() == 3);

  std::ostringstream out;
  write_metrics_header(out);
  write_metrics_row(out, m.reports[2]);
  const auto text = out.str();
  CHECK(text.find("precision_at_k,recall_at_k,accuracy\n") != std::string::npos);
  CHECK(text.find(",NA,") != std::string::npos);  // no positives on day 2
}
