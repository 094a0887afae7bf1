#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "gpufail/collection.hpp"
#include "gpufail/features.hpp"
#include "gpufail/scenarios.hpp"

using namespace gpufail;
using namespace gpufail::features;

namespace {

std::shared_ptr<const telemetry::StaticConfig> config(const std::string& serial,
                                                      const std::string& type = "T4") {
  return std::make_shared<const telemetry::StaticConfig>(
      telemetry::StaticConfig{serial, "dc1", type, "418", 19000, "dc1", 0, "10.0.0.1"});
}

// One GPU whose row i carries temperature temps[i]; everything else constant.
std::shared_ptr<const dataset::GpuSeries> series(const std::vector<int>& temps,
                                                 std::int64_t t0 = 18900LL * 1440,
                                                 const std::string& type = "T4") {
  auto s = std::make_shared<dataset::GpuSeries>();
  s->serial = "GPU-F";
  const auto cfg = config(s->serial, type);
  for (std::size_t i = 0; i < temps.size(); ++i) {
    collection::DynamicValues v;
    v.timestamp = t0 + static_cast<std::int64_t>(i) * 10;
    v.set_temperature(temps[i]);
    v.set_power(100);
    v.set_sm_util(50);
    v.set_mem_util(30);
    v.set_uptime(1000);
    v.set_failure_status(false);
    s->records.push_back({cfg, v});
  }
  return s;
}

}  // namespace

TEST_CASE("one-hot with out-of-vocabulary slot") {
  const std::vector<std::string> vocab = {"V100", "T4", "P4"};
  CHECK(one_hot("T4", vocab) == std::vector<float>{0, 1, 0, 0});
  CHECK(one_hot("A100", vocab) == std::vector<float>{0, 0, 0, 1});
  const std::vector<std::string> single = {"dc1"};
  CHECK(one_hot("dc1", single) == std::vector<float>{1, 0});
}

TEST_CASE("bucketize") {
  const std::vector<double> b = {10, 20, 30};
  CHECK(bucketize(5, b) == 0);
  CHECK(bucketize(99, b) == 3);
  CHECK(bucketize(20, b) == 2);
  CHECK(bucketize(19.99, b) == 1);
  CHECK_THROWS_AS(bucketize(std::nan(""), b), std::invalid_argument);
  CHECK_THROWS_AS(bucketize(std::numeric_limits<double>::infinity(), b), std::invalid_argument);
  // Monotone in value.
  std::size_t prev = 0;
  for (double v = -5; v < 40; v += 0.25) {
    const auto i = bucketize(v, b);
    CHECK(i >= prev);
    prev = i;
  }
}

TEST_CASE("quantiles") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(quantile(v, 0.25) == doctest::Approx(25.75));
  CHECK(quantile(v, 0.5) == doctest::Approx(50.5));
  CHECK(quantile(v, 0.75) == doctest::Approx(75.25));
  CHECK(quantile(v, 0.0) == 1);
  CHECK(quantile(v, 1.0) == 100);
}

TEST_CASE("fitted boundaries are training quartiles") {
  std::vector<int> temps;
  for (int i = 1; i <= 100; ++i) temps.push_back(i);
  temps.push_back(50);
  const auto s = series(temps);
  const auto ds = dataset::Dataset{dataset::slide_instances(s, {2, 1, 1})};
  const auto enc = fit_encoder(ds, 4);
  const auto& b = enc.boundaries("temperature");
  REQUIRE(b.size() == 3);
  CHECK(b[0] == doctest::Approx(25.75));
  CHECK(b[1] == doctest::Approx(50.5));
  CHECK(b[2] == doctest::Approx(75.25));
  CHECK(enc.boundaries("power").empty());  // constant feature
  const auto x = enc.encode(ds.instances.front());
  CHECK(x.x[1] == 0.0f);  // power column maps to bucket 0
}

TEST_CASE("encoded matrices on a generated fleet") {
  telemetry::FleetConfig c;
  c.n_gpus = 24;
  c.horizon_days = 4;
  c.seed = 8;
  c.drift = telemetry::stationary_schedule();
  const auto col = collection::simulate_collection(telemetry::generate_fleet(c),
                                                   collection::CollectingPolicy::all_attributes());
  const dataset::InstancePool pool(col.records, {});
  const auto start = telemetry::start_minutes(c);
  const auto train = pool.select({start, start + 2 * kMinutesPerDay});
  const auto test = pool.select({start + 2 * kMinutesPerDay, start + 4 * kMinutesPerDay});
  const auto enc = fit_encoder(train, 50);

  const std::size_t expected_m = 6 + (enc.vocabulary("datacenter").size() + 1) +
                                 (enc.vocabulary("gpu_type").size() + 1) +
                                 (enc.vocabulary("driver_version").size() + 1);
  CHECK(enc.m() == expected_m);
  CHECK(enc.vocabulary("gpu_type").size() <= 3);
  for (const auto& f : kFloatFeatures) {
    const auto& b = enc.boundaries(f);
    CHECK(b.size() <= 49);
    for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i] > b[i - 1]);
  }

  const auto x = encode_all(enc, test);
  REQUIRE(x.size() == test.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].l == 18);
    CHECK(x[i].m == static_cast<int>(expected_m));
    CHECK(x[i].y == test.instances[i].label);
    CHECK(x[i].id == test.instances[i].id);
    for (float v : x[i].x) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    // Static one-hots repeat on every row.
    for (int r = 1; r < x[i].l; ++r) {
      for (std::size_t k = 6; k < expected_m; ++k) CHECK(x[i].row(r)[k] == x[i].row(0)[k]);
    }
  }
  CHECK(encode_all(enc, test).front().x == x.front().x);

  std::stringstream io;
  enc.save(io);
  const auto back = Encoder::load(io);
  CHECK(back == enc);
  CHECK(back.encode(test.instances[3]).x == x[3].x);

  const auto onehot = fit_encoder(train, 10, true);
  std::size_t width = 0;
  for (const auto& f : kFloatFeatures) width += onehot.boundaries(f).size() + 1;
  CHECK(onehot.m() == expected_m - 6 + width);
  const auto y = onehot.encode(test.instances[0]);
  float sum = 0;
  for (std::size_t k = 0; k < width; ++k) sum += y.row(0)[k];
  CHECK(sum == 6.0f);
}

TEST_CASE("identical values at different times encode identically") {
  const std::vector<int> temps = {40, 41, 42, 43, 44, 45, 46};
  const auto a = series(temps, 18900LL * 1440);
  const auto b = series(temps, 18900LL * 1440 + 300);
  const auto da = dataset::Dataset{dataset::slide_instances(a, {3, 2, 1})};
  const auto db = dataset::Dataset{dataset::slide_instances(b, {3, 2, 1})};
  const auto enc = fit_encoder(da, 5);
  CHECK(enc.encode(da.instances[0]).x == enc.encode(db.instances[0]).x);
}

TEST_CASE("unknown category goes to the OOV slot, missing fields are named") {
  const auto train = series({40, 41, 42, 43, 44, 45}, 18900LL * 1440, "T4");
  const auto other = series({40, 41, 42, 43, 44, 45}, 18900LL * 1440, "A100");
  const auto dt = dataset::Dataset{dataset::slide_instances(train, {2, 1, 1})};
  const auto enc = fit_encoder(dt, 4);
  const auto x = enc.encode(dataset::slide_instances(other, {2, 1, 1}).front());
  // gpu_type block follows the 6 floats and the datacenter block.
  const std::size_t base = 6 + enc.vocabulary("datacenter").size() + 1;
  const auto vocab = enc.vocabulary("gpu_type");
  REQUIRE(vocab == std::vector<std::string>{"T4"});
  CHECK(x.row(0)[base] == 0.0f);
  CHECK(x.row(0)[base + 1] == 1.0f);

  auto broken = std::make_shared<dataset::GpuSeries>(*train);
  broken->records[1].values.clear(collection::Attribute::Power);
  const auto inst = dataset::slide_instances(broken, {2, 1, 1}).front();
  try {
    enc.encode(inst);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find("power") != std::string::npos);
    CHECK(what.find("GPU-F") != std::string::npos);
  }
  CHECK_THROWS_AS(fit_encoder(dataset::Dataset{}, 50), std::invalid_argument);
}
