#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpufail/dataset.hpp"

namespace gpufail::features {

inline constexpr std::array<std::string_view, 6> kFloatFeatures = {
    "temperature", "power", "sm_util", "mem_util", "uptime", "days_to_expiration"};
inline constexpr std::array<std::string_view, 3> kCategoricalFeatures = {
    "datacenter", "gpu_type", "driver_version"};

/// |vocabulary| + 1 slots; the last slot is the out-of-vocabulary marker.
std::vector<float> one_hot(std::string_view category, std::span<const std::string> vocabulary);

/// Number of boundaries <= value. Throws std::invalid_argument for NaN/inf.
std::size_t bucketize(double value, std::span<const double> boundaries);

/// Linear-interpolation quantile of sorted data (q in [0, 1]).
double quantile(std::span<const double> sorted, double q);

/// Encoded instance: an l x m row-major matrix with its label.
struct Instance {
  std::vector<float> x;
  int l = 0;
  int m = 0;
  bool y = false;
  std::uint64_t id = 0;
  std::int64_t end_timestamp = 0;

  std::span<const float> row(int r) const {
    return std::span<const float>(x).subspan(static_cast<std::size_t>(r) * m, m);
  }
};

/// Immutable once fitted; only fit_encoder and load create one.
class Encoder {
 public:
  int n_bucket() const { return n_bucket_; }
  bool one_hot_buckets() const { return one_hot_buckets_; }
  std::size_t m() const;

  const std::vector<std::string>& vocabulary(std::string_view feature) const;
  const std::vector<double>& boundaries(std::string_view feature) const;

  Instance encode(const dataset::RawInstance& raw) const;

  void save(std::ostream& out) const;
  static Encoder load(std::istream& in);

  bool operator==(const Encoder&) const = default;

 private:
  friend Encoder fit_encoder(const dataset::Dataset& train, int n_bucket, bool one_hot_buckets);
  Encoder() = default;

  int n_bucket_ = 50;
  bool one_hot_buckets_ = false;
  std::map<std::string, std::vector<std::string>, std::less<>> vocabularies_;
  std::map<std::string, std::vector<double>, std::less<>> boundaries_;
};

/// Quantile bucket boundaries and category vocabularies from the training
/// split's rows. Boundaries are de-duplicated and exclude the training
/// minimum, so a constant feature has none.
Encoder fit_encoder(const dataset::Dataset& train, int n_bucket = 50, bool one_hot_buckets = false);

Instance encode_instance(const Encoder& encoder, const dataset::RawInstance& raw);
std::vector<Instance> encode_all(const Encoder& encoder, const dataset::Dataset& data);

}  // namespace gpufail::features
