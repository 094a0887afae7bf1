#include "gpufail/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace gpufail::features {

using collection::GpuRecord;

std::vector<float> one_hot(std::string_view category, std::span<const std::string> vocabulary) {
  std::vector<float> v(vocabulary.size() + 1, 0.0f);
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), category);
  v[static_cast<std::size_t>(it - vocabulary.begin())] = 1.0f;
  return v;
}

std::size_t bucketize(double value, std::span<const double> boundaries) {
  if (!std::isfinite(value)) throw std::invalid_argument("cannot bucketize a non-finite value");
  return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), value) -
                                  boundaries.begin());
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

[[noreturn]] void missing(const GpuRecord& r, std::string_view field) {
  throw std::invalid_argument("missing field '" + std::string(field) + "' for serial '" +
                              r.serial() + "' at " + std::to_string(r.timestamp()));
}

std::array<double, kFloatFeatures.size()> float_values(const GpuRecord& r) {
  const auto& v = r.values;
  const auto temperature = v.temperature();
  const auto power = v.power();
  const auto sm = v.sm_util();
  const auto mem = v.mem_util();
  const auto uptime = v.uptime();
  if (!temperature) missing(r, "temperature");
  if (!power) missing(r, "power");
  if (!sm) missing(r, "sm_util");
  if (!mem) missing(r, "mem_util");
  if (!uptime) missing(r, "uptime");
  const double days_left =
      static_cast<double>(r.config->expiration_date) - static_cast<double>(day_of(r.timestamp()));
  return {static_cast<double>(*temperature), static_cast<double>(*power), static_cast<double>(*sm),
          static_cast<double>(*mem), static_cast<double>(*uptime), days_left};
}

std::array<std::string_view, kCategoricalFeatures.size()> categories(const GpuRecord& r) {
  return {r.config->datacenter, r.config->gpu_type, r.config->driver_version};
}

}  // namespace

std::size_t Encoder::m() const {
  std::size_t m = 0;
  for (auto f : kFloatFeatures) m += one_hot_buckets_ ? boundaries(f).size() + 1 : 1;
  for (auto f : kCategoricalFeatures) m += vocabulary(f).size() + 1;
  return m;
}

const std::vector<std::string>& Encoder::vocabulary(std::string_view feature) const {
  const auto it = vocabularies_.find(feature);
  if (it == vocabularies_.end()) throw std::out_of_range("no vocabulary for " + std::string(feature));
  return it->second;
}

const std::vector<double>& Encoder::boundaries(std::string_view feature) const {
  const auto it = boundaries_.find(feature);
  if (it == boundaries_.end()) throw std::out_of_range("no boundaries for " + std::string(feature));
  return it->second;
}

Encoder fit_encoder(const dataset::Dataset& train, int n_bucket, bool one_hot_buckets) {
  if (train.instances.empty()) throw std::invalid_argument("cannot fit an encoder on an empty dataset");
  if (n_bucket < 1) throw ConfigError("N_bucket must be positive");

  // Each distinct row once, even when sliding windows overlap.
  std::unordered_map<const dataset::GpuSeries*, std::vector<std::uint8_t>> covered;
  std::array<std::vector<double>, kFloatFeatures.size()> columns;
  std::array<std::set<std::string, std::less<>>, kCategoricalFeatures.size()> seen;
  for (const auto& inst : train.instances) {
    auto& mask = covered[inst.series.get()];
    if (mask.empty()) mask.assign(inst.series->records.size(), 0);
    for (std::size_t i = inst.start; i < inst.start + static_cast<std::size_t>(inst.length); ++i) {
      if (mask[i]) continue;
      mask[i] = 1;
      const GpuRecord& r = inst.series->records[i];
      const auto values = float_values(r);
      for (std::size_t f = 0; f < values.size(); ++f) columns[f].push_back(values[f]);
      const auto cats = categories(r);
      for (std::size_t c = 0; c < cats.size(); ++c) {
        if (seen[c].find(cats[c]) == seen[c].end()) seen[c].emplace(cats[c]);
      }
    }
  }

  Encoder enc;
  enc.n_bucket_ = n_bucket;
  enc.one_hot_buckets_ = one_hot_buckets;
  for (std::size_t f = 0; f < kFloatFeatures.size(); ++f) {
    auto& col = columns[f];
    std::sort(col.begin(), col.end());
    std::vector<double> b;
    for (int j = 1; j < n_bucket; ++j) {
      const double q = quantile(col, static_cast<double>(j) / n_bucket);
      if (q > col.front() && (b.empty() || q > b.back())) b.push_back(q);
    }
    enc.boundaries_.emplace(std::string(kFloatFeatures[f]), std::move(b));
  }
  for (std::size_t c = 0; c < kCategoricalFeatures.size(); ++c) {
    enc.vocabularies_.emplace(std::string(kCategoricalFeatures[c]),
                              std::vector<std::string>(seen[c].begin(), seen[c].end()));
  }
  return enc;
}

Instance Encoder::encode(const dataset::RawInstance& raw) const {
  const std::size_t width = m();
  Instance out;
  out.l = raw.length;
  out.m = static_cast<int>(width);
  out.y = raw.label;
  out.id = raw.id;
  out.end_timestamp = raw.end_timestamp;
  out.x.assign(static_cast<std::size_t>(raw.length) * width, 0.0f);

  std::array<const std::vector<double>*, kFloatFeatures.size()> bounds;
  for (std::size_t f = 0; f < kFloatFeatures.size(); ++f) bounds[f] = &boundaries(kFloatFeatures[f]);
  std::array<const std::vector<std::string>*, kCategoricalFeatures.size()> vocabs;
  for (std::size_t c = 0; c < kCategoricalFeatures.size(); ++c) {
    vocabs[c] = &vocabulary(kCategoricalFeatures[c]);
  }

  const auto rows = raw.rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    float* dst = out.x.data() + r * width;
    const auto values = float_values(rows[r]);
    for (std::size_t f = 0; f < values.size(); ++f) {
      const auto& b = *bounds[f];
      const std::size_t index = bucketize(values[f], b);
      if (one_hot_buckets_) {
        dst[index] = 1.0f;
        dst += b.size() + 1;
      } else {
        *dst++ = b.empty() ? 0.0f : static_cast<float>(static_cast<double>(index) / b.size());
      }
    }
    const auto cats = categories(rows[r]);
    for (std::size_t c = 0; c < cats.size(); ++c) {
      const auto& vocab = *vocabs[c];
      const auto it = std::find(vocab.begin(), vocab.end(), cats[c]);
      dst[it - vocab.begin()] = 1.0f;
      dst += vocab.size() + 1;
    }
  }
  return out;
}

Instance encode_instance(const Encoder& encoder, const dataset::RawInstance& raw) {
  return encoder.encode(raw);
}

std::vector<Instance> encode_all(const Encoder& encoder, const dataset::Dataset& data) {
  std::vector<Instance> out(data.instances.size());
  parallel_for(out.size(), [&](std::size_t i) { out[i] = encoder.encode(data.instances[i]); });
  return out;
}

void Encoder::save(std::ostream& out) const {
  nlohmann::ordered_json j;
  j["format"] = "gpufail-encoder";
  j["version"] = 1;
  j["n_bucket"] = n_bucket_;
  j["one_hot_buckets"] = one_hot_buckets_;
  j["vocabularies"] = vocabularies_;
  j["boundaries"] = boundaries_;
  out << j.dump(1) << '\n';
}

Encoder Encoder::load(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  if (j.at("format") != "gpufail-encoder" || j.at("version") != 1) {
    throw std::invalid_argument("unsupported encoder file format");
  }
  Encoder enc;
  enc.n_bucket_ = j.at("n_bucket").get<int>();
  enc.one_hot_buckets_ = j.at("one_hot_buckets").get<bool>();
  for (const auto& [k, v] : j.at("vocabularies").items()) {
    enc.vocabularies_.emplace(k, v.get<std::vector<std::string>>());
  }
  for (const auto& [k, v] : j.at("boundaries").items()) {
    enc.boundaries_.emplace(k, v.get<std::vector<double>>());
  }
  for (auto f : kFloatFeatures) (void)enc.boundaries(f);
  for (auto f : kCategoricalFeatures) (void)enc.vocabulary(f);
  return enc;
}

}  // namespace gpufail::features
