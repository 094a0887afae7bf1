#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "gpufail/dataset.hpp"
#include "gpufail/features.hpp"

namespace testing_support {

// Two Gaussian blobs laid out as l x m sequences: class 0 centred at 0.3,
// class 1 at 0.7, noise 0.1.
inline std::vector<gpufail::features::Instance> blobs(std::size_t n, int l, int m,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  std::vector<gpufail::features::Instance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& inst = out[i];
    inst.l = l;
    inst.m = m;
    inst.y = i % 2 == 1;
    inst.id = i;
    inst.end_timestamp = static_cast<std::int64_t>(i) * 10;
    inst.x.resize(static_cast<std::size_t>(l) * m);
    for (auto& v : inst.x) v = (inst.y ? 0.7f : 0.3f) + noise(rng);
  }
  return out;
}

inline std::vector<gpufail::features::Instance> uniform(std::size_t n, int l, int m,
                                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<gpufail::features::Instance> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& inst = out[i];
    inst.l = l;
    inst.m = m;
    inst.y = u(rng) < 0.5f;
    inst.id = i;
    inst.x.resize(static_cast<std::size_t>(l) * m);
    for (auto& v : inst.x) v = u(rng);
  }
  return out;
}

// Naive window enumeration: tries every start in turn and scans each window
// and its horizon entry by entry.
inline std::vector<gpufail::dataset::Placement> brute_windows(
    const std::vector<std::uint8_t>& failure, const std::vector<std::uint8_t>& gap_before,
    const gpufail::dataset::WindowingParams& params, gpufail::dataset::Windowing mode) {
  const std::size_t n = failure.size();
  const std::size_t l = params.l, p = params.p;
  auto gap = [&](std::size_t i) { return !gap_before.empty() && gap_before[i]; };
  std::vector<gpufail::dataset::Placement> out;
  std::size_t from = 0;
  for (;;) {
    std::optional<std::size_t> start;
    for (std::size_t s = from; s + l <= n && !start; ++s) {
      bool clean = true;
      for (std::size_t k = s; k < s + l; ++k) {
        if (failure[k] || (k > s && gap(k))) clean = false;
      }
      if (clean) start = s;
    }
    if (!start) break;
    const std::size_t t = *start + l - 1;
    if (t + p >= n) break;  // horizon not fully observed
    enum { Healthy, Failed, Gap } outcome = Healthy;
    for (std::size_t k = t + 1; k <= t + p; ++k) {
      if (gap(k)) { outcome = Gap; break; }
      if (failure[k]) { outcome = Failed; break; }
    }
    if (outcome != Gap) out.push_back({t, outcome == Failed});
    from = mode == gpufail::dataset::Windowing::Sliding ? *start + params.slide_step : t + p + 1;
  }
  return out;
}

// Precision / recall over the top `count` of a full stable sort by
// (score desc, id asc).
struct TopCount {
  std::size_t tp = 0;
  std::size_t selected = 0;
};

inline TopCount brute_top(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                          std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  TopCount c;
  for (std::size_t i = 0; i < count && i < order.size(); ++i) {
    c.tp += labels[order[i]];
    ++c.selected;
  }
  return c;
}

}  // namespace testing_support
