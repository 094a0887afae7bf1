#include "gpufail/dataset.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace gpufail::dataset {

void WindowingParams::validate() const {
  if (l < 1) throw ConfigError("window length l must be >= 1");
  if (p < 1) throw ConfigError("prediction length p must be >= 1");
  if (slide_step < 1 || slide_step >= l) throw ConfigError("slide_step must satisfy 1 <= slide_step < l");
}

std::vector<GpuSeries> group_by_gpu(std::span<const GpuRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const int c = records[a].serial().compare(records[b].serial());
    if (c != 0) return c < 0;
    return records[a].timestamp() < records[b].timestamp();
  });
  std::vector<GpuSeries> out;
  for (std::size_t i : order) {
    if (out.empty() || out.back().serial != records[i].serial()) {
      out.push_back({records[i].serial(), {}});
    }
    out.back().records.push_back(records[i]);
  }
  return out;
}

namespace {

bool status_of(const GpuSeries& series, std::size_t i) {
  const auto s = series.records[i].values.failure_status();
  if (!s) {
    throw std::invalid_argument("record of '" + series.serial + "' at " +
                                std::to_string(series.records[i].timestamp()) +
                                " has no failure_status");
  }
  return *s;
}

bool is_gap(const GpuSeries& series, std::size_t i) {
  return i > 0 &&
         series.records[i].timestamp() - series.records[i - 1].timestamp() != kTickMinutes;
}

}  // namespace

GpuSeries collapse_failures(const GpuSeries& series) {
  GpuSeries out{series.serial, {}};
  out.records.reserve(series.records.size());
  bool previous_failed = false;
  for (std::size_t i = 0; i < series.records.size(); ++i) {
    if (i > 0 && series.records[i].timestamp() <= series.records[i - 1].timestamp()) {
      throw std::invalid_argument("series of '" + series.serial + "' is not sorted by time");
    }
    const bool failed = status_of(series, i);
    if (!(failed && previous_failed)) out.records.push_back(series.records[i]);
    previous_failed = failed;
  }
  return out;
}

std::vector<std::uint8_t> collapse_statuses(std::span<const std::uint8_t> statuses) {
  std::vector<std::uint8_t> out;
  bool previous = false;
  for (auto s : statuses) {
    if (!(s && previous)) out.push_back(s);
    previous = s != 0;
  }
  return out;
}

bool label_window(const GpuSeries& series, std::size_t end_index, int p) {
  const std::size_t n = series.records.size();
  if (end_index >= n) throw std::out_of_range("window end beyond series");
  for (std::size_t j = end_index + 1; j <= end_index + static_cast<std::size_t>(p); ++j) {
    if (j >= n) throw std::out_of_range("insufficient lookahead for label");
    if (is_gap(series, j)) throw std::out_of_range("lookahead crosses a time gap");
    if (status_of(series, j)) return true;
  }
  return false;
}

std::vector<Placement> place_windows(std::span<const std::uint8_t> failure,
                                     std::span<const std::uint8_t> gap_before,
                                     const WindowingParams& params, Windowing mode) {
  params.validate();
  const std::size_t n = failure.size();
  const auto l = static_cast<std::size_t>(params.l);
  const auto p = static_cast<std::size_t>(params.p);
  auto gap = [&](std::size_t i) { return !gap_before.empty() && gap_before[i] != 0; };

  // next_failure[j] / next_gap[j]: first index >= j with a failure / a gap.
  std::vector<std::size_t> next_failure(n + 1, n), next_gap(n + 1, n);
  for (std::size_t j = n; j-- > 0;) {
    next_failure[j] = failure[j] ? j : next_failure[j + 1];
    next_gap[j] = gap(j) ? j : next_gap[j + 1];
  }

  std::vector<Placement> out;
  std::size_t s = 0;
  while (s + l <= n) {
    std::size_t restart = s;
    for (std::size_t k = s; k < s + l; ++k) {
      if (failure[k]) {
        restart = k + 1;
      } else if (k > s && gap(k)) {
        restart = std::max(restart, k);
      }
    }
    if (restart != s) {
      s = restart;
      continue;
    }
    const std::size_t t = s + l - 1;
    const std::size_t f = next_failure[t + 1];
    const std::size_t g = next_gap[t + 1];
    if (t + p >= n) {
      // Horizon runs past the stream end; so does every later window. Placing only the
      // positives seen there would bias the tail towards failures.
      break;
    } else if (f < n && f <= t + p && f < g) {
      out.push_back({t, true});
    } else if (g < n && g <= t + p) {
      // lookahead interrupted by a gap: label undefined, skip this placement
    } else {
      out.push_back({t, false});
    }
    s = mode == Windowing::Sliding ? s + params.slide_step : t + p + 1;
  }
  return out;
}

namespace {

std::vector<RawInstance> make_instances(std::shared_ptr<const GpuSeries> series,
                                        const WindowingParams& params, Windowing mode,
                                        std::uint32_t gpu_ordinal) {
  const std::size_t n = series->records.size();
  std::vector<std::uint8_t> failure(n), gaps(n);
  for (std::size_t i = 0; i < n; ++i) {
    failure[i] = status_of(*series, i);
    gaps[i] = is_gap(*series, i);
    if (i > 0 && series->records[i].timestamp() <= series->records[i - 1].timestamp()) {
      throw std::invalid_argument("series of '" + series->serial + "' is not sorted by time");
    }
  }
  std::vector<RawInstance> out;
  for (const Placement& pl : place_windows(failure, gaps, params, mode)) {
    RawInstance inst;
    inst.series = series;
    inst.start = pl.end + 1 - params.l;
    inst.length = params.l;
    inst.label = pl.label;
    inst.end_timestamp = series->records[pl.end].timestamp();
    inst.id = (static_cast<std::uint64_t>(gpu_ordinal) << 32) |
              static_cast<std::uint64_t>(inst.end_timestamp / kTickMinutes);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

std::vector<RawInstance> segment_instances(std::shared_ptr<const GpuSeries> series,
                                           const WindowingParams& params,
                                           std::uint32_t gpu_ordinal) {
  return make_instances(std::move(series), params, Windowing::Segmented, gpu_ordinal);
}

std::vector<RawInstance> slide_instances(std::shared_ptr<const GpuSeries> series,
                                         const WindowingParams& params,
                                         std::uint32_t gpu_ordinal) {
  return make_instances(std::move(series), params, Windowing::Sliding, gpu_ordinal);
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(instances.begin(), instances.end(), [](const RawInstance& i) { return i.label; }));
}

InstancePool::InstancePool(std::span<const GpuRecord> store, const WindowingParams& params,
                           Windowing mode)
    : params_(params) {
  params_.validate();
  auto grouped = group_by_gpu(store);
  series_.resize(grouped.size());
  std::vector<std::vector<RawInstance>> per_gpu(grouped.size());
  parallel_for(grouped.size(), [&](std::size_t g) {
    series_[g] = std::make_shared<const GpuSeries>(collapse_failures(grouped[g]));
    grouped[g].records.clear();
    grouped[g].records.shrink_to_fit();
    per_gpu[g] = make_instances(series_[g], params_, mode, static_cast<std::uint32_t>(g));
  });
  std::size_t total = 0;
  for (const auto& v : per_gpu) total += v.size();
  instances_.reserve(total);
  for (auto& v : per_gpu) {
    std::move(v.begin(), v.end(), std::back_inserter(instances_));
  }
}

Dataset InstancePool::select(const TimeRange& range,
                             std::optional<std::int64_t> horizon_limit) const {
  if (range.empty()) throw ConfigError("empty time range for dataset split");
  Dataset d;
  const std::int64_t horizon = static_cast<std::int64_t>(params_.p) * kTickMinutes;
  for (const auto& inst : instances_) {
    if (!range.contains(inst.end_timestamp)) continue;
    if (horizon_limit && inst.end_timestamp + horizon > *horizon_limit) continue;
    d.instances.push_back(inst);
  }
  return d;
}

Dataset build_dataset(std::span<const GpuRecord> store, const WindowingParams& params,
                      const TimeRange& split, Windowing mode) {
  if (split.empty()) throw ConfigError("empty time range for dataset split");
  return InstancePool(store, params, mode).select(split);
}

void write_dataset(std::ostream& out, const Dataset& data, const WindowingParams& params) {
  out << "serial,end_timestamp,label,datacenter,gpu_type,driver_version,expiration_date";
  for (int r = 0; r < params.l; ++r) {
    for (auto name : {"temperature", "power", "sm_util", "mem_util", "uptime"}) {
      out << ',' << name << '_' << r;
    }
  }
  out << '\n';
  auto put = [&](const auto& v) {
    out << ',';
    if (v) {
      out << *v;
    } else {
      out << "NA";
    }
  };
  for (const auto& inst : data.instances) {
    const auto rows = inst.rows();
    const auto& c = *rows.front().config;
    out << inst.serial() << ',' << inst.end_timestamp << ',' << (inst.label ? 1 : 0) << ','
        << c.datacenter << ',' << c.gpu_type << ',' << c.driver_version << ','
        << format_date(c.expiration_date);
    for (const auto& row : rows) {
      put(row.values.temperature());
      put(row.values.power());
      put(row.values.sm_util());
      put(row.values.mem_util());
      put(row.values.uptime());
    }
    out << '\n';
  }
}

}  // namespace gpufail::dataset
