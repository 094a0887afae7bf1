#pragma once

// Conversion of per-GPU raw streams into labelled time-series instances.
//
// A GPU's stream is first collapsed so every failed period keeps only its
// first entry. Observation windows of `l` consecutive healthy entries are
// then placed either segment by segment or with a sliding step, and each
// window is labelled 1 iff a failure occurs among the next `p` entries.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gpufail/collection.hpp"
#include "gpufail/common.hpp"

namespace gpufail::dataset {

using collection::GpuRecord;

struct WindowingParams {
  int l = 18;           // observation window, entries
  int p = 144;          // prediction length, entries
  int slide_step = 10;  // entries between sliding windows

  void validate() const;
};

enum class Windowing { Sliding, Segmented };

/// Time-ordered records of one GPU.
struct GpuSeries {
  std::string serial;
  std::vector<GpuRecord> records;
};

/// Groups a record stream by serial (ascending), each group sorted by time.
std::vector<GpuSeries> group_by_gpu(std::span<const GpuRecord> records);

/// Keeps only the first entry of each maximal run of failure_status = 1.
/// Throws std::invalid_argument if the series is not strictly time-ordered or
/// lacks failure_status.
GpuSeries collapse_failures(const GpuSeries& series);
std::vector<std::uint8_t> collapse_statuses(std::span<const std::uint8_t> statuses);

/// 1 iff any entry in (t, t+p] has failure_status = 1. Throws
/// std::out_of_range when the stream ends (or breaks at a gap) before either
/// a failure or the full horizon has been seen.
bool label_window(const GpuSeries& series, std::size_t end_index, int p);

struct Placement {
  std::size_t end = 0;  // index of the last entry of the observation window
  bool label = false;

  bool operator==(const Placement&) const = default;
};

/// Window placement over a collapsed status sequence. `gap_before[i]` marks a
/// time gap between entries i-1 and i; pass an empty span for a gap-free
/// series.
std::vector<Placement> place_windows(std::span<const std::uint8_t> failure,
                                     std::span<const std::uint8_t> gap_before,
                                     const WindowingParams& params, Windowing mode);

/// Observation window of one GPU (pre-encoding rows).
struct RawInstance {
  std::shared_ptr<const GpuSeries> series;
  std::size_t start = 0;
  int length = 0;
  bool label = false;
  std::int64_t end_timestamp = 0;
  std::uint64_t id = 0;  // (gpu ordinal << 32) | end_timestamp / 10

  std::span<const GpuRecord> rows() const {
    return std::span<const GpuRecord>(series->records).subspan(start, length);
  }
  const std::string& serial() const { return series->serial; }
};

std::vector<RawInstance> segment_instances(std::shared_ptr<const GpuSeries> series,
                                           const WindowingParams& params,
                                           std::uint32_t gpu_ordinal = 0);
std::vector<RawInstance> slide_instances(std::shared_ptr<const GpuSeries> series,
                                         const WindowingParams& params,
                                         std::uint32_t gpu_ordinal = 0);

struct Dataset {
  std::vector<RawInstance> instances;

  std::size_t size() const { return instances.size(); }
  std::size_t positives() const;
  std::size_t negatives() const { return size() - positives(); }
};

/// All instances of a store, computed once and then sliced by time.
class InstancePool {
 public:
  InstancePool(std::span<const GpuRecord> store, const WindowingParams& params,
               Windowing mode = Windowing::Sliding);

  /// Instances whose end_timestamp lies in `range`; with `horizon_limit`, also
  /// requires end_timestamp + p entries <= horizon_limit (no label leakage).
  Dataset select(const TimeRange& range, std::optional<std::int64_t> horizon_limit = {}) const;

  const WindowingParams& params() const { return params_; }
  std::span<const RawInstance> all() const { return instances_; }
  std::span<const std::shared_ptr<const GpuSeries>> series() const { return series_; }

 private:
  WindowingParams params_;
  std::vector<std::shared_ptr<const GpuSeries>> series_;
  std::vector<RawInstance> instances_;  // canonical: by serial, then end_timestamp
};

/// Per-GPU collapse -> windowing -> concatenation, restricted to end
/// timestamps inside `split`.
Dataset build_dataset(std::span<const GpuRecord> store, const WindowingParams& params,
                      const TimeRange& split, Windowing mode = Windowing::Sliding);

/// One instance per line: serial, end_timestamp, label, static columns, then
/// the l x 5 matrix of dynamic readings in row-major order.
void write_dataset(std::ostream& out, const Dataset& data, const WindowingParams& params);

}  // namespace gpufail::dataset
