#pragma once

// Simulated collection pipeline: a controller broadcasts a collecting policy
// to per-machine agents, agents sample their GPUs and report failures, and a
// collector joins dynamic samples with the static inventory by serial number
// into the raw dataset.

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gpufail/telemetry.hpp"

namespace gpufail::collection {

enum class Attribute : std::uint8_t {
  Temperature = 0,
  Power,
  SmUtil,
  MemUtil,
  Uptime,
  FailureStatus,
};
inline constexpr std::array<std::string_view, 6> kAttributeNames = {
    "temperature", "power", "sm_util", "mem_util", "uptime", "failure_status"};

std::optional<Attribute> attribute_from_name(std::string_view name);

struct CollectingPolicy {
  std::set<std::string> attributes_to_collect;
  int period_minutes = 10;

  /// Throws ConfigError on an empty or unknown attribute set, or a period that
  /// does not divide a day in whole collection ticks.
  void validate() const;
  bool collects(Attribute a) const;

  static CollectingPolicy all_attributes(int period_minutes = 10);
};

/// Dynamic values of one sample. Attributes outside the collecting policy
/// are absent (their presence bit is clear).
class DynamicValues {
 public:
  std::int64_t timestamp = 0;

  static DynamicValues from(const telemetry::TelemetryRecord& r);

  bool has(Attribute a) const { return (present_ >> static_cast<int>(a)) & 1u; }
  void clear(Attribute a) { present_ &= static_cast<std::uint8_t>(~(1u << static_cast<int>(a))); }

  std::optional<int> temperature() const { return get_int(Attribute::Temperature, temperature_); }
  std::optional<int> power() const { return get_int(Attribute::Power, power_); }
  std::optional<int> sm_util() const { return get_int(Attribute::SmUtil, sm_util_); }
  std::optional<int> mem_util() const { return get_int(Attribute::MemUtil, mem_util_); }
  std::optional<std::int64_t> uptime() const {
    return has(Attribute::Uptime) ? std::optional<std::int64_t>(uptime_) : std::nullopt;
  }
  std::optional<bool> failure_status() const {
    return has(Attribute::FailureStatus) ? std::optional<bool>(failure_) : std::nullopt;
  }

  void set_temperature(int v) { temperature_ = v; mark(Attribute::Temperature); }
  void set_power(int v) { power_ = v; mark(Attribute::Power); }
  void set_sm_util(int v) { sm_util_ = v; mark(Attribute::SmUtil); }
  void set_mem_util(int v) { mem_util_ = v; mark(Attribute::MemUtil); }
  void set_uptime(std::int64_t v) { uptime_ = v; mark(Attribute::Uptime); }
  void set_failure_status(bool v) { failure_ = v; mark(Attribute::FailureStatus); }

  bool operator==(const DynamicValues& o) const;

 private:
  std::optional<int> get_int(Attribute a, std::int32_t v) const {
    return has(a) ? std::optional<int>(v) : std::nullopt;
  }
  void mark(Attribute a) { present_ |= static_cast<std::uint8_t>(1u << static_cast<int>(a)); }

  std::int64_t uptime_ = 0;
  std::int32_t temperature_ = 0, power_ = 0, sm_util_ = 0, mem_util_ = 0;
  std::uint8_t present_ = 0;
  bool failure_ = false;
};

struct CollectedRecord {
  std::string serial;
  DynamicValues values;
};

struct FailureReport {
  std::string serial;
  std::int64_t timestamp = 0;
  std::map<std::string, std::string> context;
};

/// A dynamic sample joined with its GPU's static row. The static row is
/// shared by all records of one GPU; its rack is reduced to the datacenter.
struct GpuRecord {
  std::shared_ptr<const telemetry::StaticConfig> config;
  DynamicValues values;

  const std::string& serial() const { return config->serial; }
  std::int64_t timestamp() const { return values.timestamp; }
  bool operator==(const GpuRecord& o) const;
};

class JoinError : public std::runtime_error {
 public:
  explicit JoinError(const std::string& serial)
      : std::runtime_error("no static configuration for serial '" + serial + "'"),
        serial_(serial) {}
  const std::string& serial() const { return serial_; }

 private:
  std::string serial_;
};

struct Acknowledgement {
  std::string agent;
  bool accepted = false;
};

struct TickOutput {
  std::vector<CollectedRecord> records;
  std::vector<FailureReport> reports;
};

/// Daemon on one machine (at most 8 GPUs). Replays the GPUs' telemetry
/// streams, sampling them per the active policy.
class Agent {
 public:
  Agent(std::string name, std::vector<const telemetry::GpuStream*> gpus);

  const std::string& name() const { return name_; }
  Acknowledgement apply(const CollectingPolicy& policy);
  const CollectingPolicy& policy() const { return policy_; }

  /// Index of the 10-minute tick within the owned streams.
  TickOutput tick(std::size_t tick);

 private:
  std::string name_;
  std::vector<const telemetry::GpuStream*> gpus_;
  std::vector<bool> failed_;
  CollectingPolicy policy_ = CollectingPolicy::all_attributes();
};

class Controller {
 public:
  /// Validates the policy, then pushes it to every agent.
  std::vector<Acknowledgement> broadcast(const CollectingPolicy& policy,
                                         std::span<Agent> agents) const;
};

using Message = std::variant<CollectedRecord, FailureReport>;

class Collector {
 public:
  explicit Collector(std::vector<telemetry::StaticConfig> inventory);

  void receive(Message message);

  /// Joined store content sorted by (serial, timestamp) with duplicate keys
  /// removed; independent of the order messages arrived in.
  std::vector<GpuRecord> records() const;
  std::vector<FailureReport> reports() const;

 private:
  std::vector<telemetry::StaticConfig> inventory_;
  std::vector<CollectedRecord> received_;
  std::vector<FailureReport> reports_;
};

struct CollectionResult {
  std::vector<GpuRecord> records;
  std::vector<FailureReport> reports;
  std::vector<Acknowledgement> acknowledgements;
};

/// Runs agents (one per machine, grouped by ip) over the whole fleet
/// horizon, routing their messages through a queue into a collector.
CollectionResult simulate_collection(const telemetry::Fleet& fleet, const CollectingPolicy& policy);

/// Joins dynamic samples with the inventory. Output keeps the input order.
std::vector<GpuRecord> join_records(std::span<const CollectedRecord> dynamic,
                                    std::span<const telemetry::StaticConfig> inventory);

// Raw dataset file: a schema header line, then one comma-separated record per
// line. Absent attributes are written as "NA".
extern const std::string_view kRawHeader;

void write_raw(const std::string& path, std::span<const GpuRecord> records);

/// Appends to an existing raw file (creating it with a header if needed).
class RawStoreWriter {
 public:
  explicit RawStoreWriter(const std::string& path);
  void append(std::span<const GpuRecord> records);

 private:
  std::string path_;
};

std::vector<GpuRecord> read_raw(const std::string& path);
std::vector<GpuRecord> read_raw(std::istream& in);

CollectingPolicy read_policy(const std::string& path);
void write_policy(const std::string& path, const CollectingPolicy& policy);

}  // namespace gpufail::collection
