#include "gpufail/collection.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

namespace gpufail::collection {

using telemetry::StaticConfig;

std::optional<Attribute> attribute_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kAttributeNames.size(); ++i) {
    if (kAttributeNames[i] == name) return static_cast<Attribute>(i);
  }
  return std::nullopt;
}

void CollectingPolicy::validate() const {
  if (attributes_to_collect.empty()) throw ConfigError("collecting policy has no attributes");
  for (const auto& name : attributes_to_collect) {
    if (!attribute_from_name(name)) {
      throw ConfigError("collecting policy names unknown attribute '" + name + "'");
    }
  }
  if (period_minutes <= 0 || kMinutesPerDay % period_minutes != 0 ||
      period_minutes % kTickMinutes != 0) {
    throw ConfigError("collecting period must divide 24h into whole 10-minute ticks, got " +
                      std::to_string(period_minutes));
  }
}

bool CollectingPolicy::collects(Attribute a) const {
  return attributes_to_collect.count(std::string(kAttributeNames[static_cast<int>(a)])) > 0;
}

CollectingPolicy CollectingPolicy::all_attributes(int period_minutes) {
  CollectingPolicy p;
  for (auto name : kAttributeNames) p.attributes_to_collect.emplace(name);
  p.period_minutes = period_minutes;
  return p;
}

DynamicValues DynamicValues::from(const telemetry::TelemetryRecord& r) {
  DynamicValues v;
  v.timestamp = r.timestamp;
  v.set_temperature(r.temperature);
  v.set_power(r.power);
  v.set_sm_util(r.sm_util);
  v.set_mem_util(r.mem_util);
  v.set_uptime(r.uptime);
  v.set_failure_status(r.failure_status);
  return v;
}

bool DynamicValues::operator==(const DynamicValues& o) const {
  return timestamp == o.timestamp && temperature() == o.temperature() && power() == o.power() &&
         sm_util() == o.sm_util() && mem_util() == o.mem_util() && uptime() == o.uptime() &&
         failure_status() == o.failure_status();
}

bool GpuRecord::operator==(const GpuRecord& o) const {
  const bool same_config = config == o.config || (config && o.config && *config == *o.config);
  return same_config && values == o.values;
}

Agent::Agent(std::string name, std::vector<const telemetry::GpuStream*> gpus)
    : name_(std::move(name)), gpus_(std::move(gpus)), failed_(gpus_.size(), false) {
  if (gpus_.size() > 8) {
    throw ConfigError("agent '" + name_ + "' owns " + std::to_string(gpus_.size()) +
                      " GPUs; machines hold at most 8");
  }
}

Acknowledgement Agent::apply(const CollectingPolicy& policy) {
  policy_ = policy;
  return {name_, true};
}

TickOutput Agent::tick(std::size_t tick) {
  TickOutput out;
  const auto stride = static_cast<std::size_t>(policy_.period_minutes / kTickMinutes);
  const bool sample = tick % stride == 0;
  for (std::size_t g = 0; g < gpus_.size(); ++g) {
    const auto& records = gpus_[g]->records;
    if (tick >= records.size()) continue;
    const telemetry::TelemetryRecord& r = records[tick];

    // Failure detection runs every tick regardless of the sampling period.
    if (r.failure_status && !failed_[g]) {
      out.reports.push_back({gpus_[g]->serial, r.timestamp,
                             {{"agent", name_},
                              {"temperature", std::to_string(r.temperature)},
                              {"power", std::to_string(r.power)}}});
    }
    failed_[g] = r.failure_status;

    if (!sample) continue;
    DynamicValues v = DynamicValues::from(r);
    for (std::size_t a = 0; a < kAttributeNames.size(); ++a) {
      if (!policy_.collects(static_cast<Attribute>(a))) v.clear(static_cast<Attribute>(a));
    }
    out.records.push_back({gpus_[g]->serial, v});
  }
  return out;
}

std::vector<Acknowledgement> Controller::broadcast(const CollectingPolicy& policy,
                                                   std::span<Agent> agents) const {
  policy.validate();
  std::vector<Acknowledgement> acks;
  acks.reserve(agents.size());
  for (auto& agent : agents) acks.push_back(agent.apply(policy));
  return acks;
}

Collector::Collector(std::vector<StaticConfig> inventory) : inventory_(std::move(inventory)) {}

void Collector::receive(Message message) {
  if (auto* r = std::get_if<CollectedRecord>(&message)) {
    received_.push_back(std::move(*r));
  } else {
    reports_.push_back(std::move(std::get<FailureReport>(message)));
  }
}

namespace {

std::tuple<std::int64_t, std::optional<int>, std::optional<int>, std::optional<int>,
           std::optional<int>, std::optional<std::int64_t>, std::optional<bool>>
value_key(const DynamicValues& v) {
  return {v.timestamp, v.temperature(), v.power(), v.sm_util(), v.mem_util(), v.uptime(),
          v.failure_status()};
}

}  // namespace

std::vector<GpuRecord> Collector::records() const {
  std::vector<std::size_t> order(received_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = received_[a];
    const auto& rb = received_[b];
    if (ra.serial != rb.serial) return ra.serial < rb.serial;
    return value_key(ra.values) < value_key(rb.values);
  });
  std::vector<CollectedRecord> unique;
  unique.reserve(order.size());
  for (std::size_t i : order) {
    const auto& r = received_[i];
    if (!unique.empty() && unique.back().serial == r.serial &&
        unique.back().values.timestamp == r.values.timestamp) {
      continue;
    }
    unique.push_back(r);
  }
  return join_records(unique, inventory_);
}

std::vector<FailureReport> Collector::reports() const {
  auto out = reports_;
  std::sort(out.begin(), out.end(), [](const FailureReport& a, const FailureReport& b) {
    return std::tie(a.serial, a.timestamp) < std::tie(b.serial, b.timestamp);
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const FailureReport& a, const FailureReport& b) {
                          return a.serial == b.serial && a.timestamp == b.timestamp;
                        }),
            out.end());
  return out;
}

std::vector<GpuRecord> join_records(std::span<const CollectedRecord> dynamic,
                                    std::span<const StaticConfig> inventory) {
  std::unordered_map<std::string, std::shared_ptr<const StaticConfig>> by_serial;
  by_serial.reserve(inventory.size());
  for (const auto& row : inventory) {
    StaticConfig joined = row;
    joined.rack = row.datacenter;
    if (!by_serial.emplace(row.serial, std::make_shared<const StaticConfig>(std::move(joined)))
             .second) {
      throw ConfigError("inventory lists serial '" + row.serial + "' more than once");
    }
  }
  std::vector<GpuRecord> out;
  out.reserve(dynamic.size());
  for (const auto& r : dynamic) {
    auto it = by_serial.find(r.serial);
    if (it == by_serial.end()) throw JoinError(r.serial);
    out.push_back({it->second, r.values});
  }
  return out;
}

CollectionResult simulate_collection(const telemetry::Fleet& fleet,
                                     const CollectingPolicy& policy) {
  std::map<std::string, std::vector<const telemetry::GpuStream*>> machines;
  std::size_t ticks = 0;
  for (std::size_t i = 0; i < fleet.inventory.size(); ++i) {
    machines[fleet.inventory[i].ip].push_back(&fleet.streams[i]);
    ticks = std::max(ticks, fleet.streams[i].records.size());
  }
  std::vector<Agent> agents;
  agents.reserve(machines.size());
  for (auto& [ip, gpus] : machines) agents.emplace_back("agent@" + ip, std::move(gpus));

  CollectionResult result;
  result.acknowledgements = Controller{}.broadcast(policy, agents);

  Collector collector(fleet.inventory);
  std::deque<Message> queue;
  for (std::size_t t = 0; t < ticks; ++t) {
    for (auto& agent : agents) {
      TickOutput out = agent.tick(t);
      for (auto& r : out.records) queue.emplace_back(std::move(r));
      for (auto& r : out.reports) queue.emplace_back(std::move(r));
    }
    while (!queue.empty()) {
      collector.receive(std::move(queue.front()));
      queue.pop_front();
    }
  }
  result.records = collector.records();
  result.reports = collector.reports();
  return result;
}

const std::string_view kRawHeader =
    "serial,timestamp,temperature,power,sm_util,mem_util,uptime,failure_status,"
    "datacenter,gpu_type,driver_version,expiration_date,rack,position,ip";

namespace {

template <typename T>
void put_optional(std::string& line, const std::optional<T>& v) {
  if (v) {
    line += std::to_string(*v);
  } else {
    line += "NA";
  }
  line += ',';
}

void append_line(std::string& line, const GpuRecord& r) {
  const StaticConfig& c = *r.config;
  const DynamicValues& v = r.values;
  line += c.serial;
  line += ',';
  line += std::to_string(v.timestamp);
  line += ',';
  put_optional(line, v.temperature());
  put_optional(line, v.power());
  put_optional(line, v.sm_util());
  put_optional(line, v.mem_util());
  put_optional(line, v.uptime());
  const auto failure = v.failure_status();
  put_optional(line, failure ? std::optional<int>(*failure ? 1 : 0) : std::nullopt);
  line += c.datacenter + ',' + c.gpu_type + ',' + c.driver_version + ',' +
          format_date(c.expiration_date) + ',' + c.rack + ',' + std::to_string(c.position) + ',' +
          c.ip + '\n';
}

void write_records(std::ostream& out, std::span<const GpuRecord> records) {
  std::string line;
  for (const auto& r : records) {
    line.clear();
    append_line(line, r);
    out << line;
  }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const char* name) {
  T value{};
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || p != field.data() + field.size()) {
    throw std::invalid_argument(std::string("bad ") + name + " '" + std::string(field) + "'");
  }
  return value;
}

template <typename T>
std::optional<T> parse_optional(std::string_view field, const char* name) {
  if (field == "NA") return std::nullopt;
  return parse_number<T>(field, name);
}

}  // namespace

void write_raw(const std::string& path, std::span<const GpuRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kRawHeader << '\n';
  write_records(out, records);
  if (!out) throw std::runtime_error("failed writing " + path);
}

RawStoreWriter::RawStoreWriter(const std::string& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  std::string header;
  if (in && std::getline(in, header)) {
    if (header != kRawHeader) throw ParseError(1, "unexpected raw dataset header in " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kRawHeader << '\n';
}

void RawStoreWriter::append(std::span<const GpuRecord> records) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path_);
  write_records(out, records);
}

std::vector<GpuRecord> read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_raw(in);
}

std::vector<GpuRecord> read_raw(std::istream& in) {
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<GpuRecord> out;
  std::unordered_map<std::string, std::shared_ptr<const StaticConfig>> configs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    ++line_no;
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(line_no, "truncated line (no terminating newline)");
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (line_no == 1) {
      if (line != kRawHeader) throw ParseError(line_no, "unexpected raw dataset header");
      continue;
    }
    try {
      const auto f = split(line, ',');
      if (f.size() != 15) {
        throw std::invalid_argument("expected 15 fields, got " + std::to_string(f.size()));
      }
      if (f[0].empty()) throw std::invalid_argument("empty serial");
      DynamicValues v;
      v.timestamp = parse_number<std::int64_t>(f[1], "timestamp");
      if (auto x = parse_optional<int>(f[2], "temperature")) v.set_temperature(*x);
      if (auto x = parse_optional<int>(f[3], "power")) v.set_power(*x);
      if (auto x = parse_optional<int>(f[4], "sm_util")) v.set_sm_util(*x);
      if (auto x = parse_optional<int>(f[5], "mem_util")) v.set_mem_util(*x);
      if (auto x = parse_optional<std::int64_t>(f[6], "uptime")) v.set_uptime(*x);
      if (auto x = parse_optional<int>(f[7], "failure_status")) {
        if (*x != 0 && *x != 1) throw std::invalid_argument("failure_status must be 0 or 1");
        v.set_failure_status(*x == 1);
      }
      StaticConfig c{std::string(f[0]),
                     std::string(f[8]),
                     std::string(f[9]),
                     std::string(f[10]),
                     parse_date(f[11]),
                     std::string(f[12]),
                     parse_number<int>(f[13], "position"),
                     std::string(f[14])};
      auto [it, inserted] = configs.try_emplace(c.serial);
      if (inserted) {
        it->second = std::make_shared<const StaticConfig>(std::move(c));
      } else if (!(*it->second == c)) {
        throw std::invalid_argument("static fields of serial '" + c.serial + "' changed");
      }
      out.push_back({it->second, v});
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (line_no == 0) throw ParseError(1, "missing raw dataset header");
  return out;
}

CollectingPolicy read_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("policy file " + path + ": " + e.what());
  }
  CollectingPolicy p;
  for (const auto& a : j.at("attributes")) p.attributes_to_collect.insert(a.get<std::string>());
  p.period_minutes = j.value("period_minutes", 10);
  p.validate();
  return p;
}

void write_policy(const std::string& path, const CollectingPolicy& policy) {
  nlohmann::ordered_json j;
  j["attributes"] = policy.attributes_to_collect;
  j["period_minutes"] = policy.period_minutes;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace gpufail::collection
