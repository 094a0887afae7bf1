#include "gpufail/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>

#include <json.hpp>

namespace gpufail::telemetry {

namespace {

enum class Workload { Idle, Inference, Training };

struct WorkloadProfile {
  double sm_mean, sm_sd;
  double mem_mean, mem_sd;
  double power_frac, power_sd_frac;
  double temp_target;
  double mean_dwell_hours;
};

constexpr WorkloadProfile kProfiles[] = {
    {1.0, 1.0, 3.0, 2.0, 0.12, 0.02, 34.0, 3.0},       // idle
    {50.0, 12.0, 35.0, 8.0, 0.45, 0.05, 54.0, 8.0},    // inference
    {93.0, 4.0, 80.0, 6.0, 0.85, 0.04, 72.0, 14.0},    // training
};

double tdp_for(std::string_view gpu_type) {
  if (gpu_type == "V100") return 300.0;
  if (gpu_type == "T4") return 70.0;
  return 75.0;
}

// Base (pre-signature) values of one tick.
struct Sample {
  double temperature, power, sm_util, mem_util;
  std::int64_t uptime;
  bool failed;
};

struct Episode {
  int begin, end;  // tick range [begin, end)
  Cause cause;
  double magnitude;
  std::uint64_t seed;
  bool failure;
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Cause sample_cause(const std::array<double, kCauseCount>& mix, std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : mix) total += w;
  if (total <= 0.0) return Cause::ThermalRamp;
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t c = 0; c < kCauseCount; ++c) {
    u -= mix[c];
    if (u < 0.0) return static_cast<Cause>(c);
  }
  return static_cast<Cause>(kCauseCount - 1);
}

void apply_signature(const Episode& ep, double tdp, std::vector<Sample>& samples) {
  std::mt19937_64 rng(ep.seed);
  std::uniform_int_distribution<int> coin(0, 1);
  const int len = ep.end - ep.begin;
  for (int k = ep.begin; k < ep.end; ++k) {
    Sample& x = samples[k];
    const double s = ep.magnitude * static_cast<double>(k - ep.begin + 1) / len;
    const double sc = std::min(1.0, s);
    switch (ep.cause) {
      case Cause::ThermalRamp:
        x.temperature += 22.0 * s;
        x.power += 0.12 * tdp * s;
        break;
      case Cause::PowerSpikes:
        x.power += ((k - ep.begin) % 2 == 0 ? 0.55 : -0.25) * tdp * s;
        x.temperature += 3.0 * s;
        break;
      case Cause::MemoryLeak:
        x.mem_util += (100.0 - x.mem_util) * sc;
        x.sm_util -= 10.0 * s;
        break;
      case Cause::SmStall:
        x.sm_util -= x.sm_util * sc;
        x.power -= (x.power - 0.1 * tdp) * 0.7 * sc;
        x.mem_util += (90.0 - x.mem_util) * 0.6 * sc;
        break;
      case Cause::ThermalThrottle:
        x.temperature += 14.0 * s;
        x.power -= 0.35 * tdp * s;
        x.sm_util -= 25.0 * s;
        break;
      case Cause::UtilJitter:
        x.sm_util += (coin(rng) ? 40.0 : -40.0) * s;
        x.mem_util += (coin(rng) ? 25.0 : -25.0) * s;
        break;
    }
  }
}

int to_int(double v, int lo, int hi) {
  return static_cast<int>(std::clamp(std::lround(v), static_cast<long>(lo), static_cast<long>(hi)));
}

struct GpuOutput {
  GpuStream stream;
  std::vector<FailureEvent> failures;
  std::vector<DecoyEvent> decoys;
};

GpuOutput simulate_gpu(const FleetConfig& config, const StaticConfig& gpu, int dc_index) {
  std::mt19937_64 rng(splitmix64(config.seed ^ fnv1a64(gpu.serial)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double tdp = tdp_for(gpu.gpu_type);
  const double ambient = 2.5 * (dc_index % 3) - 2.0;
  const bool driver_418 = gpu.driver_version == "418";
  const bool is_v100 = gpu.gpu_type == "V100";
  const bool is_t4 = gpu.gpu_type == "T4";
  const int ticks = config.horizon_days * static_cast<int>(kTicksPerDay);
  const std::int64_t t0 = start_minutes(config);

  std::vector<Sample> samples(ticks);
  std::vector<Episode> episodes;
  GpuOutput out;

  auto workload = Workload::Idle;
  auto draw_dwell = [&](Workload w) {
    const double mean_ticks = kProfiles[static_cast<int>(w)].mean_dwell_hours * 6.0;
    return std::max(1, static_cast<int>(std::lround(-mean_ticks * std::log(1.0 - unit(rng)))));
  };
  int dwell = draw_dwell(workload);
  double temperature = 34.0 + ambient;
  std::int64_t uptime = static_cast<std::int64_t>(unit(rng) * 40.0 * 86400.0) / 600 * 600;

  constexpr int kHistory = 18;
  std::array<double, kHistory> temp_hist{}, sm_hist{};
  double temp_sum = 0.0, sm_sum = 0.0;
  int hist_count = 0;

  int failed_until = -1;  // tick of repair; failure active while t < failed_until
  int healthy_since = 0;  // first tick after the latest repair
  int decoy_until = -1;
  std::size_t decoy_episode = 0;

  for (int t = 0; t < ticks; ++t) {
    const std::size_t ri = regime_index_at(static_cast<double>(t) / kTicksPerDay, config.drift);
    const Regime& regime = config.drift.regimes[ri].regime;
    Sample& x = samples[t];

    if (t < failed_until) {
      temperature += 0.3 * (30.0 + ambient - temperature);
      x = {temperature, 0.08 * tdp, 0.0, 0.0, uptime, true};
      uptime += 600;
      continue;
    }
    if (t == failed_until) {
      uptime = 0;  // repaired machine reboots
      workload = Workload::Idle;
      dwell = draw_dwell(workload);
      hist_count = 0;
      temp_sum = sm_sum = 0.0;
    }

    if (--dwell <= 0) {
      const double u = unit(rng);
      switch (workload) {
        case Workload::Idle: workload = u < 0.5 ? Workload::Inference : Workload::Training; break;
        case Workload::Inference: workload = u < 0.5 ? Workload::Idle : Workload::Training; break;
        case Workload::Training: workload = u < 0.6 ? Workload::Idle : Workload::Inference; break;
      }
      dwell = draw_dwell(workload);
    }
    const WorkloadProfile& prof = kProfiles[static_cast<int>(workload)];
    const double sm = std::clamp(prof.sm_mean + prof.sm_sd * normal(rng), 0.0, 100.0);
    const double mem = std::clamp(prof.mem_mean + prof.mem_sd * normal(rng), 0.0, 100.0);
    const double power = tdp * (prof.power_frac + prof.power_sd_frac * normal(rng));
    temperature += 0.35 * (prof.temp_target + ambient - temperature) + 0.8 * normal(rng);
    x = {temperature, power, sm, mem, uptime, false};
    uptime += 600;

    const int slot = hist_count % kHistory;
    if (hist_count >= kHistory) {
      temp_sum -= temp_hist[slot];
      sm_sum -= sm_hist[slot];
    }
    temp_hist[slot] = temperature;
    sm_hist[slot] = sm;
    temp_sum += temperature;
    sm_sum += sm;
    ++hist_count;
    const double n = std::min(hist_count, kHistory);

    const HazardWeights& w = regime.weights;
    const double logit = regime.base_logit + w.temperature * ((temp_sum / n - 60.0) / 10.0) +
                         w.sm_util * (sm_sum / n / 100.0 - 0.5) +
                         w.uptime * (static_cast<double>(x.uptime) / (30.0 * 86400.0)) +
                         (driver_418 ? w.driver_418 : 0.0) + (is_v100 ? w.v100 : 0.0) +
                         (is_t4 ? w.t4 : 0.0);
    if (unit(rng) < sigmoid(logit)) {
      const Cause cause = sample_cause(regime.cause_mix, rng);
      const int span = std::uniform_int_distribution<int>(regime.precursor_min_ticks,
                                                          regime.precursor_max_ticks)(rng);
      const double magnitude =
          std::uniform_real_distribution<double>(regime.min_magnitude, regime.max_magnitude)(rng);
      const int begin = std::max({0, healthy_since, t - span});
      const double delay_hours = std::uniform_real_distribution<double>(
          config.repair_delay.min_hours, config.repair_delay.max_hours)(rng);
      const int delay_ticks = std::max(1, static_cast<int>(std::lround(delay_hours * 6.0)));

      // A decoy running into the precursor is cut short at the precursor start.
      if (decoy_until > begin && !episodes.empty()) {
        Episode& d = episodes[decoy_episode];
        d.end = std::max(d.begin, begin);
        decoy_until = d.end;
      }
      if (t > begin) {
        episodes.push_back({begin, t, cause, magnitude, rng(), true});
      }
      out.failures.push_back({gpu.serial, t0 + t * kTickMinutes,
                              t0 + std::min<std::int64_t>(t + delay_ticks, ticks) * kTickMinutes,
                              cause, ri, t - begin});
      failed_until = t + delay_ticks;
      healthy_since = failed_until;
      temperature += 0.3 * (30.0 + ambient - temperature);
      x = {temperature, 0.08 * tdp, 0.0, 0.0, x.uptime, true};
      continue;
    }

    if (t >= decoy_until) {
      for (std::size_t c = 0; c < kCauseCount; ++c) {
        if (regime.decoy_rate[c] <= 0.0) continue;
        if (unit(rng) < regime.decoy_rate[c] / kTicksPerDay) {
          const int span = std::uniform_int_distribution<int>(regime.precursor_min_ticks,
                                                              regime.precursor_max_ticks)(rng);
          const double magnitude = std::uniform_real_distribution<double>(
              regime.min_magnitude, regime.max_magnitude)(rng);
          decoy_episode = episodes.size();
          episodes.push_back(
              {t, std::min(t + span, ticks), static_cast<Cause>(c), magnitude, rng(), false});
          decoy_until = t + span;
          break;
        }
      }
    }
  }

  for (const Episode& ep : episodes) {
    if (ep.end <= ep.begin) continue;
    apply_signature(ep, tdp, samples);
    if (!ep.failure) {
      out.decoys.push_back({gpu.serial, t0 + ep.begin * kTickMinutes, t0 + ep.end * kTickMinutes,
                            ep.cause});
    }
  }

  out.stream.serial = gpu.serial;
  out.stream.records.reserve(ticks);
  for (int t = 0; t < ticks; ++t) {
    const Sample& x = samples[t];
    out.stream.records.push_back({t0 + t * kTickMinutes, to_int(x.temperature, 21, 89),
                                  to_int(x.power, 0, 399), to_int(x.sm_util, 0, 100),
                                  to_int(x.mem_util, 0, 100), x.uptime, x.failed});
  }
  return out;
}

std::vector<StaticConfig> make_inventory(const FleetConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, "inventory"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<StaticConfig> inventory;
  inventory.reserve(config.n_gpus);
  const int machines = (config.n_gpus + 7) / 8;
  for (int m = 0; m < machines; ++m) {
    const int dc = static_cast<int>(unit(rng) * config.datacenters);
    const double u = unit(rng);
    const std::string gpu_type = u < 0.4 ? "V100" : (u < 0.75 ? "T4" : "P4");
    const std::string driver = unit(rng) < 0.5 ? "418" : "450";
    const auto expiration = static_cast<std::int32_t>(config.start_day + 60 + unit(rng) * 1400);
    char rack[32], ip[32];
    std::snprintf(rack, sizeof rack, "dc%d-rack%03d", dc + 1, m / 4);
    std::snprintf(ip, sizeof ip, "10.%d.%d.%d", dc + 1, m / 250, m % 250 + 2);
    for (int pos = 0; pos < 8 && m * 8 + pos < config.n_gpus; ++pos) {
      char serial[32];
      std::snprintf(serial, sizeof serial, "GPU-%06d", m * 8 + pos);
      inventory.push_back({serial, "dc" + std::to_string(dc + 1), gpu_type, driver, expiration,
                           rack, pos, ip});
    }
  }
  return inventory;
}

}  // namespace

std::string_view cause_name(Cause c) {
  switch (c) {
    case Cause::ThermalRamp: return "thermal_ramp";
    case Cause::PowerSpikes: return "power_spikes";
    case Cause::MemoryLeak: return "memory_leak";
    case Cause::SmStall: return "sm_stall";
    case Cause::ThermalThrottle: return "thermal_throttle";
    case Cause::UtilJitter: return "util_jitter";
  }
  return "unknown";
}

void DriftSchedule::validate() const {
  if (regimes.empty()) throw ConfigError("drift schedule has no regimes");
  for (std::size_t i = 1; i < regimes.size(); ++i) {
    if (!(regimes[i].start_day > regimes[i - 1].start_day)) {
      throw ConfigError("drift regime start days must be strictly increasing");
    }
  }
}

std::size_t regime_index_at(double day, const DriftSchedule& schedule) {
  if (schedule.regimes.empty()) throw std::invalid_argument("empty drift schedule");
  if (day < schedule.regimes.front().start_day) {
    throw std::out_of_range("day precedes the first regime start");
  }
  auto it = std::upper_bound(schedule.regimes.begin(), schedule.regimes.end(), day,
                             [](double d, const RegimeStart& r) { return d < r.start_day; });
  return static_cast<std::size_t>(std::distance(schedule.regimes.begin(), it)) - 1;
}

const Regime& regime_at(double day, const DriftSchedule& schedule) {
  return schedule.regimes[regime_index_at(day, schedule)].regime;
}

void FleetConfig::validate() const {
  if (n_gpus < 1) throw ConfigError("n_gpus must be positive");
  if (horizon_days < 1) throw ConfigError("horizon_days must be positive");
  if (datacenters < 1) throw ConfigError("datacenters must be positive");
  if (repair_delay.min_hours <= 0.0 || repair_delay.max_hours < repair_delay.min_hours) {
    throw ConfigError("repair_delay must satisfy 0 < min_hours <= max_hours");
  }
  drift.validate();
  if (drift.regimes.front().start_day > 0.0) {
    throw ConfigError("first drift regime must start at day 0");
  }
  for (const auto& r : drift.regimes) {
    const Regime& g = r.regime;
    if (g.precursor_min_ticks < 1 || g.precursor_max_ticks < g.precursor_min_ticks) {
      throw ConfigError("regime '" + g.name + "': bad precursor tick range");
    }
    for (std::size_t c = 0; c < kCauseCount; ++c) {
      if (g.cause_mix[c] < 0.0 || g.decoy_rate[c] < 0.0) {
        throw ConfigError("regime '" + g.name + "': negative cause weight or decoy rate");
      }
    }
  }
}

std::int64_t start_minutes(const FleetConfig& config) {
  return static_cast<std::int64_t>(config.start_day) * kMinutesPerDay;
}

Fleet generate_fleet(const FleetConfig& config) {
  config.validate();
  Fleet fleet;
  fleet.inventory = make_inventory(config);

  std::vector<GpuOutput> outputs(fleet.inventory.size());
  parallel_for(outputs.size(), [&](std::size_t i) {
    const StaticConfig& gpu = fleet.inventory[i];
    const int dc = std::stoi(gpu.datacenter.substr(2)) - 1;
    outputs[i] = simulate_gpu(config, gpu, dc);
  });

  fleet.streams.reserve(outputs.size());
  for (auto& o : outputs) {
    fleet.streams.push_back(std::move(o.stream));
    fleet.failures.insert(fleet.failures.end(), o.failures.begin(), o.failures.end());
    fleet.decoys.insert(fleet.decoys.end(), o.decoys.begin(), o.decoys.end());
  }
  return fleet;
}

void write_telemetry_jsonl(std::ostream& out, const std::vector<GpuStream>& streams) {
  for (const auto& s : streams) {
    const std::string serial = nlohmann::json(s.serial).dump();
    for (const auto& r : s.records) {
      out << "{\"serial\":" << serial << ",\"timestamp\":" << r.timestamp
          << ",\"temperature\":" << r.temperature << ",\"power\":" << r.power
          << ",\"sm_util\":" << r.sm_util << ",\"mem_util\":" << r.mem_util
          << ",\"uptime\":" << r.uptime << ",\"failure_status\":" << (r.failure_status ? 1 : 0)
          << "}\n";
    }
  }
}

void write_inventory_jsonl(std::ostream& out, const std::vector<StaticConfig>& inventory) {
  for (const auto& g : inventory) {
    nlohmann::ordered_json j;
    j["serial"] = g.serial;
    j["datacenter"] = g.datacenter;
    j["gpu_type"] = g.gpu_type;
    j["driver_version"] = g.driver_version;
    j["expiration_date"] = format_date(g.expiration_date);
    j["rack"] = g.rack;
    j["position"] = g.position;
    j["ip"] = g.ip;
    out << j.dump() << '\n';
  }
}

std::vector<StaticConfig> read_inventory_jsonl(std::istream& in) {
  std::vector<StaticConfig> inventory;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      inventory.push_back({j.at("serial").get<std::string>(),
                           j.at("datacenter").get<std::string>(),
                           j.at("gpu_type").get<std::string>(),
                           j.at("driver_version").get<std::string>(),
                           parse_date(j.at("expiration_date").get<std::string>()),
                           j.at("rack").get<std::string>(), j.at("position").get<int>(),
                           j.at("ip").get<std::string>()});
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return inventory;
}

}  // namespace gpufail::telemetry
