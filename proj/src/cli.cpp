#include "gpufail/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpufail/collection.hpp"
#include "gpufail/config.hpp"
#include "gpufail/dataset.hpp"
#include "gpufail/harness.hpp"
#include "gpufail/telemetry.hpp"

namespace gpufail::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kHashes = "hashes.txt";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir;
};

config::RunConfig effective_config(const Options& o, bool required) {
  if (o.config_path.empty() && required) throw ConfigError("--config is required for this command");
  auto cfg = o.config_path.empty() ? config::parse_config("{}") : config::load_config(o.config_path);
  if (o.seed) cfg.apply_seed(*o.seed);
  return cfg;
}

void require_out(const Options& o) {
  if (o.out_dir.empty()) throw ConfigError("--out is required");
}

// Manifest plus the hash list of everything else in the directory.
void finish(const fs::path& dir, const std::string& command, const config::RunConfig& cfg,
            const ordered_json& inputs, const std::string& started) {
  std::ofstream(dir / kHashes).close();
  const auto hashes = hash_directory(dir.string());
  {
    auto out = open_out(dir / kHashes);
    for (const auto& [path, h] : hashes) out << h << "  " << path << '\n';
  }
  ordered_json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["config"] = ordered_json::parse(config::snapshot(cfg));
  m["seeds"] = {{"root", cfg.seed}, {"telemetry", cfg.fleet.seed}, {"harness", cfg.experiment.seed}};
  m["inputs"] = inputs;
  m["outputs"] = ordered_json::array();
  for (const auto& [path, h] : hashes) m["outputs"].push_back({{"path", path}, {"sha256", h}});
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  auto out = open_out(dir / kManifest);
  out << m.dump(2) << '\n';
}

std::vector<collection::GpuRecord> generate_records(const config::RunConfig& cfg,
                                                    telemetry::Fleet* keep_fleet = nullptr) {
  auto fleet = telemetry::generate_fleet(cfg.fleet);
  auto result = collection::simulate_collection(fleet, cfg.policy);
  if (keep_fleet) *keep_fleet = std::move(fleet);
  return std::move(result.records);
}

int cmd_generate(const Options& o, bool telemetry_jsonl, std::ostream& out) {
  require_out(o);
  const auto started = utc_now();
  const auto cfg = effective_config(o, false);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  telemetry::Fleet fleet;
  const auto records = generate_records(cfg, &fleet);
  collection::write_raw((dir / "raw.csv").string(), records);
  {
    auto inv = open_out(dir / "inventory.jsonl");
    telemetry::write_inventory_jsonl(inv, fleet.inventory);
  }
  if (telemetry_jsonl) {
    auto tel = open_out(dir / "telemetry.jsonl");
    telemetry::write_telemetry_jsonl(tel, fleet.streams);
  }
  {
    auto f = open_out(dir / "failures.csv");
    f << "serial,onset,repair,cause,regime,precursor_ticks\n";
    for (const auto& e : fleet.failures) {
      f << e.serial << ',' << e.onset << ',' << e.repair << ',' << telemetry::cause_name(e.cause) << ','
        << e.regime << ',' << e.precursor_ticks << '\n';
    }
  }
  collection::write_policy((dir / "policy.json").string(), cfg.policy);
  finish(dir, "generate", cfg, ordered_json::object(), started);
  out << "wrote " << records.size() << " records for " << fleet.inventory.size() << " GPUs to "
      << dir.string() << '\n';
  return 0;
}

std::vector<config::NamedSplit> parse_splits(const std::vector<std::string>& specs) {
  std::vector<config::NamedSplit> out;
  for (const auto& s : specs) {
    const auto a = s.find(':');
    const auto b = a == std::string::npos ? a : s.find(':', a + 1);
    if (b == std::string::npos) throw ConfigError("split '" + s + "' must be name:YYYY-MM-DD:YYYY-MM-DD");
    const TimeRange r{parse_date(s.substr(a + 1, b - a - 1)) * kMinutesPerDay,
                      parse_date(s.substr(b + 1)) * kMinutesPerDay};
    if (r.empty()) throw ConfigError("split '" + s + "' is empty");
    out.push_back({s.substr(0, a), r});
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      if (out[i].range.overlaps(out[j].range)) {
        throw ConfigError("splits '" + out[i].name + "' and '" + out[j].name + "' overlap");
      }
    }
  }
  return out;
}

int cmd_prepare(const Options& o, const std::string& raw, dataset::WindowingParams params,
                const std::string& mode, const std::vector<std::string>& split_specs,
                const CLI::App& sub, std::ostream& out) {
  require_out(o);
  const auto started = utc_now();
  auto cfg = effective_config(o, false);
  if (sub.count("--l")) cfg.windowing.l = params.l;
  if (sub.count("--p")) cfg.windowing.p = params.p;
  if (sub.count("--slide-step")) cfg.windowing.slide_step = params.slide_step;
  if (sub.count("--mode")) {
    if (mode != "sliding" && mode != "segmented") throw ConfigError("--mode must be sliding or segmented");
    cfg.windowing_mode = mode == "sliding" ? dataset::Windowing::Sliding : dataset::Windowing::Segmented;
  }
  cfg.windowing.validate();
  if (!split_specs.empty()) cfg.splits = parse_splits(split_specs);
  if (cfg.splits.empty()) throw ConfigError("no splits given (use --split or config.splits)");

  const auto records = collection::read_raw(raw);
  const dataset::InstancePool pool(records, cfg.windowing, cfg.windowing_mode);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  for (const auto& s : cfg.splits) {
    const auto d = pool.select(s.range);
    auto f = open_out(dir / (s.name + ".csv"));
    dataset::write_dataset(f, d, cfg.windowing);
    out << s.name << ": " << d.size() << " instances (" << d.positives() << " positive)\n";
  }
  finish(dir, "prepare", cfg, {{"raw", raw}, {"raw_sha256", sha256_file(raw)}}, started);
  return 0;
}

std::vector<TimeRange> tiles(const TimeRange& horizon, int days) {
  std::vector<TimeRange> out;
  const std::int64_t step = static_cast<std::int64_t>(days) * kMinutesPerDay;
  for (std::int64_t t = horizon.begin; t < horizon.end; t += step) {
    out.push_back({t, std::min(t + step, horizon.end)});
  }
  return out;
}

int cmd_run(const Options& o, const std::string& raw, std::ostream& out, std::ostream& err) {
  require_out(o);
  const auto started = utc_now();
  auto cfg = effective_config(o, true);
  if (!cfg.has_experiment) throw ConfigError("config.experiment: required for run");
  auto exp = cfg.experiment;
  exp.log = [&err](const std::string& m) { err << m << '\n'; };

  ordered_json inputs = ordered_json::object();
  std::vector<collection::GpuRecord> records;
  if (raw.empty()) {
    records = generate_records(cfg);
  } else {
    records = collection::read_raw(raw);
    inputs = {{"raw", raw}, {"raw_sha256", sha256_file(raw)}};
  }
  const dataset::InstancePool pool(records, cfg.windowing, cfg.windowing_mode);
  records.clear();
  records.shrink_to_fit();

  harness::RunResult result;
  switch (cfg.mode) {
    case config::ExperimentMode::Static: {
      const auto windows = cfg.static_windows ? tiles(cfg.sliding.horizon, cfg.sliding.t_retrain)
                                              : std::vector<TimeRange>{};
      result = harness::run_static(pool, exp, cfg.static_train, cfg.sliding.horizon, windows);
      break;
    }
    case config::ExperimentMode::Sliding: result = harness::run_sliding(pool, exp, cfg.sliding); break;
    case config::ExperimentMode::VariableLength:
      result = harness::run_variable_length(pool, exp, cfg.sliding);
      break;
  }
  const fs::path dir(o.out_dir);
  harness::write_run(dir.string(), result);
  finish(dir, "run", cfg, inputs, started);
  for (const auto& m : cfg.experiment.methods) {
    const auto s = result.summary(m);
    out << std::left << std::setw(10) << m << " mean precision@K "
        << (s.mean_precision ? std::to_string(*s.mean_precision) : "NA") << "  variance "
        << s.precision_variance << '\n';
  }
  return 0;
}

int cmd_report(const std::string& run_dir, std::ostream& out) {
  const fs::path dir(run_dir);
  std::ifstream in(dir / "summary.csv");
  if (!in) throw ConfigError("no summary.csv in '" + run_dir + "'");
  std::string line;
  std::getline(in, line);
  out << std::left << std::setw(12) << "method" << std::right << std::setw(10) << "windows"
      << std::setw(14) << "precision@K" << std::setw(12) << "variance" << std::setw(12) << "recall@K"
      << std::setw(12) << "accuracy" << '\n';
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 6) throw std::runtime_error("malformed summary row: " + line);
    out << std::left << std::setw(12) << cells[0] << std::right << std::setw(10) << cells[1]
        << std::setw(14) << cells[2] << std::setw(12) << cells[3] << std::setw(12) << cells[4]
        << std::setw(12) << cells[5] << '\n';
  }
  // Verify artifacts against the recorded hashes.
  std::ifstream hashes(dir / kHashes);
  std::size_t checked = 0, bad = 0;
  const auto now = hash_directory(run_dir);
  for (std::string h, path; hashes >> h >> path;) {
    ++checked;
    const auto it = now.find(path);
    if (it == now.end() || it->second != h) {
      ++bad;
      out << "hash mismatch: " << path << '\n';
    }
  }
  out << checked << " artifacts checked, " << bad << " mismatched\n";
  return bad == 0 ? 0 : 1;
}

}  // namespace

std::map<std::string, std::string> hash_directory(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == kManifest || rel == kHashes) continue;
    out[rel] = sha256_file(entry.path().string());
  }
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GPU failure prediction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "root random seed (overrides the config)");
  app.add_option("--config", o.config_path, "JSON configuration file (or a run manifest)");
  app.add_option("--out", o.out_dir, "output directory");

  auto* gen = app.add_subcommand("generate", "simulate a fleet and write the raw dataset");
  bool telemetry_jsonl = false;
  gen->add_flag("--telemetry", telemetry_jsonl, "also write per-GPU telemetry as JSONL");

  auto* prep = app.add_subcommand("prepare", "build instance files from a raw dataset");
  std::string raw;
  dataset::WindowingParams params;
  std::string mode = "sliding";
  std::vector<std::string> splits;
  prep->add_option("--raw", raw, "raw dataset file")->required();
  prep->add_option("--l", params.l, "observation window length (entries)");
  prep->add_option("--p", params.p, "prediction length (entries)");
  prep->add_option("--slide-step", params.slide_step, "entries between sliding windows");
  prep->add_option("--mode", mode, "sliding or segmented");
  prep->add_option("--split", splits, "name:YYYY-MM-DD:YYYY-MM-DD (end exclusive)");

  auto* run = app.add_subcommand("run", "run the configured experiment");
  std::string run_raw;
  run->add_option("--raw", run_raw, "raw dataset file (default: simulate from the config)");

  auto* report = app.add_subcommand("report", "summarise a run directory");
  std::string run_dir;
  report->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) o.seed = seed;

  try {
    if (*gen) return cmd_generate(o, telemetry_jsonl, out);
    if (*prep) return cmd_prepare(o, raw, params, mode, splits, *prep, out);
    if (*run) return cmd_run(o, run_raw, out, err);
    if (*report) return cmd_report(run_dir, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gpufail::cli
