/* Copyright 2026 The PromptBench Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// The promptbench command line.
//
// Exit codes: 0 success, 1 internal error, 2 usage or configuration error,
// 3 data error, 4 oracle error.
//
// Every command writes into a staging directory next to the output directory
// and moves the files into place only once the command has succeeded.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "promptbench/budget.hpp"
#include "promptbench/core.hpp"
#include "promptbench/decode.hpp"
#include "promptbench/experiments.hpp"
#include "promptbench/features.hpp"
#include "promptbench/image_io.hpp"
#include "promptbench/ingest.hpp"
#include "promptbench/oracle.hpp"
#include "promptbench/parallel.hpp"
#include "promptbench/remote_oracle.hpp"
#include "promptbench/saliency.hpp"
#include "promptbench/samplers.hpp"

namespace promptbench::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitOracle = 4,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kData: return kExitData;
    case ErrorKind::kInvalidArgument: return kExitData;
    case ErrorKind::kOracle: return kExitOracle;
  }
  return kExitInternal;
}

// ---- Configuration ----------------------------------------------------------

struct DatasetConfig {
  fs::path manifest;
  std::optional<fs::path> prompt_log;
  std::vector<fs::path> extra_prompt_logs;
};

struct RunConfig {
  fs::path path;
  fs::path base_dir;
  std::uint64_t master_seed = 0;
  fs::path output_dir;
  int jobs = 1;
  std::vector<DatasetConfig> datasets;
  json oracle = {{"type", "synthetic"}};
  std::vector<StrategyId> strategies{kAutomatedStrategies.begin(), kAutomatedStrategies.end()};
  SamplerConfig sampler;
  std::optional<fs::path> saliency_dir;
  int saliency_working_size = 64;
  BudgetSearchConfig budget;
  bool budget_from_logs = true;
  DecodeOptions decode;
  bool decode_seed_set = false;
};

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw config_error(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw config_error(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_as(const json& obj, const char* key, const std::string& where, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("type");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw std::invalid_argument("type");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw std::invalid_argument("type");
    } else {
      if (!it->is_string()) throw std::invalid_argument("type");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    throw config_error(where + ": bad value for '" + key + "'");
  }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::vector<StrategyId> parse_strategy_list(const json& j, const std::string& where) {
  if (j.is_string() && j.get<std::string>() == "all")
    return {kAutomatedStrategies.begin(), kAutomatedStrategies.end()};
  if (!j.is_array() || j.empty())
    throw config_error(where + ": strategies must be \"all\" or a non-empty list");
  std::vector<StrategyId> out;
  for (const auto& s : j) {
    if (!s.is_string()) throw config_error(where + ": strategy names must be strings");
    auto id = parse_strategy(s.get<std::string>());
    if (!id || *id == StrategyId::kHuman)
      throw config_error(where + ": unknown strategy '" + s.get<std::string>() + "'");
    if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
  }
  return out;
}

inline void validate_oracle_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw config_error(where + ": oracle needs a string 'type'");
  const std::string type = j["type"];
  if (type == "synthetic") {
    check_keys(j, {"type", "seed", "boundary_noise", "exclusion_radius", "tolerance"}, where);
  } else if (type == "remote") {
    check_keys(j, {"type", "url", "max_in_flight", "attempts", "initial_backoff_ms",
                   "timeout_s", "deterministic"},
               where);
  } else if (type == "replay") {
    check_keys(j, {"type", "cache", "backing", "name"}, where);
    if (!j.contains("cache") || !j["cache"].is_string())
      throw config_error(where + ": replay oracle needs a 'cache' path");
    if (j.contains("backing")) validate_oracle_json(j["backing"], where + ".backing");
  } else {
    throw config_error(where + ": unknown oracle type '" + type + "'");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  using detail::get_as;
  detail::check_keys(doc, {"master_seed", "output_dir", "jobs", "datasets", "oracle",
                           "strategies", "sampler", "budget", "decode"},
                     "config");
  RunConfig c;
  c.base_dir = base_dir;
  if (!doc.contains("master_seed") || !doc["master_seed"].is_number_unsigned())
    throw config_error("config: master_seed is required (non-negative integer)");
  c.master_seed = doc["master_seed"].get<std::uint64_t>();
  if (auto out = get_as<std::string>(doc, "output_dir", "config", ""); !out.empty())
    c.output_dir = detail::resolve(base_dir, out);
  c.jobs = get_as<int>(doc, "jobs", "config", 1);
  if (c.jobs < 1) throw config_error("config: jobs must be >= 1");

  if (doc.contains("datasets")) {
    if (!doc["datasets"].is_array()) throw config_error("config: datasets must be a list");
    std::size_t i = 0;
    for (const auto& d : doc["datasets"]) {
      const std::string where = "config.datasets[" + std::to_string(i++) + "]";
      detail::check_keys(d, {"manifest", "prompt_log", "extra_prompt_logs"}, where);
      DatasetConfig dc;
      const auto manifest = get_as<std::string>(d, "manifest", where, "");
      if (manifest.empty()) throw config_error(where + ": manifest is required");
      dc.manifest = detail::resolve(base_dir, manifest);
      if (auto log = get_as<std::string>(d, "prompt_log", where, ""); !log.empty())
        dc.prompt_log = detail::resolve(base_dir, log);
      if (d.contains("extra_prompt_logs")) {
        if (!d["extra_prompt_logs"].is_array())
          throw config_error(where + ": extra_prompt_logs must be a list");
        for (const auto& p : d["extra_prompt_logs"]) {
          if (!p.is_string()) throw config_error(where + ": prompt log paths must be strings");
          dc.extra_prompt_logs.push_back(detail::resolve(base_dir, p.get<std::string>()));
        }
      }
      c.datasets.push_back(std::move(dc));
    }
  }
  if (doc.contains("oracle")) c.oracle = doc["oracle"];
  detail::validate_oracle_json(c.oracle, "config.oracle");
  if (doc.contains("strategies"))
    c.strategies = detail::parse_strategy_list(doc["strategies"], "config.strategies");

  if (doc.contains("sampler")) {
    const auto& s = doc["sampler"];
    const std::string where = "config.sampler";
    detail::check_keys(s, {"min_separation", "entropy_patch", "entropy_bins",
                           "shi_tomasi_window", "saliency_top_fraction", "maxdist_mode",
                           "kmedoids_exact_limit", "kmedoids_max_pixels", "saliency_dir",
                           "saliency_working_size"},
                       where);
    auto& sc = c.sampler;
    sc.min_separation = get_as<int>(s, "min_separation", where, sc.min_separation);
    sc.entropy_patch = get_as<int>(s, "entropy_patch", where, sc.entropy_patch);
    sc.entropy_bins = get_as<int>(s, "entropy_bins", where, sc.entropy_bins);
    sc.shi_tomasi_window = get_as<int>(s, "shi_tomasi_window", where, sc.shi_tomasi_window);
    sc.saliency_top_fraction =
        get_as<double>(s, "saliency_top_fraction", where, sc.saliency_top_fraction);
    const auto mode = get_as<std::string>(s, "maxdist_mode", where, "to_seed");
    if (mode == "to_seed")
      sc.maxdist_mode = MaxDistMode::kToSeed;
    else if (mode == "farthest_from_set")
      sc.maxdist_mode = MaxDistMode::kFarthestFromSet;
    else
      throw config_error(where + ": maxdist_mode must be to_seed or farthest_from_set");
    sc.kmedoids_exact_limit =
        get_as<std::uint64_t>(s, "kmedoids_exact_limit", where, sc.kmedoids_exact_limit);
    sc.kmedoids_max_pixels =
        get_as<std::size_t>(s, "kmedoids_max_pixels", where, sc.kmedoids_max_pixels);
    if (auto dir = get_as<std::string>(s, "saliency_dir", where, ""); !dir.empty())
      c.saliency_dir = detail::resolve(base_dir, dir);
    c.saliency_working_size =
        get_as<int>(s, "saliency_working_size", where, c.saliency_working_size);
  }
  c.sampler.validate();

  if (doc.contains("budget")) {
    const auto& b = doc["budget"];
    const std::string where = "config.budget";
    detail::check_keys(b, {"init_inclusion", "init_exclusion", "max_multiplier", "max_sweeps",
                           "prefix_sampling", "from_logs"},
                       where);
    auto& bc = c.budget;
    bc.init_inclusion = get_as<int>(b, "init_inclusion", where, bc.init_inclusion);
    bc.init_exclusion = get_as<int>(b, "init_exclusion", where, bc.init_exclusion);
    bc.max_multiplier = get_as<double>(b, "max_multiplier", where, bc.max_multiplier);
    bc.max_sweeps = get_as<int>(b, "max_sweeps", where, bc.max_sweeps);
    bc.prefix_sampling = get_as<bool>(b, "prefix_sampling", where, bc.prefix_sampling);
    c.budget_from_logs = get_as<bool>(b, "from_logs", where, c.budget_from_logs);
  }
  c.budget.validate();

  if (doc.contains("decode")) {
    const auto& d = doc["decode"];
    const std::string where = "config.decode";
    detail::check_keys(d, {"split_seed", "ridge", "interactions"}, where);
    if (d.contains("split_seed")) {
      c.decode.split_seed = get_as<std::uint64_t>(d, "split_seed", where, 0);
      c.decode_seed_set = true;
    }
    c.decode.ridge = get_as<double>(d, "ridge", where, c.decode.ridge);
    if (c.decode.ridge < 0.0) throw config_error(where + ": ridge must be >= 0");
    c.decode.interactions = get_as<bool>(d, "interactions", where, c.decode.interactions);
  }
  if (!c.decode_seed_set) c.decode.split_seed = c.master_seed;
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config " + path.string());
  if (path.extension() == ".toml")
    throw config_error("TOML configs are not supported; use JSON");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("config " + path.string() + ": " + e.what());
  }
  RunConfig c = parse_run_config(doc, fs::absolute(path).parent_path());
  c.path = path;
  return c;
}

inline std::shared_ptr<const SegmenterOracle> make_oracle(const json& j, const fs::path& base,
                                                          std::uint64_t master_seed) {
  using detail::get_as;
  const std::string type = j.at("type");
  const std::string where = "oracle";
  if (type == "synthetic") {
    SyntheticOracleConfig sc;
    sc.seed = get_as<std::uint64_t>(j, "seed", where, master_seed);
    sc.boundary_noise = get_as<double>(j, "boundary_noise", where, sc.boundary_noise);
    sc.exclusion_radius = get_as<double>(j, "exclusion_radius", where, sc.exclusion_radius);
    sc.tolerance = get_as<int>(j, "tolerance", where, sc.tolerance);
    return std::make_shared<SyntheticOracle>(sc);
  }
  if (type == "remote") {
    RemoteOracleConfig rc;
    rc.url = resolve_oracle_url(get_as<std::string>(j, "url", where, rc.url));
    rc.max_in_flight = get_as<int>(j, "max_in_flight", where, rc.max_in_flight);
    rc.attempts = get_as<int>(j, "attempts", where, rc.attempts);
    rc.initial_backoff = std::chrono::milliseconds(
        get_as<int>(j, "initial_backoff_ms", where, static_cast<int>(rc.initial_backoff.count())));
    rc.timeout = std::chrono::seconds(
        get_as<int>(j, "timeout_s", where, static_cast<int>(rc.timeout.count())));
    rc.deterministic = get_as<bool>(j, "deterministic", where, rc.deterministic);
    return std::make_shared<RemoteOracle>(rc);
  }
  std::shared_ptr<const SegmenterOracle> backing;
  if (j.contains("backing")) backing = make_oracle(j["backing"], base, master_seed);
  return std::make_shared<ReplayOracle>(detail::resolve(base, j.at("cache")), backing,
                                        get_as<std::string>(j, "name", where, ""));
}

// ---- Staged output ----------------------------------------------------------

class StagedOutput {
 public:
  explicit StagedOutput(fs::path final_dir)
      : final_(std::move(final_dir)), staging_(final_.string() + ".partial") {
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;
  ~StagedOutput() {
    std::error_code ec;
    if (!promoted_) fs::remove_all(staging_, ec);
  }

  void write(const fs::path& relative, const std::string& content) {
    const fs::path p = staging_ / relative;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw data_error("cannot write " + p.string());
    files_.push_back(relative);
  }

  // Moves every staged file into the output directory.
  void promote() {
    fs::create_directories(final_);
    for (const auto& rel : files_) {
      const fs::path dst = final_ / rel;
      fs::create_directories(dst.parent_path());
      fs::rename(staging_ / rel, dst);
    }
    fs::remove_all(staging_);
    promoted_ = true;
  }

  const fs::path& final_dir() const noexcept { return final_; }

 private:
  fs::path final_;
  fs::path staging_;
  std::vector<fs::path> files_;
  bool promoted_ = false;
};

inline std::string hex(const Digest128& d) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

inline std::string file_hash(const fs::path& p) {
  const Bytes bytes = read_file_bytes(p);
  return hex(Hasher128().update(std::span<const std::uint8_t>(bytes)).finish());
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// File-system-safe rendering of an identifier.
inline std::string safe_name(std::string_view id) {
  std::string s;
  for (char c : id)
    s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return s.empty() ? "_" : s;
}

// ---- Commands ---------------------------------------------------------------

struct Invocation {
  std::vector<std::string> args;
  std::string command;
  std::vector<fs::path> inputs;
  std::vector<std::string> flags;
  std::optional<std::uint64_t> master_seed;
  int jobs = 1;
};

inline std::string run_manifest(const Invocation& inv) {
  json inputs = json::array();
  for (const auto& p : inv.inputs)
    inputs.push_back({{"path", p.string()}, {"content_hash", file_hash(p)}});
  json j = {{"tool", "promptbench"},
            {"version", kVersion},
            {"command", inv.command},
            {"args", inv.args},
            {"jobs", inv.jobs},
            {"inputs", std::move(inputs)},
            {"flags", inv.flags},
            {"started_at", utc_timestamp()}};
  if (inv.master_seed) j["master_seed"] = *inv.master_seed;
  return j.dump(2) + "\n";
}

struct LoadedDataset {
  DatasetManifest manifest;
  Dataset dataset;
  PromptLog log;
  bool has_log = false;
};

inline LoadedDataset load_configured_dataset(const DatasetConfig& dc, int jobs, Invocation& inv) {
  LoadedDataset d;
  d.manifest = load_manifest(dc.manifest);
  inv.inputs.push_back(dc.manifest);
  for (auto& w : d.manifest.warnings) inv.flags.push_back(w);
  d.dataset = load_dataset(d.manifest, jobs);
  if (dc.prompt_log) {
    d.log = load_prompt_log(*dc.prompt_log, d.manifest);
    d.has_log = true;
    inv.inputs.push_back(*dc.prompt_log);
  }
  return d;
}

struct OracleBundle {
  std::shared_ptr<const SegmenterOracle> oracle;
  std::unique_ptr<SaliencyProvider> saliency;

  EvalContext context(const RunConfig& cfg, int jobs) const {
    EvalContext ctx;
    ctx.oracle = oracle.get();
    ctx.saliency = saliency.get();
    ctx.sampler = cfg.sampler;
    ctx.sampler.seed = cfg.master_seed;
    ctx.jobs = jobs;
    return ctx;
  }
};

inline OracleBundle make_bundle(const RunConfig& cfg) {
  OracleBundle b;
  b.oracle = make_oracle(cfg.oracle, cfg.base_dir, cfg.master_seed);
  if (cfg.saliency_dir)
    b.saliency = std::make_unique<FileSaliencyProvider>(*cfg.saliency_dir);
  else
    b.saliency = std::make_unique<SpectralResidualSaliency>(cfg.saliency_working_size);
  return b;
}

inline void require_datasets(const RunConfig& cfg) {
  if (cfg.datasets.empty()) throw config_error("config: no datasets configured");
}

struct SampleOptions {
  std::string strategy = "all";
  std::string mode = "inclusion";
  int n = 1;
  std::optional<int> n_exclusion;
};

inline void cmd_sample(const RunConfig& cfg, const SampleOptions& opt, StagedOutput& out,
                       Invocation& inv) {
  require_datasets(cfg);
  if (opt.mode != "inclusion" && opt.mode != "exclusion" && opt.mode != "both")
    throw config_error("sample: --mode must be inclusion, exclusion or both");
  if (opt.n < 1) throw config_error("sample: --n must be >= 1");
  const int n_inc = opt.mode == "exclusion" ? 0 : opt.n;
  const int n_exc = opt.mode == "inclusion" ? 0
                    : opt.mode == "exclusion" ? opt.n
                                              : opt.n_exclusion.value_or(opt.n);
  std::vector<StrategyId> strategies = cfg.strategies;
  if (opt.strategy != "all") strategies = detail::parse_strategy_list(json::array({opt.strategy}), "--strategy");
  const OracleBundle bundle = make_bundle(cfg);
  const EvalContext ctx = bundle.context(cfg, inv.jobs);
  for (const auto& dc : cfg.datasets) {
    const LoadedDataset d = load_configured_dataset(dc, inv.jobs, inv);
    for (StrategyId s : strategies) {
      const auto& samples = d.dataset.samples;
      std::vector<AutomatedPrompts> prompts(samples.size());
      parallel_for(samples.size(), inv.jobs, [&](std::size_t i) {
        prompts[i] = automated_prompts(samples[i], s, n_inc, n_exc, ctx);
      });
      std::ostringstream os;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        write_prompt_set(os, strategy_name(s), samples[i].image_id, prompts[i].prompts);
        if (prompts[i].clamped)
          inv.flags.push_back(d.dataset.id + "/" + samples[i].image_id + "/" +
                              std::string(strategy_name(s)) + ": point count clamped");
        if (prompts[i].fallback)
          inv.flags.push_back(d.dataset.id + "/" + samples[i].image_id + "/" +
                              std::string(strategy_name(s)) + ": random fallback used");
      }
      out.write(fs::path(safe_name(d.dataset.id)) / (std::string(strategy_name(s)) + ".jsonl"),
                os.str());
    }
  }
}

inline json budget_result_json(const std::string& dataset_id, StrategyId s,
                               const BudgetSearchConfig& search, const BudgetResult& r) {
  json records = json::array();
  for (const auto& rec : r.best_table.records)
    records.push_back({{"image_id", rec.image_id},
                       {"n_inclusion", rec.n_inclusion},
                       {"n_exclusion", rec.n_exclusion},
                       {"iou", rec.iou}});
  return {{"dataset_id", dataset_id},
          {"strategy", strategy_name(s)},
          {"best_inclusion", r.best_inclusion},
          {"best_exclusion", r.best_exclusion},
          {"miou", r.best_table.miou},
          {"std", r.best_table.std},
          {"n_images", r.best_table.records.size()},
          {"sweeps", r.sweeps},
          {"search",
           {{"init_inclusion", search.init_inclusion},
            {"init_exclusion", search.init_exclusion},
            {"max_inclusion", search.max_inclusion()},
            {"max_exclusion", search.max_exclusion()},
            {"max_sweeps", search.max_sweeps},
            {"prefix_sampling", search.prefix_sampling}}},
          {"records", std::move(records)}};
}

inline BudgetSearchConfig search_config_for(const RunConfig& cfg, const LoadedDataset& d) {
  if (cfg.budget_from_logs && d.has_log && !d.log.empty())
    return budget_from_human(human_point_averages(d.log), cfg.budget);
  return cfg.budget;
}

inline void cmd_optimize(const RunConfig& cfg, const std::string& strategy, StagedOutput& out,
                         Invocation& inv) {
  require_datasets(cfg);
  std::vector<StrategyId> strategies = cfg.strategies;
  if (strategy != "all") strategies = detail::parse_strategy_list(json::array({strategy}), "--strategy");
  const OracleBundle bundle = make_bundle(cfg);
  const EvalContext ctx = bundle.context(cfg, inv.jobs);
  for (const auto& dc : cfg.datasets) {
    const LoadedDataset d = load_configured_dataset(dc, inv.jobs, inv);
    const BudgetSearchConfig search = search_config_for(cfg, d);
    const fs::path dir = safe_name(d.dataset.id);
    for (StrategyId s : strategies) {
      const BudgetResult r = optimize_point_budget(d.dataset, s, ctx, search);
      std::ostringstream trace;
      write_trace_csv(trace, r.trace);
      out.write(dir / ("budget_" + std::string(strategy_name(s)) + ".csv"), trace.str());
      out.write(dir / ("budget_" + std::string(strategy_name(s)) + ".json"),
                budget_result_json(d.dataset.id, s, search, r).dump(2) + "\n");
    }
  }
}

inline std::string records_csv(const std::vector<ComparisonTable>& tables) {
  std::ostringstream os;
  os << "dataset_id,protocol,column,image_id,n_inclusion,n_exclusion,iou\n";
  for (const auto& t : tables)
    for (const auto& c : t.columns)
      for (const auto& r : c.table.records)
        os << csv_escape(t.dataset_id) << ',' << protocol_name(t.protocol) << ','
           << strategy_name(c.strategy) << ',' << csv_escape(r.image_id) << ',' << r.n_inclusion
           << ',' << r.n_exclusion << ',' << csv_number(r.iou) << '\n';
  return os.str();
}

inline void cmd_experiment(const RunConfig& cfg, const std::string& protocol, StagedOutput& out,
                           Invocation& inv) {
  require_datasets(cfg);
  if (protocol != "all" && !parse_protocol(protocol))
    throw config_error("experiment: unknown protocol '" + protocol + "'");
  const bool want_exc = protocol == "all" || protocol == "human_exclusion";
  const bool want_inc = protocol == "all" || protocol == "human_inclusion";
  const OracleBundle bundle = make_bundle(cfg);

  std::vector<ComparisonTable> tables;
  for (const auto& dc : cfg.datasets) {
    const LoadedDataset d = load_configured_dataset(dc, inv.jobs, inv);
    if (protocol != "all" && protocol != "same_strategy" && !d.has_log)
      throw data_error("experiment: " + protocol + " needs a prompt_log for dataset " +
                       d.dataset.id);
    ExperimentSpec spec;
    spec.strategies = cfg.strategies;
    spec.ctx = bundle.context(cfg, inv.jobs);
    spec.budget = cfg.budget;
    spec.budget_from_logs = cfg.budget_from_logs;
    ComparisonTable same = run_same_strategy(spec, d.dataset, d.has_log ? d.log : PromptLog{});
    const fs::path dir = safe_name(d.dataset.id);
    for (const auto& c : same.columns) {
      if (c.strategy == StrategyId::kHuman) continue;
      std::ostringstream trace, prompts;
      write_trace_csv(trace, c.trace);
      out.write(dir / ("budget_" + std::string(strategy_name(c.strategy)) + ".csv"), trace.str());
      for (std::size_t i = 0; i < c.prompts.size(); ++i)
        write_prompt_set(prompts, strategy_name(c.strategy), d.dataset.samples[i].image_id,
                         c.prompts[i]);
      out.write(dir / ("prompts_" + std::string(strategy_name(c.strategy)) + ".jsonl"),
                prompts.str());
    }
    for (auto& f : same.flags) inv.flags.push_back(d.dataset.id + ": " + f);
    std::vector<ComparisonTable> mixed;
    if (d.has_log && want_exc) mixed.push_back(run_human_exclusion(spec, d.dataset, d.log, same));
    if (d.has_log && want_inc) mixed.push_back(run_human_inclusion(spec, d.dataset, d.log, same));
    if (protocol == "all" || protocol == "same_strategy") tables.push_back(std::move(same));
    for (auto& m : mixed) {
      for (auto& f : m.flags) inv.flags.push_back(d.dataset.id + ": " + f);
      tables.push_back(std::move(m));
    }
  }
  std::ostringstream csv;
  write_comparison_csv(csv, tables);
  out.write("comparison.csv", csv.str());
  out.write("records.csv", records_csv(tables));
  out.write("report.md", render_markdown(tables));
}

inline void cmd_features(const RunConfig& cfg, const std::vector<std::string>& prompt_files,
                         StagedOutput& out, Invocation& inv) {
  require_datasets(cfg);
  if (!prompt_files.empty() && cfg.datasets.size() != 1)
    throw config_error("features: --prompts needs a config with exactly one dataset");
  const OracleBundle bundle = make_bundle(cfg);
  std::ostringstream csv;
  write_feature_csv_header(csv);
  for (const auto& dc : cfg.datasets) {
    const LoadedDataset d = load_configured_dataset(dc, inv.jobs, inv);
    std::vector<fs::path> sources;
    if (!prompt_files.empty()) {
      for (const auto& p : prompt_files) sources.emplace_back(p);
    } else {
      if (dc.prompt_log) sources.push_back(*dc.prompt_log);
      sources.insert(sources.end(), dc.extra_prompt_logs.begin(), dc.extra_prompt_logs.end());
    }
    if (sources.empty())
      throw config_error("features: no prompt logs for dataset " + d.dataset.id);

    struct Job {
      const Sample* sample;
      std::string source;
      PromptSet prompts;
    };
    std::vector<Job> jobs;
    for (const auto& src : sources) {
      if (std::find(inv.inputs.begin(), inv.inputs.end(), src) == inv.inputs.end())
        inv.inputs.push_back(src);
      const PromptLog log = load_prompt_log(src, d.manifest);
      for (const auto& s : d.dataset.samples)
        for (const auto& [annotator, set] : log.for_image(s.image_id)) {
          if (set->inclusion.empty()) {
            inv.flags.push_back(d.dataset.id + "/" + s.image_id + "/" + annotator +
                                ": no inclusion points, skipped");
            continue;
          }
          jobs.push_back({&s, annotator, *set});
        }
    }
    std::vector<FeatureRow> rows(jobs.size());
    parallel_for(jobs.size(), inv.jobs, [&](std::size_t i) {
      const Job& j = jobs[i];
      FeatureRow& r = rows[i];
      r.dataset_id = d.dataset.id;
      r.image_id = j.sample->image_id;
      r.source = j.source;
      r.features = extract_all(j.sample->image, j.sample->gt, j.sample->object_density, j.prompts);
      r.iou = iou(bundle.oracle->segment(j.sample->image, j.prompts, j.sample->image_id),
                  j.sample->gt);
    });
    for (const auto& r : rows) write_feature_csv_row(csv, r);
  }
  out.write("features.csv", csv.str());
}

inline void cmd_decode(const std::vector<std::string>& feature_files, const DecodeOptions& opt,
                       StagedOutput& out, Invocation& inv) {
  if (feature_files.empty()) throw config_error("decode: --features is required");
  std::vector<FeatureRow> rows;
  for (const auto& f : feature_files) {
    std::ifstream in(f);
    if (!in) throw data_error("decode: cannot open " + f);
    inv.inputs.emplace_back(f);
    auto part = read_feature_csv(in, f);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<FeatureRow>> groups;
  for (auto& r : rows) {
    if (!groups.count(r.dataset_id)) order.push_back(r.dataset_id);
    groups[r.dataset_id].push_back(r);
  }
  if (order.empty()) throw data_error("decode: no feature rows");
  json reports = json::array();
  for (const auto& id : order)
    reports.push_back(decoding_report_json(decode_dataset(groups[id], opt, id)));
  std::ostringstream pearson;
  write_pearson_csv(pearson, pearson_matrix(rows));
  out.write("decoding.json", reports.dump(2) + "\n");
  out.write("pearson.csv", pearson.str());
}

inline std::vector<ComparisonTable> load_report_inputs(const std::vector<std::string>& inputs,
                                                       Invocation& inv) {
  if (inputs.empty()) throw config_error("report: at least one --input is required");
  std::vector<ComparisonTable> tables;
  for (const auto& f : inputs) {
    std::ifstream in(f);
    if (!in) throw data_error("report: cannot open " + f);
    inv.inputs.emplace_back(f);
    auto part = read_comparison_csv(in, f);
    tables.insert(tables.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
  }
  attach_baselines(tables);
  return tables;
}

struct ConvertOptions {
  std::string images;
  std::string masks;
  std::string dataset_id;
  std::string out;
  int object_density = 1;
};

// Pairs <images>/<stem>.png with <masks>/<stem>.png and writes a manifest.
inline void cmd_convert(const ConvertOptions& opt, std::ostream& err) {
  if (opt.images.empty() || opt.masks.empty() || opt.dataset_id.empty() || opt.out.empty())
    throw config_error("convert: --images, --masks, --dataset-id and --out are required");
  if (opt.object_density < 1) throw config_error("convert: --object-density must be >= 1");
  auto list = [](const fs::path& dir) {
    if (!fs::is_directory(dir)) throw data_error("convert: not a directory: " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png")
        out[e.path().stem().string()] = fs::absolute(e.path());
    return out;
  };
  const auto images = list(opt.images);
  const auto masks = list(opt.masks);
  if (images.empty()) throw data_error("convert: no PNG images in " + opt.images);
  DatasetManifest m;
  m.dataset_id = opt.dataset_id;
  for (const auto& [stem, path] : images) {
    auto it = masks.find(stem);
    if (it == masks.end()) throw data_error("convert: no mask for image " + stem);
    ManifestEntry e;
    e.image_id = stem;
    e.image_path = path;
    e.gt_mask_path = it->second;
    e.object_density = opt.object_density;
    m.entries.push_back(std::move(e));
  }
  for (const auto& [stem, _] : masks)
    if (!images.count(stem)) err << "warning: mask without image: " << stem << "\n";
  const fs::path target = fs::absolute(opt.out);
  fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".partial";
  write_manifest(tmp, m);
  try {
    (void)load_manifest(tmp);  // validates paths and dimensions
  } catch (...) {
    fs::remove(tmp);
    throw;
  }
  // Paths are written relative to the manifest's directory, which is shared.
  fs::rename(tmp, target);
}

// ---- Entry point ------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"promptbench: point-prompt sampling and benchmarking for promptable segmenters"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out_dir;
  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) c->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
  };

  SampleOptions sample_opt;
  auto* sample = app.add_subcommand("sample", "sample automated prompts for every image");
  common(sample, true);
  sample->add_option("--strategy", sample_opt.strategy, "strategy name or 'all'");
  sample->add_option("--mode", sample_opt.mode, "inclusion, exclusion or both");
  sample->add_option("--n", sample_opt.n, "points per image");
  sample->add_option("--n-exclusion", sample_opt.n_exclusion, "exclusion points with --mode both");

  std::string opt_strategy = "all";
  auto* optimize = app.add_subcommand("optimize", "search the point budget per strategy");
  common(optimize, true);
  optimize->add_option("--strategy", opt_strategy, "strategy name or 'all'");

  std::string protocol = "all";
  auto* experiment = app.add_subcommand("experiment", "run the benchmark protocols");
  common(experiment, true);
  experiment->add_option("--protocol", protocol,
                         "same_strategy, human_exclusion, human_inclusion or all");

  std::vector<std::string> prompt_files;
  auto* features = app.add_subcommand("features", "extract features of logged prompt sets");
  common(features, true);
  features->add_option("--prompts", prompt_files, "prompt JSONL files");

  std::vector<std::string> feature_files;
  std::optional<double> ridge;
  bool no_interactions = false;
  auto* decode = app.add_subcommand("decode", "correlation and regression decoding");
  common(decode, false);
  decode->add_option("--features", feature_files, "feature CSV files")->required();
  decode->add_option("--ridge", ridge, "ridge penalty");
  decode->add_flag("--no-interactions", no_interactions, "squares only in the degree-2 basis");

  std::vector<std::string> report_inputs;
  auto* report = app.add_subcommand("report", "render comparison CSVs as markdown");
  report->add_option("--input", report_inputs, "comparison CSV files")->required();
  report->add_option("--out", out_dir, "output directory (stdout when omitted)");

  ConvertOptions convert_opt;
  auto* convert = app.add_subcommand("convert", "build a manifest from image and mask folders");
  convert->add_option("--images", convert_opt.images, "image folder")->required();
  convert->add_option("--masks", convert_opt.masks, "mask folder")->required();
  convert->add_option("--dataset-id", convert_opt.dataset_id, "dataset id")->required();
  convert->add_option("--out", convert_opt.out, "manifest path")->required();
  convert->add_option("--object-density", convert_opt.object_density, "object count per image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Invocation inv;
  for (int i = 1; i < argc; ++i) inv.args.emplace_back(argv[i]);
  try {
    if (convert->parsed()) {
      inv.command = "convert";
      cmd_convert(convert_opt, err);
      return kExitOk;
    }
    if (report->parsed()) {
      inv.command = "report";
      const auto tables = load_report_inputs(report_inputs, inv);
      if (out_dir.empty()) {
        out << render_markdown(tables);
        return kExitOk;
      }
      StagedOutput staged(out_dir);
      std::ostringstream csv;
      write_comparison_csv(csv, tables);
      staged.write("report.md", render_markdown(tables));
      staged.write("report.csv", csv.str());
      staged.write("run_manifest.json", run_manifest(inv));
      staged.promote();
      return kExitOk;
    }

    std::optional<RunConfig> cfg;
    if (!config_path.empty()) {
      cfg = load_run_config(config_path);
      inv.inputs.push_back(config_path);
      if (seed) {
        cfg->master_seed = *seed;
        if (!cfg->decode_seed_set) cfg->decode.split_seed = *seed;
      }
      inv.jobs = jobs.value_or(cfg->jobs);
      inv.master_seed = cfg->master_seed;
      if (out_dir.empty()) out_dir = cfg->output_dir.string();
    } else {
      inv.jobs = jobs.value_or(1);
      inv.master_seed = seed;
    }
    if (out_dir.empty()) throw config_error("no output directory: pass --out or set output_dir");

    StagedOutput staged(out_dir);
    if (sample->parsed()) {
      inv.command = "sample";
      cmd_sample(*cfg, sample_opt, staged, inv);
    } else if (optimize->parsed()) {
      inv.command = "optimize";
      cmd_optimize(*cfg, opt_strategy, staged, inv);
    } else if (experiment->parsed()) {
      inv.command = "experiment";
      cmd_experiment(*cfg, protocol, staged, inv);
    } else if (features->parsed()) {
      inv.command = "features";
      cmd_features(*cfg, prompt_files, staged, inv);
    } else if (decode->parsed()) {
      inv.command = "decode";
      DecodeOptions opt = cfg ? cfg->decode : DecodeOptions{};
      if (!cfg && seed) opt.split_seed = *seed;
      if (ridge) {
        if (*ridge < 0.0) throw config_error("decode: --ridge must be >= 0");
        opt.ridge = *ridge;
      }
      if (no_interactions) opt.interactions = false;
      cmd_decode(feature_files, opt, staged, inv);
    }
    staged.write("run_manifest.json", run_manifest(inv));
    staged.promote();
    for (const auto& f : inv.flags) err << "note: " << f << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace promptbench::cli
