#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "leakaudit/doc_processing.hpp"
#include "leakaudit/forecast_harness.hpp"
#include "leakaudit/leakage_judge.hpp"
#include "leakaudit/query_generation.hpp"
#include "leakaudit/search_retrieval.hpp"

namespace leakaudit {

struct ArtifactPaths {
  std::filesystem::path questions, queries, batches, pages, views, judgments, records, forecasts, forecast_failures;
  std::filesystem::path report_dir, raw_dir, page_cache, reply_cache, manifest_dir;

  // Every path under `workdir` with the default file names.
  static ArtifactPaths under(const std::filesystem::path& workdir);
};

struct PipelineConfig {
  std::filesystem::path workdir = "leakaudit-work";
  ArtifactPaths paths = ArtifactPaths::under("leakaudit-work");
  std::optional<std::filesystem::path> questions_input;  // source file for `ingest`
  std::optional<std::filesystem::path> gold_path;        // annotation export for `aggregate`

  std::vector<Engine> engines{Engine::Google, Engine::DuckDuckGo};
  std::string search_backend = "mock";  // mock | live
  int budget = 100;
  int max_results_per_query = 10;
  Date range_start = kDefaultRangeStart;

  GenerationConfig generation;
  std::string embedder_id = "hashing";  // hashing | openai:<model>
  std::string relevance_query = "title";  // title | title_background
  SelectionParams selection;
  JudgeConfig judge;
  std::string forecast_provider_id = "mock";
  std::string forecast_conditions = "all";
  std::string eligibility = "2025-binary-score4";
  Engine forecast_engine = Engine::Google;
  int forecast_max_retries = 2;

  std::string web_backend = "mock";  // mock | live
  std::size_t fetch_concurrency = 8;
  std::size_t per_host_connections = 2;
  std::size_t workers = 4;
  std::optional<std::string> fixed_time;  // pins every timestamp (deterministic runs)

  // Throws Error(ConfigInvalid).
  void validate() const;
};

// Unknown keys are rejected. Relative paths resolve against `base_dir`.
PipelineConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {});
json to_json(const PipelineConfig& config);
// Re-derives every artifact path after the workdir changes.
void set_workdir(PipelineConfig& config, const std::filesystem::path& workdir);
EligibilityRule parse_eligibility(const std::string& spec);

// External collaborators of the stages. Tests inject their own; make_services builds them from
// the config ids and environment variables.
struct Services {
  std::shared_ptr<TextProvider> query_provider;
  std::shared_ptr<TextProvider> judge_provider;
  std::shared_ptr<TextProvider> forecast_provider;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<HttpClient> web;
  std::function<std::unique_ptr<SearchEngine>(Engine)> search_engine;
  Clock clock;
  std::function<void(std::chrono::milliseconds)> sleep;  // fetch backoff; empty = real sleep
};

Services make_services(const PipelineConfig& config);

struct StageSummary {
  std::string stage;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json counts = json::object();
  std::size_t failures = 0;        // per-item failures (recorded, not fatal)
  std::vector<std::string> errors;  // fatal errors
  double wall_seconds = 0.0;

  bool ok() const { return errors.empty(); }
};

json to_json(const StageSummary& s);

inline const std::vector<std::string> kStageNames = {"ingest", "gen-queries", "search",   "fetch",  "process",
                                                     "judge",  "aggregate",   "forecast", "report"};

// Runs one stage and writes its manifest. Throws Error(MissingUpstream) when an input artifact is
// absent and Error(ConfigInvalid) for an unknown stage or invalid config.
StageSummary run_stage(const std::string& name, const PipelineConfig& config, Services& services);
StageSummary run_stage(const std::string& name, const PipelineConfig& config);

// Stable hash of the config as serialized by to_json.
std::string config_hash(const PipelineConfig& config);

}  // namespace leakaudit
