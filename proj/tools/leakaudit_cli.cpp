#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "leakaudit/annotation.hpp"
#include "leakaudit/error.hpp"
#include "leakaudit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace leakaudit;

namespace {

AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct Common {
  std::string config_path;
  std::string workdir;
  bool mock = false;
  std::string fixed_time;
  std::string log_level = "info";
};

PipelineConfig load_config(const Common& common) {
  PipelineConfig c;
  if (!common.config_path.empty()) {
    const fs::path path = common.config_path;
    if (!fs::exists(path)) throw Error(ErrorCode::ConfigInvalid, "config file " + path.string() + " does not exist");
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ConfigInvalid, "config file " + path.string() + " is not valid JSON");
    c = config_from_json(j, fs::absolute(path).parent_path());
  }
  if (!common.workdir.empty()) set_workdir(c, common.workdir);
  if (common.mock) {
    c.search_backend = "mock";
    c.web_backend = "mock";
    c.generation.provider_id = "mock";
    c.judge.provider_id = "mock";
    c.forecast_provider_id = "mock";
    c.embedder_id = "hashing";
  }
  if (!common.fixed_time.empty()) c.fixed_time = common.fixed_time;
  return c;
}

std::vector<Engine> parse_engines(const std::string& spec) {
  if (spec == "all") return {Engine::Google, Engine::DuckDuckGo};
  std::vector<Engine> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    out.push_back(engine_from_string(trim(spec.substr(start, comma - start))));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int print_summary(const StageSummary& s) {
  std::cout << to_json(s).dump(2) << std::endl;
  return s.ok() ? 0 : 1;
}

int run_one(const std::string& stage, const PipelineConfig& config) { return print_summary(run_stage(stage, config)); }

int run_all(const PipelineConfig& config) {
  Services services = make_services(config);
  json summaries = json::array();
  bool ok = true;
  for (const auto& stage : kStageNames) {
    if (stage == "ingest" && !config.questions_input) continue;
    const auto s = run_stage(stage, config, services);
    summaries.push_back(to_json(s));
    if (!s.ok()) {
      ok = false;
      break;
    }
  }
  std::cout << summaries.dump(2) << std::endl;
  return ok ? 0 : 1;
}

struct AnnotationArgs {
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string docs;
  std::string judgments;
  std::string questions;
  std::string db;
  std::vector<std::string> annotators{"annotator-1", "annotator-2"};
  std::size_t sample = 0;
  std::string export_gold;
};

int serve_annotations(const PipelineConfig& config, const AnnotationArgs& a) {
  const fs::path docs_path = a.docs.empty() ? config.paths.views : fs::path(a.docs);
  const fs::path judgments_path = a.judgments.empty() ? config.paths.judgments : fs::path(a.judgments);
  const fs::path questions_path = a.questions.empty() ? config.paths.questions : fs::path(a.questions);
  const fs::path db_path = a.db.empty() ? config.workdir / "annotations.sqlite" : fs::path(a.db);
  AnnotationStore store(db_path);

  if (!a.export_gold.empty()) {
    const auto gold = store.export_gold();
    std::vector<json> items;
    for (const auto& g : gold.items) items.push_back(to_json(g));
    write_jsonl(a.export_gold, items);
    json summary{{"stage", "export-gold"},
                 {"ok", true},
                 {"outputs", {a.export_gold}},
                 {"counts",
                  {{"items", gold.items.size()},
                   {"skipped_unlabeled", gold.skipped_unlabeled},
                   {"skipped_no_judge", gold.skipped_no_judge}}}};
    if (gold.report) summary["counts"]["agreement"] = to_json(*gold.report);
    std::cout << summary.dump(2) << std::endl;
    return 0;
  }

  for (const auto& p : {docs_path, questions_path}) {
    if (!fs::exists(p)) throw Error(ErrorCode::MissingUpstream, p.string() + " does not exist");
  }
  const auto questions = load_questions(questions_path);
  std::vector<DocumentView> views;
  read_jsonl(docs_path, [&](const json& r, std::size_t) { views.push_back(document_view_from_json(r)); });
  std::vector<LeakageJudgment> judgments;
  if (fs::exists(judgments_path)) {
    read_jsonl(judgments_path, [&](const json& r, std::size_t) { judgments.push_back(leakage_judgment_from_json(r)); });
  }
  const auto docs =
      annotation_docs(questions, views, judgments, a.sample ? std::optional<std::size_t>(a.sample) : std::nullopt);
  const auto tasks = assign_batches(docs, a.annotators);
  const auto inserted = store.add_tasks(tasks);

  AnnotationServer server(store);
  const int port = server.bind({a.host, a.port});
  std::cout << json{{"stage", "serve-annotations"},
                    {"ok", true},
                    {"url", "http://" + a.host + ":" + std::to_string(port)},
                    {"db", db_path.string()},
                    {"counts", {{"docs", docs.size()}, {"new_tasks", inserted}}}}
                   .dump(2)
            << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leakage audit of date-filtered web retrieval for retrospective forecasting"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--workdir", common.workdir, "Artifact directory (overrides the config)");
  app.add_flag("--mock", common.mock, "Use the offline mock search engine, web, models and embedder");
  app.add_option("--fixed-time", common.fixed_time, "Pin every timestamp (YYYY-MM-DDTHH:MM:SSZ)");
  app.add_option("--log-level", common.log_level, "trace|debug|info|warn|error|off");

  auto* ingest = app.add_subcommand("ingest", "Validate and store the question set");
  std::string questions_in;
  ingest->add_option("--questions", questions_in, "Question JSONL to ingest")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-queries", "Generate search queries per question");
  std::string gen_questions, gen_out;
  int gen_n = 0;
  gen->add_option("--questions", gen_questions, "Stored question JSONL");
  gen->add_option("--out", gen_out, "Query JSONL to write");
  gen->add_option("--n", gen_n, "Queries per question")->check(CLI::PositiveNumber);

  auto* search = app.add_subcommand("search", "Run date-filtered searches");
  std::string engines;
  int budget = 0;
  search->add_option("--engine", engines, "google, duckduckgo, a comma list, or all");
  search->add_option("--budget", budget, "Unique URLs per question and engine")->check(CLI::PositiveNumber);

  auto* fetch = app.add_subcommand("fetch", "Fetch and extract retrieved pages");
  std::string fetch_in, fetch_cache;
  std::size_t concurrency = 0;
  fetch->add_option("--in", fetch_in, "Retrieval batch JSONL");
  fetch->add_option("--cache", fetch_cache, "Page cache directory");
  fetch->add_option("--concurrency", concurrency, "Concurrent fetches")->check(CLI::PositiveNumber);

  auto* process = app.add_subcommand("process", "Chunk and select page content");
  std::string params = "default";
  process->add_option("--params", params, "'default' or a JSON file of selection parameters");

  auto* judge = app.add_subcommand("judge", "Score each document view for leakage");
  std::string judge_views, judge_provider;
  std::optional<double> judge_temperature;
  judge->add_option("--views", judge_views, "Document view JSONL");
  judge->add_option("--provider", judge_provider, "mock or openai:<model>");
  judge->add_option("--temperature", judge_temperature, "Sampling temperature");

  auto* aggregate = app.add_subcommand("aggregate", "Compute leakage profiles and per-year rates");
  std::string agg_records, agg_report, agg_gold;
  aggregate->add_option("--records", agg_records, "URL judgment record JSONL");
  aggregate->add_option("--report", agg_report, "Report output directory");
  aggregate->add_option("--gold", agg_gold, "Exported annotation gold JSONL")->check(CLI::ExistingFile);

  auto* forecast = app.add_subcommand("forecast", "Forecast eligible questions under each condition");
  std::string conditions, eligibility;
  forecast->add_option("--conditions", conditions, "all or a comma list of condition names");
  forecast->add_option("--eligibility", eligibility, "Eligibility rule, e.g. 2025-binary-score4");

  auto* report = app.add_subcommand("report", "Render the final text and CSV report");
  std::string report_gold;
  report->add_option("--gold", report_gold, "Exported annotation gold JSONL")->check(CLI::ExistingFile);

  auto* all = app.add_subcommand("all", "Run every stage in order");
  std::string all_questions;
  all->add_option("--questions", all_questions, "Question JSONL to ingest first")->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve-annotations", "Serve the human annotation API");
  AnnotationArgs ann;
  serve->add_option("--port", ann.port, "Port (0 picks a free one)");
  serve->add_option("--host", ann.host, "Bind address");
  serve->add_option("--docs", ann.docs, "Document view JSONL");
  serve->add_option("--judgments", ann.judgments, "Leakage judgment JSONL");
  serve->add_option("--questions", ann.questions, "Stored question JSONL");
  serve->add_option("--db", ann.db, "Annotation store file");
  serve->add_option("--annotators", ann.annotators, "Annotator ids (comma-separated)")->delimiter(',');
  serve->add_option("--sample", ann.sample, "Annotate a deterministic sample of this many docs");
  serve->add_option("--export-gold", ann.export_gold, "Write the gold JSONL and exit");

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("leakaudit");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(common.log_level));

  try {
    PipelineConfig config = load_config(common);
    if (*ingest) {
      if (!questions_in.empty()) config.questions_input = fs::path(questions_in);
      return run_one("ingest", config);
    }
    if (*gen) {
      if (!gen_questions.empty()) config.paths.questions = gen_questions;
      if (!gen_out.empty()) config.paths.queries = gen_out;
      if (gen_n > 0) config.generation.n_queries = gen_n;
      return run_one("gen-queries", config);
    }
    if (*search) {
      if (!engines.empty()) config.engines = parse_engines(engines);
      if (budget > 0) config.budget = budget;
      return run_one("search", config);
    }
    if (*fetch) {
      if (!fetch_in.empty()) config.paths.batches = fetch_in;
      if (!fetch_cache.empty()) config.paths.page_cache = fetch_cache;
      if (concurrency > 0) config.fetch_concurrency = concurrency;
      return run_one("fetch", config);
    }
    if (*process) {
      if (params != "default") {
        const json p = json::parse(read_file(params), nullptr, false);
        if (!p.is_object()) throw Error(ErrorCode::ConfigInvalid, params + " is not a JSON object");
        json merged = to_json(config);
        for (const auto& [k, v] : p.items()) merged[k] = v;
        config = config_from_json(merged);
      }
      return run_one("process", config);
    }
    if (*judge) {
      if (!judge_views.empty()) config.paths.views = judge_views;
      if (!judge_provider.empty()) config.judge.provider_id = judge_provider;
      if (judge_temperature) config.judge.temperature = *judge_temperature;
      return run_one("judge", config);
    }
    if (*aggregate) {
      if (!agg_records.empty()) config.paths.records = agg_records;
      if (!agg_report.empty()) config.paths.report_dir = agg_report;
      if (!agg_gold.empty()) config.gold_path = fs::path(agg_gold);
      return run_one("aggregate", config);
    }
    if (*forecast) {
      if (!conditions.empty()) config.forecast_conditions = conditions;
      if (!eligibility.empty()) config.eligibility = eligibility;
      return run_one("forecast", config);
    }
    if (*report) {
      if (!report_gold.empty()) config.gold_path = fs::path(report_gold);
      return run_one("report", config);
    }
    if (*all) {
      if (!all_questions.empty()) config.questions_input = fs::path(all_questions);
      return run_all(config);
    }
    if (*serve) return serve_annotations(config, ann);
  } catch (const Error& e) {
    std::cout << json{{"ok", false}, {"error", to_string(e.code())}, {"message", e.what()}}.dump(2) << std::endl;
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::cout << json{{"ok", false}, {"error", "Internal"}, {"message", e.what()}}.dump(2) << std::endl;
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
