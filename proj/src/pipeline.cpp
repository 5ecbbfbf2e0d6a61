#include "leakaudit/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "leakaudit/error.hpp"
#include "leakaudit/fetch_extract.hpp"
#include "leakaudit/mock_world.hpp"
#include "leakaudit/report.hpp"

namespace leakaudit {
namespace fs = std::filesystem;

ArtifactPaths ArtifactPaths::under(const fs::path& workdir) {
  ArtifactPaths p;
  p.questions = workdir / "questions.jsonl";
  p.queries = workdir / "queries.jsonl";
  p.batches = workdir / "batches.jsonl";
  p.pages = workdir / "pages.jsonl";
  p.views = workdir / "views.jsonl";
  p.judgments = workdir / "judgments.jsonl";
  p.records = workdir / "records.jsonl";
  p.forecasts = workdir / "forecasts.jsonl";
  p.forecast_failures = workdir / "forecast_failures.jsonl";
  p.report_dir = workdir / "report";
  p.raw_dir = workdir / "raw";
  p.page_cache = workdir / "cache" / "pages";
  p.reply_cache = workdir / "cache" / "replies";
  p.manifest_dir = workdir / "manifests";
  return p;
}

namespace {

// Artifact path fields addressable from the config file's "paths" object.
const std::vector<std::pair<std::string, fs::path ArtifactPaths::*>>& path_fields() {
  static const std::vector<std::pair<std::string, fs::path ArtifactPaths::*>> kFields = {
      {"questions", &ArtifactPaths::questions},
      {"queries", &ArtifactPaths::queries},
      {"batches", &ArtifactPaths::batches},
      {"pages", &ArtifactPaths::pages},
      {"views", &ArtifactPaths::views},
      {"judgments", &ArtifactPaths::judgments},
      {"records", &ArtifactPaths::records},
      {"forecasts", &ArtifactPaths::forecasts},
      {"forecast_failures", &ArtifactPaths::forecast_failures},
      {"report_dir", &ArtifactPaths::report_dir},
      {"raw_dir", &ArtifactPaths::raw_dir},
      {"page_cache", &ArtifactPaths::page_cache},
      {"reply_cache", &ArtifactPaths::reply_cache},
      {"manifest_dir", &ArtifactPaths::manifest_dir},
  };
  return kFields;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

void require(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::MissingUpstream, "stage '" + stage + "' needs " + path.string() + "; run the upstream stage first");
  }
}

template <typename T, typename Parse>
std::vector<T> load_records(const fs::path& path, Parse parse) {
  std::vector<T> out;
  read_jsonl(path, [&](const json& record, std::size_t line) {
    try {
      out.push_back(parse(record));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

template <typename T>
void save_records(const fs::path& path, const std::vector<T>& items) {
  std::vector<json> records;
  records.reserve(items.size());
  for (const auto& item : items) records.push_back(to_json(item));
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  write_jsonl(path, records);
}

std::string host_of(const std::string& url) {
  const auto start = url.find("://");
  if (start == std::string::npos) return url;
  const auto end = url.find_first_of("/?#", start + 3);
  return url.substr(start + 3, end == std::string::npos ? std::string::npos : end - start - 3);
}

// Any "_"/"-" separated segment naming a secret, e.g. "api_key" or "openai-token".
bool looks_like_credential(const std::string& key) {
  static const std::set<std::string> kWords = {"key", "apikey", "secret", "token", "password", "credential", "credentials"};
  std::string segment;
  for (char ch : to_lower(key) + "_") {
    if (ch == '_' || ch == '-') {
      if (kWords.contains(segment)) return true;
      segment.clear();
    } else {
      segment += ch;
    }
  }
  return false;
}

std::string doc_key(std::int64_t question_id, const std::string& url) {
  return std::to_string(question_id) + "-" + sha256_hex(url).substr(0, 12);
}

bool is_item_failure(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ProviderError:
    case ErrorCode::ValidationError:
    case ErrorCode::ParseExhausted:
    case ErrorCode::EngineUnavailable:
    case ErrorCode::EmbedderError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ZeroVector:
      return true;
    default:
      return false;
  }
}

std::vector<std::int64_t> question_ids(const QuestionSet& set) {
  std::vector<std::int64_t> ids;
  for (const auto& q : set.questions) ids.push_back(q.id);
  return ids;
}

std::string relevance_text(const PipelineConfig& config, const Question& q) {
  return config.relevance_query == "title" ? q.title : q.title + "\n\n" + q.background;
}

std::shared_ptr<TextProvider> make_provider(const std::string& id, const Clock& clock,
                                            const std::shared_ptr<HttpClient>& api_http) {
  if (id == "mock") return std::make_shared<MockLanguageModel>(clock);
  if (id.starts_with("openai:") && id.size() > 7) {
    return std::make_shared<OpenAiChatProvider>(openai_options_from_env(id.substr(7)), api_http, clock);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown provider id '" + id + "' (expected mock or openai:<model>)");
}

// ---- stages ----

void stage_ingest(const PipelineConfig& c, Services&, StageSummary& s) {
  if (!c.questions_input) throw Error(ErrorCode::ConfigInvalid, "ingest needs a questions input file");
  s.inputs.push_back(c.questions_input->string());
  if (!fs::exists(*c.questions_input)) {
    throw Error(ErrorCode::MissingUpstream, "questions file " + c.questions_input->string() + " does not exist");
  }
  const auto set = load_questions(*c.questions_input);
  fs::create_directories(c.paths.questions.parent_path());
  save_questions(c.paths.questions, set);
  std::size_t binary = 0;
  for (const auto& q : set.questions) binary += q.is_binary() ? 1 : 0;
  s.outputs.push_back(c.paths.questions.string());
  s.counts = {{"questions", set.questions.size()}, {"binary", binary}};
}

void stage_gen_queries(const PipelineConfig& c, Services& sv, StageSummary& s) {
  require(c.paths.questions, s.stage);
  s.inputs.push_back(c.paths.questions.string());
  const auto set = load_questions(c.paths.questions);
  std::vector<std::optional<GeneratedQueries>> out(set.questions.size());
  std::atomic<std::size_t> failures{0};
  parallel_for(set.questions.size(), c.workers, [&](std::size_t i) {
    try {
      out[i] = generate_queries(*sv.query_provider, set.questions[i], c.generation);
    } catch (const Error& e) {
      if (!is_item_failure(e)) throw;
      spdlog::error("question {}: {}", set.questions[i].id, e.what());
      ++failures;
    }
  });
  std::vector<GeneratedQueries> ok;
  for (auto& g : out) {
    if (g) ok.push_back(std::move(*g));
  }
  save_records(c.paths.queries, ok);
  s.outputs.push_back(c.paths.queries.string());
  s.failures = failures;
  s.counts = {{"questions", set.questions.size()}, {"generated", ok.size()}};
}

void stage_search(const PipelineConfig& c, Services& sv, StageSummary& s) {
  require(c.paths.questions, s.stage);
  require(c.paths.queries, s.stage);
  s.inputs = {c.paths.questions.string(), c.paths.queries.string()};
  const auto set = load_questions(c.paths.questions);
  std::map<std::int64_t, std::vector<std::string>> queries;
  for (const auto& g : load_records<GeneratedQueries>(c.paths.queries, generated_queries_from_json)) {
    if (!set.find(g.question_id)) {
      throw Error(ErrorCode::InvariantViolation, "queries reference unknown question " + std::to_string(g.question_id));
    }
    queries[g.question_id] = g.queries;
  }

  std::map<Engine, std::unique_ptr<SearchEngine>> engines;
  for (Engine e : c.engines) engines[e] = sv.search_engine(e);

  const std::size_t n_cells = set.questions.size() * c.engines.size();
  std::vector<RetrievalBatch> batches(n_cells);
  std::atomic<std::size_t> failures{0};
  CollectOptions options{c.budget, c.max_results_per_query, c.range_start};
  parallel_for(n_cells, c.workers, [&](std::size_t cell) {
    const Question& q = set.questions[cell / c.engines.size()];
    const Engine engine = c.engines[cell % c.engines.size()];
    RetrievalBatch& batch = batches[cell];
    batch.question_id = q.id;
    batch.engine = engine;
    batch.budget = c.budget;
    auto it = queries.find(q.id);
    if (it == queries.end()) {
      batch.warnings.push_back("no generated queries");
      ++failures;
      return;
    }
    try {
      batch = collect_urls(*engines.at(engine), q.id, it->second, engine, cutoff_date(q), options);
    } catch (const Error& e) {
      if (!is_item_failure(e)) throw;
      spdlog::error("question {} [{}]: {}", q.id, to_string(engine), e.what());
      batch.failed_queries = it->second;
      batch.warnings.push_back(e.what());
      ++failures;
    }
  });
  std::map<std::string, std::size_t> usable, urls;
  for (const auto& b : batches) {
    const std::string e(to_string(b.engine));
    usable[e] += b.usable() ? 1 : 0;
    urls[e] += b.urls.size();
  }
  save_records(c.paths.batches, batches);
  s.outputs.push_back(c.paths.batches.string());
  s.failures = failures;
  s.counts = {{"batches", batches.size()}, {"usable_by_engine", usable}, {"urls_by_engine", urls}};
}

void stage_fetch(const PipelineConfig& c, Services& sv, StageSummary& s) {
  require(c.paths.batches, s.stage);
  s.inputs.push_back(c.paths.batches.string());
  std::vector<std::string> urls;
  std::set<std::string> seen;
  for (const auto& b : load_records<RetrievalBatch>(c.paths.batches, retrieval_batch_from_json)) {
    for (const auto& u : b.urls) {
      if (seen.insert(u).second) urls.push_back(u);
    }
  }
  PageCache cache(c.paths.page_cache);
  ConnectionLimiter limiter(c.fetch_concurrency, c.per_host_connections);
  FetchPolicy policy;
  policy.sleep = sv.sleep;
  std::vector<FetchedPage> pages(urls.size());
  parallel_for(urls.size(), c.fetch_concurrency, [&](std::size_t i) {
    ConnectionLimiter::Permit permit(limiter, host_of(urls[i]));
    pages[i] = fetch(urls[i], cache, *sv.web, policy, sv.clock);
  });
  std::size_t failed = 0;
  for (const auto& p : pages) failed += p.ok() ? 0 : 1;
  save_records(c.paths.pages, pages);
  s.outputs.push_back(c.paths.pages.string());
  s.failures = failed;
  s.counts = {{"urls", urls.size()}, {"fetched", urls.size() - failed}, {"failed", failed}};
}

void stage_process(const PipelineConfig& c, Services& sv, StageSummary& s) {
  for (const auto& p : {c.paths.questions, c.paths.batches, c.paths.pages}) require(p, s.stage);
  s.inputs = {c.paths.questions.string(), c.paths.batches.string(), c.paths.pages.string()};
  const auto set = load_questions(c.paths.questions);
  std::map<std::string, FetchedPage> pages;
  for (auto& p : load_records<FetchedPage>(c.paths.pages, fetched_page_from_json)) pages.emplace(p.url, std::move(p));

  std::set<std::pair<std::int64_t, std::string>> keys;
  std::size_t unfetched = 0;
  for (const auto& b : load_records<RetrievalBatch>(c.paths.batches, retrieval_batch_from_json)) {
    for (const auto& u : b.urls) {
      auto it = pages.find(u);
      if (it == pages.end()) {
        ++unfetched;
      } else if (it->second.ok()) {
        keys.emplace(b.question_id, u);
      }
    }
  }
  if (unfetched > 0) {
    throw Error(ErrorCode::MissingUpstream, std::to_string(unfetched) + " batch URLs have no fetch record; rerun fetch");
  }
  const std::vector<std::pair<std::int64_t, std::string>> work(keys.begin(), keys.end());
  std::vector<std::optional<DocumentView>> views(work.size());
  std::atomic<std::size_t> failures{0};
  parallel_for(work.size(), c.workers, [&](std::size_t i) {
    const auto& [qid, url] = work[i];
    try {
      views[i] = process_document(qid, pages.at(url), relevance_text(c, set.at(qid)), c.selection, *sv.embedder);
    } catch (const Error& e) {
      if (!is_item_failure(e)) throw;
      spdlog::error("question {} {}: {}", qid, url, e.what());
      ++failures;
    }
  });
  std::vector<DocumentView> ok;
  std::size_t selected = 0;
  for (auto& v : views) {
    if (!v) continue;
    selected += v->mode == ViewMode::MmrSelected ? 1 : 0;
    ok.push_back(std::move(*v));
  }
  save_records(c.paths.views, ok);
  s.outputs.push_back(c.paths.views.string());
  s.failures = failures;
  s.counts = {{"views", ok.size()}, {"full", ok.size() - selected}, {"mmr_selected", selected}};
}

void stage_judge(const PipelineConfig& c, Services& sv, StageSummary& s) {
  for (const auto& p : {c.paths.questions, c.paths.views, c.paths.batches}) require(p, s.stage);
  s.inputs = {c.paths.questions.string(), c.paths.views.string(), c.paths.batches.string()};
  const auto set = load_questions(c.paths.questions);
  const auto views = load_records<DocumentView>(c.paths.views, document_view_from_json);
  const fs::path raw_dir = c.paths.raw_dir / "judge";
  fs::create_directories(raw_dir);

  std::vector<std::optional<LeakageJudgment>> out(views.size());
  std::atomic<std::size_t> failures{0};
  parallel_for(views.size(), c.workers, [&](std::size_t i) {
    const auto& view = views[i];
    try {
      auto outcome = judge_document(*sv.judge_provider, c.judge, set.at(view.question_id), view);
      write_file_atomic(raw_dir / (doc_key(view.question_id, view.url) + ".txt"), outcome.raw_reply);
      out[i] = std::move(outcome.judgment);
    } catch (const Error& e) {
      if (!is_item_failure(e)) throw;
      spdlog::error("question {} {}: {}", view.question_id, view.url, e.what());
      ++failures;
    }
  });
  std::vector<LeakageJudgment> judgments;
  std::map<std::pair<std::int64_t, std::string>, const LeakageJudgment*> index;
  for (auto& j : out) {
    if (j) judgments.push_back(std::move(*j));
  }
  for (const auto& j : judgments) index[{j.question_id, j.url}] = &j;

  std::vector<UrlJudgmentRecord> records;
  for (const auto& b : load_records<RetrievalBatch>(c.paths.batches, retrieval_batch_from_json)) {
    const int year = cutoff_year(set.at(b.question_id));
    for (const auto& u : b.urls) {
      auto it = index.find({b.question_id, u});
      if (it == index.end()) continue;
      records.push_back(UrlJudgmentRecord{b.question_id, u, b.engine, it->second->leakage_score,
                                          it->second->contains_post_cutoff_info, year});
    }
  }
  save_records(c.paths.judgments, judgments);
  save_records(c.paths.records, records);
  s.outputs = {c.paths.judgments.string(), c.paths.records.string(), raw_dir.string()};
  s.failures = failures;
  s.counts = {{"views", views.size()}, {"judgments", judgments.size()}, {"records", records.size()}};
}

std::optional<AgreementReport> load_gold(const PipelineConfig& c, StageSummary& s) {
  if (!c.gold_path) return std::nullopt;
  require(*c.gold_path, s.stage);
  s.inputs.push_back(c.gold_path->string());
  std::vector<int> human, judge;
  read_jsonl(*c.gold_path, [&](const json& r, std::size_t) {
    human.push_back(r.at("human_score").get<int>());
    judge.push_back(r.at("judge_score").get<int>());
  });
  return agreement_report(human, judge);
}

std::vector<std::int64_t> universe_of(const PipelineConfig& c, StageSummary& s) {
  if (!fs::exists(c.paths.questions)) return {};
  s.inputs.push_back(c.paths.questions.string());
  return question_ids(load_questions(c.paths.questions));
}

void stage_aggregate(const PipelineConfig& c, Services&, StageSummary& s) {
  require(c.paths.records, s.stage);
  s.inputs.push_back(c.paths.records.string());
  const auto records = load_records<UrlJudgmentRecord>(c.paths.records, url_judgment_record_from_json);
  const auto universe = universe_of(c, s);
  ReportInputs in{records, universe, {}, load_gold(c, s)};
  const auto bundle = render_report(in);
  bundle.write(c.paths.report_dir);
  s.outputs.push_back(c.paths.report_dir.string());
  json profiles = json::object();
  for (const auto& [engine, p] : leakage_profiles(records, universe)) {
    profiles[std::string(to_string(engine))] = {{"urls", p.urls_post_cutoff.denominator},
                                                {"pct_post_cutoff", p.urls_post_cutoff.percent()},
                                                {"questions", p.questions_total},
                                                {"unusable", p.questions_unusable}};
  }
  s.counts = {{"records", records.size()}, {"profiles", profiles}};
}

void stage_forecast(const PipelineConfig& c, Services& sv, StageSummary& s) {
  for (const auto& p : {c.paths.questions, c.paths.records, c.paths.views}) require(p, s.stage);
  s.inputs = {c.paths.questions.string(), c.paths.records.string(), c.paths.views.string()};
  const auto set = load_questions(c.paths.questions);
  std::vector<UrlJudgmentRecord> records;
  for (auto& r : load_records<UrlJudgmentRecord>(c.paths.records, url_judgment_record_from_json)) {
    if (r.engine == c.forecast_engine) records.push_back(std::move(r));
  }
  ViewIndex views;
  for (auto& v : load_records<DocumentView>(c.paths.views, document_view_from_json)) {
    auto key = std::pair{v.question_id, v.url};
    views.emplace(std::move(key), std::move(v));
  }
  const auto eligible = eligible_questions(set, records, parse_eligibility(c.eligibility));
  const auto conditions = parse_conditions(c.forecast_conditions);
  ForecastOptions options{c.forecast_max_retries, c.workers};
  const auto run = evaluate_conditions(*sv.forecast_provider, set, eligible, records, views, conditions, options);

  fs::create_directories(c.paths.raw_dir / "forecast");
  for (const auto& r : run.results) write_file_atomic(c.paths.raw_dir / r.raw_reply_ref, r.raw_reply);
  save_records(c.paths.forecasts, run.results);
  std::vector<json> failures;
  for (const auto& f : run.failures) {
    failures.push_back({{"question_id", f.question_id}, {"condition", to_string(f.condition)}, {"error", f.error}});
  }
  write_jsonl(c.paths.forecast_failures, failures);
  s.outputs = {c.paths.forecasts.string(), c.paths.forecast_failures.string()};
  s.failures = run.failures.size();
  json summary = json::array();
  for (const auto& cs : run.summaries) summary.push_back(to_json(cs));
  s.counts = {{"eligible", eligible.size()}, {"results", run.results.size()}, {"summary", summary}};
}

void stage_report(const PipelineConfig& c, Services&, StageSummary& s) {
  require(c.paths.records, s.stage);
  require(c.paths.forecasts, s.stage);
  s.inputs = {c.paths.records.string(), c.paths.forecasts.string()};
  const auto records = load_records<UrlJudgmentRecord>(c.paths.records, url_judgment_record_from_json);
  const auto results = load_records<ForecastResult>(c.paths.forecasts, forecast_result_from_json);
  std::vector<ForecastFailure> failures;
  if (fs::exists(c.paths.forecast_failures)) {
    s.inputs.push_back(c.paths.forecast_failures.string());
    read_jsonl(c.paths.forecast_failures, [&](const json& r, std::size_t) {
      failures.push_back(ForecastFailure{r.at("question_id").get<std::int64_t>(),
                                         condition_from_string(r.at("condition").get<std::string>()),
                                         r.value("error", "")});
    });
  }
  const auto conditions = parse_conditions(c.forecast_conditions);
  const auto summaries = summarize(results, failures, conditions);
  const auto universe = universe_of(c, s);
  ReportInputs in{records, universe, summaries, load_gold(c, s)};
  render_report(in).write(c.paths.report_dir);
  s.outputs.push_back(c.paths.report_dir.string());
  s.counts = {{"records", records.size()}, {"forecasts", results.size()}};
}

json file_digest(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return nullptr;
  return sha256_hex(read_file(path));
}

void write_manifest(const PipelineConfig& c, const Services& sv, const StageSummary& s,
                    std::chrono::system_clock::time_point started) {
  json inputs = json::object();
  json outputs = json::object();
  for (const auto& p : s.inputs) inputs[p] = file_digest(p);
  for (const auto& p : s.outputs) outputs[p] = file_digest(p);
  auto stamp = [](std::chrono::system_clock::time_point t) {
    return format_timestamp(std::chrono::time_point_cast<std::chrono::seconds>(t));
  };
  json manifest{{"stage", s.stage},
                {"config_hash", config_hash(c)},
                {"config", to_json(c)},
                {"providers",
                 {{"query", sv.query_provider ? sv.query_provider->id() : ""},
                  {"judge", sv.judge_provider ? sv.judge_provider->id() : ""},
                  {"forecast", sv.forecast_provider ? sv.forecast_provider->id() : ""},
                  {"embedder", sv.embedder ? sv.embedder->id() : ""},
                  {"tokenizer", default_tokenizer().id()}}},
                {"started_at", stamp(started)},
                {"finished_at", stamp(std::chrono::system_clock::now())},
                {"inputs", inputs},
                {"outputs", outputs},
                {"summary", to_json(s)}};
  fs::create_directories(c.paths.manifest_dir);
  write_file_atomic(c.paths.manifest_dir / (s.stage + ".json"), manifest.dump(2) + "\n");
}

}  // namespace

void set_workdir(PipelineConfig& config, const fs::path& workdir) {
  config.workdir = workdir;
  config.paths = ArtifactPaths::under(workdir);
}

EligibilityRule parse_eligibility(const std::string& spec) {
  EligibilityRule rule;
  rule.require_binary = false;
  rule.require_score4_doc = false;
  bool have_year = false;
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto dash = spec.find('-', start);
    if (dash == std::string::npos) dash = spec.size();
    const std::string part = spec.substr(start, dash - start);
    if (part == "binary") {
      rule.require_binary = true;
    } else if (part == "score4") {
      rule.require_score4_doc = true;
    } else if (!part.empty() && part.find_first_not_of("0123456789") == std::string::npos && !have_year) {
      rule.open_year = std::stoi(part);
      have_year = true;
    } else {
      throw Error(ErrorCode::ConfigInvalid, "eligibility '" + spec + "': unknown part '" + part + "'");
    }
    start = dash + 1;
  }
  if (!have_year) throw Error(ErrorCode::ConfigInvalid, "eligibility '" + spec + "' needs an open year");
  return rule;
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
  if (engines.empty()) fail("at least one engine is required");
  if (std::set<Engine>(engines.begin(), engines.end()).size() != engines.size()) fail("engines listed twice");
  if (search_backend != "mock" && search_backend != "live") fail("search_backend must be mock or live");
  if (web_backend != "mock" && web_backend != "live") fail("web_backend must be mock or live");
  if (budget <= 0) fail("budget must be positive");
  if (max_results_per_query <= 0) fail("max_results_per_query must be positive");
  if (generation.n_queries < kMinQueries || generation.n_queries > kMaxQueries) fail("n_queries must lie in [10, 20]");
  if (generation.max_retries < 0 || forecast_max_retries < 0) fail("retry counts must be >= 0");
  if (relevance_query != "title" && relevance_query != "title_background") {
    fail("relevance_query must be title or title_background");
  }
  if (workers == 0 || fetch_concurrency == 0 || per_host_connections == 0) fail("concurrency bounds must be >= 1");
  selection.validate();
  judge.validate();
  parse_conditions(forecast_conditions);
  parse_eligibility(eligibility);
  if (fixed_time) parse_timestamp(*fixed_time);

  std::set<fs::path> seen;
  for (const auto& [name, member] : path_fields()) {
    const auto p = (paths.*member).lexically_normal();
    if (!seen.insert(p).second) fail("artifact path '" + p.string() + "' is used twice");
  }
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
  PipelineConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (looks_like_credential(key)) {
        throw Error(ErrorCode::ConfigInvalid, "'" + key + "' looks like a credential; secrets are read from environment variables only");
      }
    }
    std::set<std::string> known;
    auto get = [&](const char* key) -> const json* {
      known.insert(key);
      return j.contains(key) && !j.at(key).is_null() ? &j.at(key) : nullptr;
    };
    if (auto v = get("workdir")) set_workdir(c, resolve(base_dir, v->get<std::string>()));
    if (auto v = get("questions")) c.questions_input = resolve(base_dir, v->get<std::string>());
    if (auto v = get("gold")) c.gold_path = resolve(base_dir, v->get<std::string>());
    if (auto v = get("engines")) {
      c.engines.clear();
      for (const auto& e : *v) c.engines.push_back(engine_from_string(e.get<std::string>()));
    }
    if (auto v = get("search_backend")) c.search_backend = v->get<std::string>();
    if (auto v = get("budget")) c.budget = v->get<int>();
    if (auto v = get("max_results_per_query")) c.max_results_per_query = v->get<int>();
    if (auto v = get("range_start")) c.range_start = parse_date(v->get<std::string>());
    if (auto v = get("n_queries")) c.generation.n_queries = v->get<int>();
    if (auto v = get("query_max_retries")) c.generation.max_retries = v->get<int>();
    if (auto v = get("query_provider")) c.generation.provider_id = v->get<std::string>();
    if (auto v = get("embedder")) c.embedder_id = v->get<std::string>();
    if (auto v = get("relevance_query")) c.relevance_query = v->get<std::string>();
    if (auto v = get("chunk_tokens")) c.selection.chunk_tokens = v->get<int>();
    if (auto v = get("max_chunks")) c.selection.max_chunks = v->get<int>();
    if (auto v = get("lambda")) c.selection.lambda = v->get<double>();
    if (auto v = get("passthrough_threshold")) c.selection.passthrough_threshold = v->get<int>();
    if (auto v = get("judge_provider")) c.judge.provider_id = v->get<std::string>();
    if (auto v = get("judge_temperature")) c.judge.temperature = v->get<double>();
    if (auto v = get("judge_max_retries")) c.judge.max_retries = v->get<int>();
    if (auto v = get("forecast_provider")) c.forecast_provider_id = v->get<std::string>();
    if (auto v = get("forecast_conditions")) c.forecast_conditions = v->get<std::string>();
    if (auto v = get("eligibility")) c.eligibility = v->get<std::string>();
    if (auto v = get("forecast_engine")) c.forecast_engine = engine_from_string(v->get<std::string>());
    if (auto v = get("forecast_max_retries")) c.forecast_max_retries = v->get<int>();
    if (auto v = get("web_backend")) c.web_backend = v->get<std::string>();
    if (auto v = get("fetch_concurrency")) c.fetch_concurrency = v->get<std::size_t>();
    if (auto v = get("per_host_connections")) c.per_host_connections = v->get<std::size_t>();
    if (auto v = get("workers")) c.workers = v->get<std::size_t>();
    if (auto v = get("fixed_time")) c.fixed_time = v->get<std::string>();
    if (auto v = get("paths")) {
      for (const auto& [key, value] : v->items()) {
        bool matched = false;
        for (const auto& [name, member] : path_fields()) {
          if (name == key) {
            c.paths.*member = resolve(base_dir, value.get<std::string>());
            matched = true;
          }
        }
        if (!matched) throw Error(ErrorCode::ConfigInvalid, "unknown artifact path '" + key + "'");
      }
    }
    for (const auto& [key, _] : j.items()) {
      if (!known.contains(key)) throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  c.validate();
  return c;
}

json to_json(const PipelineConfig& c) {
  json engines = json::array();
  for (Engine e : c.engines) engines.push_back(to_string(e));
  json paths = json::object();
  for (const auto& [name, member] : path_fields()) paths[name] = (c.paths.*member).generic_string();
  return json{{"workdir", c.workdir.generic_string()},
              {"questions", c.questions_input ? json(c.questions_input->generic_string()) : json(nullptr)},
              {"gold", c.gold_path ? json(c.gold_path->generic_string()) : json(nullptr)},
              {"engines", engines},
              {"search_backend", c.search_backend},
              {"budget", c.budget},
              {"max_results_per_query", c.max_results_per_query},
              {"range_start", format_date(c.range_start)},
              {"n_queries", c.generation.n_queries},
              {"query_max_retries", c.generation.max_retries},
              {"query_provider", c.generation.provider_id},
              {"embedder", c.embedder_id},
              {"relevance_query", c.relevance_query},
              {"chunk_tokens", c.selection.chunk_tokens},
              {"max_chunks", c.selection.max_chunks},
              {"lambda", c.selection.lambda},
              {"passthrough_threshold", c.selection.passthrough_threshold},
              {"judge_provider", c.judge.provider_id},
              {"judge_temperature", c.judge.temperature},
              {"judge_max_retries", c.judge.max_retries},
              {"forecast_provider", c.forecast_provider_id},
              {"forecast_conditions", c.forecast_conditions},
              {"eligibility", c.eligibility},
              {"forecast_engine", to_string(c.forecast_engine)},
              {"forecast_max_retries", c.forecast_max_retries},
              {"web_backend", c.web_backend},
              {"fetch_concurrency", c.fetch_concurrency},
              {"per_host_connections", c.per_host_connections},
              {"workers", c.workers},
              {"fixed_time", c.fixed_time ? json(*c.fixed_time) : json(nullptr)},
              {"paths", paths}};
}

std::string config_hash(const PipelineConfig& config) { return sha256_hex(to_json(config).dump()); }

Services make_services(const PipelineConfig& config) {
  config.validate();
  Services sv;
  sv.clock = config.fixed_time ? fixed_clock(parse_timestamp(*config.fixed_time)) : system_clock();
  std::shared_ptr<HttpClient> api_http = make_http_client();
  auto cached = [&](const std::string& id) -> std::shared_ptr<TextProvider> {
    return std::make_shared<CachingTextProvider>(make_provider(id, sv.clock, api_http), config.paths.reply_cache);
  };
  sv.query_provider = cached(config.generation.provider_id);
  sv.judge_provider = cached(config.judge.provider_id);
  sv.forecast_provider = cached(config.forecast_provider_id);

  if (config.embedder_id == "hashing") {
    sv.embedder = std::make_shared<HashingEmbedder>();
  } else if (config.embedder_id.starts_with("openai:") && config.embedder_id.size() > 7) {
    sv.embedder = std::make_shared<OpenAiEmbedder>(openai_options_from_env(config.embedder_id.substr(7)), api_http);
  } else {
    throw Error(ErrorCode::ConfigInvalid, "unknown embedder '" + config.embedder_id + "'");
  }

  if (config.web_backend == "mock") {
    sv.web = std::make_shared<MockWebClient>();
  } else {
    sv.web = make_http_client();
  }

  if (config.search_backend == "mock") {
    sv.search_engine = [](Engine e) -> std::unique_ptr<SearchEngine> {
      return std::make_unique<MockSearchEngine>(synthetic_results(e));
    };
  } else {
    auto search_http = std::shared_ptr<HttpClient>(make_http_client());
    sv.search_engine = [search_http](Engine e) -> std::unique_ptr<SearchEngine> {
      if (e == Engine::Google) return GoogleSearchEngine::from_env(search_http);
      const char* endpoint = std::getenv("LEAKAUDIT_DDG_ENDPOINT");
      if (endpoint && *endpoint) return std::make_unique<DuckDuckGoSearchEngine>(search_http, endpoint);
      return std::make_unique<DuckDuckGoSearchEngine>(search_http);
    };
  }
  return sv;
}

json to_json(const StageSummary& s) {
  return json{{"stage", s.stage},     {"ok", s.ok()},         {"inputs", s.inputs},
              {"outputs", s.outputs}, {"counts", s.counts},   {"failures", s.failures},
              {"errors", s.errors},   {"wall_seconds", s.wall_seconds}};
}

StageSummary run_stage(const std::string& name, const PipelineConfig& config, Services& services) {
  using Fn = void (*)(const PipelineConfig&, Services&, StageSummary&);
  static const std::map<std::string, Fn> kStages = {
      {"ingest", stage_ingest},   {"gen-queries", stage_gen_queries}, {"search", stage_search},
      {"fetch", stage_fetch},     {"process", stage_process},         {"judge", stage_judge},
      {"aggregate", stage_aggregate}, {"forecast", stage_forecast},   {"report", stage_report},
  };
  auto it = kStages.find(name);
  if (it == kStages.end()) throw Error(ErrorCode::ConfigInvalid, "unknown stage '" + name + "'");
  config.validate();
  fs::create_directories(config.workdir);

  StageSummary summary;
  summary.stage = name;
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  it->second(config, services, summary);
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(config, services, summary, started);
  spdlog::info("stage {} finished in {:.2f}s ({} item failures)", name, summary.wall_seconds, summary.failures);
  return summary;
}

StageSummary run_stage(const std::string& name, const PipelineConfig& config) {
  Services services = make_services(config);
  return run_stage(name, config, services);
}

}  // namespace leakaudit
