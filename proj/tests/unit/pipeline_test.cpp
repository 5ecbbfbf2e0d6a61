#include <doctest.h>

#include <atomic>

#include "fixtures.hpp"
#include "leakaudit/pipeline.hpp"

using namespace leakaudit;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

std::size_t count_lines(const fs::path& p) {
  const auto text = read_file(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = config_from_json(json{{"workdir", "w"}, {"chunk_tokens", 128}, {"max_chunks", 60}}, "/base");
  CHECK(c.workdir == fs::path("/base/w"));
  CHECK(c.paths.views == fs::path("/base/w/views.jsonl"));
  CHECK(c.selection.chunk_tokens == 128);
  CHECK(config_from_json(to_json(c)).selection.max_chunks == 60);
  CHECK(config_hash(c) == config_hash(config_from_json(to_json(c))));
  CHECK(config_hash(c) != config_hash(PipelineConfig{}));

  CHECK(code_of([] { config_from_json(json{{"api_key", "sk-123"}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json{{"openai-secret", "x"}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json{{"google_token", "x"}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json{{"colour", "blue"}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json{{"chunk_tokens", "many"}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json{{"passthrough_threshold", 9000}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json{{"paths", {{"nowhere", "x"}}}}); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from_json(json::array()); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("eligibility spec") {
  const auto r = parse_eligibility("2025-binary-score4");
  CHECK(r.open_year == 2025);
  CHECK(r.require_binary);
  CHECK(r.require_score4_doc);
  CHECK_FALSE(parse_eligibility("2024").require_binary);
  CHECK_THROWS_AS(parse_eligibility("2025-ternary"), Error);
}

TEST_CASE("stages require their upstream artifacts") {
  const auto dir = fixtures::temp_dir("upstream");
  const auto config = fixtures::mock_config(dir, fixtures::sample_questions());
  CHECK(code_of([&] { run_stage("forecast", config); }) == ErrorCode::MissingUpstream);
  CHECK(code_of([&] { run_stage("judge", config); }) == ErrorCode::MissingUpstream);
  CHECK(code_of([&] { run_stage("teleport", config); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("mock pipeline end to end") {
  const auto dir = fixtures::temp_dir("e2e");
  const auto config = fixtures::mock_config(dir, fixtures::sample_questions());
  const auto summaries = fixtures::run_all_stages(config);
  REQUIRE(summaries.size() == kStageNames.size());
  for (const auto& s : summaries) {
    CAPTURE(s.stage);
    CHECK(s.ok());
    CHECK(fs::exists(config.paths.manifest_dir / (s.stage + ".json")));
  }
  CHECK(count_lines(config.paths.questions) == 6);
  CHECK(count_lines(config.paths.records) > 0);
  CHECK(fs::exists(config.paths.report_dir / "report.txt"));
  CHECK(fs::exists(config.paths.report_dir / "forecast_summary.csv"));
  const auto manifest = json::parse(read_file(config.paths.manifest_dir / "judge.json"));
  CHECK(manifest.at("summary").at("ok") == true);
  CHECK(manifest.dump().find("LEAKAUDIT_OPENAI_API_KEY") == std::string::npos);

  // Every persisted judgment passes validation and every record has a view.
  read_jsonl(config.paths.judgments, [](const json& r, std::size_t) { CHECK_NOTHROW(leakage_judgment_from_json(r)); });

  // A rerun over the same workdir reproduces every artifact.
  const auto before = fixtures::snapshot(dir);
  fixtures::run_all_stages(config);
  CHECK(fixtures::snapshot(dir) == before);
}

TEST_CASE("runs in separate workdirs are byte-identical") {
  const auto a = fixtures::temp_dir("det-a");
  const auto b = fixtures::temp_dir("det-b");
  fixtures::run_all_stages(fixtures::mock_config(a, fixtures::sample_questions()));
  fixtures::run_all_stages(fixtures::mock_config(b, fixtures::sample_questions()));
  const auto sa = fixtures::snapshot(a);
  const auto sb = fixtures::snapshot(b);
  CHECK(sa.size() == sb.size());
  for (const auto& [path, bytes] : sa) {
    CAPTURE(path);
    REQUIRE(sb.contains(path));
    CHECK(sb.at(path) == bytes);
  }
}

TEST_CASE("adversarial judge replies never reach the judgments file") {
  const auto dir = fixtures::temp_dir("adversarial");
  const auto config = fixtures::mock_config(dir, fixtures::sample_questions());
  Services services = make_services(config);
  for (const auto& stage : {"ingest", "gen-queries", "search", "fetch", "process"}) run_stage(stage, config, services);
  const auto& replies = fixtures::adversarial_judge_replies();
  std::atomic<std::size_t> calls{0};
  services.judge_provider = std::make_shared<fixtures::FunctionProvider>([&](const CompletionRequest&) {
    return replies[calls++ % replies.size()].reply;
  });
  const auto s = run_stage("judge", config, services);
  CHECK(s.ok());
  CHECK(s.counts.at("judgments") == 0);
  CHECK(s.failures == s.counts.at("views").get<std::size_t>());
  CHECK(calls >= 20);
  CHECK(count_lines(config.paths.judgments) == 0);
  CHECK(count_lines(config.paths.records) == 0);
}
