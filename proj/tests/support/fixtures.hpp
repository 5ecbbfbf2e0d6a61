#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "leakaudit/error.hpp"
#include "leakaudit/forecast_harness.hpp"
#include "leakaudit/metrics_aggregation.hpp"
#include "leakaudit/pipeline.hpp"
#include "leakaudit/question_store.hpp"

namespace fixtures {

using namespace leakaudit;

Question make_question(std::int64_t id, const std::string& open_time, bool yes = false, bool binary = true);

// Reference per-engine counts for the leakage-profile and per-year tables.
struct EngineCounts {
  Engine engine;
  std::size_t questions_usable;
  std::array<std::size_t, 4> severity_ge;  // questions with max score >= 1, >= 2, >= 3, == 4
  // (year, flagged, total)
  std::vector<std::tuple<int, std::size_t, std::size_t>> years;
};

EngineCounts google_counts();
EngineCounts duckduckgo_counts();

// 393 question ids over cutoff years 2021, 2022, 2023 and 2025.
struct AuditCorpus {
  QuestionSet questions;
  std::vector<std::int64_t> universe;
  std::vector<UrlJudgmentRecord> records;  // both engines
};

// URL records whose per-engine totals, flags and per-question severities equal the reference counts.
const AuditCorpus& audit_corpus();

// 93 binary questions opened in 2025 with a score-4 document, among decoys that each break one
// part of the rule.
struct EligibilityCorpus {
  QuestionSet questions;
  std::vector<UrlJudgmentRecord> records;
  ViewIndex views;
  std::vector<std::int64_t> expected;
};
EligibilityCorpus eligibility_corpus();

// Human and judge vectors of length 134 whose merged-0/1 agreement is 102/134, found by enumerating
// disagreement patterns until the quadratic kappa and score-4 F1 round to 0.85 and 0.82.
struct AgreementFixture {
  std::vector<int> human;
  std::vector<int> judge;
};
AgreementFixture agreement_fixture_134();

// Independent oracles.
std::vector<std::size_t> mmr_oracle(const std::vector<double>& query, const std::vector<std::vector<double>>& chunks,
                                    double lambda, std::size_t k);
double qwk_oracle(const std::vector<int>& human, const std::vector<int>& judge);
double merged_accuracy_oracle(const std::vector<int>& human, const std::vector<int>& judge);

struct AdversarialReply {
  std::string name;
  std::string reply;
  ErrorCode expected;
};
const std::vector<AdversarialReply>& adversarial_judge_replies();

// Text of exactly n tokens under the default tokenizer.
std::string text_with_tokens(std::size_t n, std::uint64_t seed = 1);

class FunctionProvider final : public TextProvider {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit FunctionProvider(Fn fn, std::string id = "function") : fn_(std::move(fn)), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  Completion complete(const CompletionRequest& request) override { return Completion{fn_(request), {}}; }

 private:
  Fn fn_;
  std::string id_;
};

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

// The bundled six-question sample set.
std::filesystem::path sample_questions();

PipelineConfig mock_config(const std::filesystem::path& workdir, const std::filesystem::path& questions);

// Runs every stage in order; returns the summaries.
std::vector<StageSummary> run_all_stages(const PipelineConfig& config);

// Relative path -> bytes for every file under `root`, skipping `skip_dirs` at the top level.
std::map<std::string, std::string> snapshot(const std::filesystem::path& root,
                                            const std::vector<std::string>& skip_dirs = {"manifests"});

}  // namespace fixtures
