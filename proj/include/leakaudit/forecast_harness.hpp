#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leakaudit/doc_processing.hpp"
#include "leakaudit/metrics_aggregation.hpp"
#include "leakaudit/provider.hpp"
#include "leakaudit/question_store.hpp"

namespace leakaudit {

enum class ConditionName { NoRetrieval, Score0Only, Scores2To4, Scores3To4, Score4Only };

std::string_view to_string(ConditionName c);
ConditionName condition_from_string(std::string_view name);

struct ForecastCondition {
  ConditionName name = ConditionName::NoRetrieval;
  std::set<int> scores;  // admitted leakage scores; empty for no_retrieval

  static ForecastCondition of(ConditionName name);
  bool admits(int score) const { return scores.contains(score); }
};

std::vector<ForecastCondition> all_conditions();
// "all" or a comma-separated list of condition names.
std::vector<ForecastCondition> parse_conditions(std::string_view spec);

struct EligibilityRule {
  bool require_binary = true;
  int open_year = 2025;
  bool require_score4_doc = true;
};

// Ids in question-set order.
std::vector<std::int64_t> eligible_questions(const QuestionSet& questions, std::span<const UrlJudgmentRecord> records,
                                             const EligibilityRule& rule = {});

using ViewIndex = std::map<std::pair<std::int64_t, std::string>, DocumentView>;

// Views whose score the condition admits, ordered by descending score then URL.
// Throws Error(InvariantViolation) when a judged URL has no view.
std::vector<DocumentView> select_documents(std::span<const UrlJudgmentRecord> records_for_question,
                                           const ForecastCondition& condition, const ViewIndex& views);

inline constexpr std::string_view kNoResearchPlaceholder = "No research available.";

std::string render_summary_report(std::span<const DocumentView> views);
// Throws Error(PreconditionViolation) for non-binary questions.
std::string build_forecast_prompt(const Question& q, std::span<const DocumentView> views);

// Last "Probability: N[%]" in the reply. Values above 1 are percentages; the result is clamped.
// Throws Error(NoProbabilityFound).
double parse_probability(std::string_view reply);

struct ForecastResult {
  std::int64_t question_id = 0;
  ConditionName condition = ConditionName::NoRetrieval;
  std::size_t n_sources = 0;
  double probability = 0.0;
  bool outcome_yes = false;
  double brier = 0.0;
  std::string raw_reply_ref;
  std::string raw_reply;  // not serialized; the pipeline writes it to raw_reply_ref
  int attempts = 1;

  friend bool operator==(const ForecastResult&, const ForecastResult&) = default;
};

json to_json(const ForecastResult& r);
ForecastResult forecast_result_from_json(const json& record);
// Location of the raw reply, relative to the raw-reply directory.
std::string raw_reply_ref(std::int64_t question_id, ConditionName condition);

struct ForecastFailure {
  std::int64_t question_id = 0;
  ConditionName condition = ConditionName::NoRetrieval;
  std::string error;
};

struct ConditionSummary {
  ConditionName condition = ConditionName::NoRetrieval;
  std::size_t n = 0;
  std::size_t failures = 0;
  double avg_sources = 0.0;
  double mean_brier = 0.0;
  double median_brier = 0.0;

  friend bool operator==(const ConditionSummary&, const ConditionSummary&) = default;
};

json to_json(const ConditionSummary& s);
ConditionSummary condition_summary_from_json(const json& record);

// Aggregates successful results per condition, in the order given.
std::vector<ConditionSummary> summarize(std::span<const ForecastResult> results,
                                        std::span<const ForecastFailure> failures,
                                        std::span<const ForecastCondition> conditions);

struct ForecastOptions {
  int max_retries = 2;
  std::size_t workers = 4;
};

struct ForecastRun {
  std::vector<ForecastResult> results;  // sorted by (question, condition)
  std::vector<ForecastFailure> failures;
  std::vector<ConditionSummary> summaries;
};

ForecastRun evaluate_conditions(TextProvider& forecaster, const QuestionSet& questions,
                                std::span<const std::int64_t> eligible, std::span<const UrlJudgmentRecord> records,
                                const ViewIndex& views, std::span<const ForecastCondition> conditions,
                                const ForecastOptions& options = {});

}  // namespace leakaudit
