#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leakaudit/search_retrieval.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

struct UrlJudgmentRecord {
  std::int64_t question_id = 0;
  std::string url;
  Engine engine = Engine::Google;
  int leakage_score = 0;
  bool contains_post_cutoff_info = false;
  int cutoff_year = 0;

  friend bool operator==(const UrlJudgmentRecord&, const UrlJudgmentRecord&) = default;
};

json to_json(const UrlJudgmentRecord& r);
// Enforces the score range and the score/flag consistency rule.
UrlJudgmentRecord url_judgment_record_from_json(const json& record);

// Exact fraction; rendering never goes through floating point.
struct Rate {
  std::size_t numerator = 0;
  std::size_t denominator = 0;

  double value() const;
  // Percentage rounded half-up to one decimal, e.g. "33.2". "n/a" when the denominator is 0.
  std::string percent() const;
  friend bool operator==(const Rate&, const Rate&) = default;
};

std::string format_percent(std::size_t numerator, std::size_t denominator);
// Half-up rounding to `places` decimals ("0.250").
std::string format_fixed(double value, int places);

// Maximum score over one question's judged URLs. Throws Error(EmptyQuestion).
int question_severity(std::span<const UrlJudgmentRecord> records);

struct LeakageProfile {
  Engine engine = Engine::Google;
  Rate urls_post_cutoff;          // flagged / judged URLs
  std::size_t questions_total = 0;     // questions with at least one judged URL
  std::size_t questions_unusable = 0;  // questions in the universe with none
  Rate frac_ge1, frac_ge2, frac_ge3, frac_eq4;

  friend bool operator==(const LeakageProfile&, const LeakageProfile&) = default;
};

// Profile of the records for one engine. `universe` lists every question that was meant to be
// audited; the ones without a judged URL are reported as unusable. An empty universe means
// "the questions present in the records".
LeakageProfile leakage_profile(std::span<const UrlJudgmentRecord> records, Engine engine,
                               std::span<const std::int64_t> universe = {});
std::map<Engine, LeakageProfile> leakage_profiles(std::span<const UrlJudgmentRecord> records,
                                                  std::span<const std::int64_t> universe = {});

struct YearRate {
  int year = 0;
  Engine engine = Engine::Google;
  Rate rate;

  friend bool operator==(const YearRate&, const YearRate&) = default;
};

// Sorted by (year, engine); combinations without URLs are omitted.
std::vector<YearRate> per_year_rates(std::span<const UrlJudgmentRecord> records);

inline constexpr int kNumScores = 5;
using ConfusionMatrix = std::array<std::array<std::size_t, kNumScores>, kNumScores>;

// Rows are human labels, columns judge labels.
// Throws Error(LengthMismatch) or Error(LabelOutOfRange).
ConfusionMatrix confusion_matrix(std::span<const int> human, std::span<const int> judge);

// Exact agreement after mapping 0 and 1 to the same bucket.
double exact_accuracy_merged01(std::span<const int> human, std::span<const int> judge);

// Weights (i - j)^2 / (K - 1)^2 with K = 5. Throws Error(DegenerateMarginals) when the
// chance-expected disagreement is zero, Error(PreconditionViolation) for fewer than 2 items.
double quadratic_weighted_kappa(std::span<const int> human, std::span<const int> judge);

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool degenerate = false;  // no actual and no predicted positives
};

F1Result f1_for_class(std::span<const int> human, std::span<const int> judge, int cls);

struct AgreementReport {
  ConfusionMatrix confusion{};
  double exact_accuracy_merged01 = 0.0;
  std::optional<double> qwk;  // absent when the marginals are degenerate
  std::array<F1Result, kNumScores> f1_per_class{};
  std::size_t n = 0;
};

AgreementReport agreement_report(std::span<const int> human, std::span<const int> judge);
json to_json(const AgreementReport& report);

// Squared error against the 0/1 outcome. Throws Error(OutOfRangeProbability).
double brier(double probability, bool outcome_yes);
double mean(std::span<const double> values);
// Mean of the two central values for an even count. Throws Error(PreconditionViolation) if empty.
double median(std::span<const double> values);

}  // namespace leakaudit
