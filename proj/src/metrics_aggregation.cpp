#include "leakaudit/metrics_aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

void check_labels(std::span<const int> human, std::span<const int> judge) {
  if (human.size() != judge.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(human.size()) + " human labels vs " + std::to_string(judge.size()) + " judge labels");
  }
  auto check = [](std::span<const int> labels, const char* who) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= kNumScores) {
        throw Error(ErrorCode::LabelOutOfRange, std::string(who) + " label " + std::to_string(labels[i]) +
                                                    " at position " + std::to_string(i));
      }
    }
  };
  check(human, "human");
  check(judge, "judge");
}

void check_consistency(const UrlJudgmentRecord& r) {
  if (r.leakage_score < 0 || r.leakage_score > 4) {
    throw Error(ErrorCode::ScoreOutOfRange, r.url + ": leakage_score " + std::to_string(r.leakage_score));
  }
  if (r.leakage_score >= 1 && !r.contains_post_cutoff_info) {
    throw Error(ErrorCode::InconsistentFlag, r.url + ": score " + std::to_string(r.leakage_score) + " without flag");
  }
}

}  // namespace

json to_json(const UrlJudgmentRecord& r) {
  return json{{"question_id", r.question_id},
              {"url", r.url},
              {"engine", to_string(r.engine)},
              {"leakage_score", r.leakage_score},
              {"contains_post_cutoff_info", r.contains_post_cutoff_info},
              {"cutoff_year", r.cutoff_year}};
}

UrlJudgmentRecord url_judgment_record_from_json(const json& record) {
  UrlJudgmentRecord r;
  r.question_id = record.at("question_id").get<std::int64_t>();
  r.url = record.at("url").get<std::string>();
  r.engine = engine_from_string(record.at("engine").get<std::string>());
  r.leakage_score = record.at("leakage_score").get<int>();
  r.contains_post_cutoff_info = record.at("contains_post_cutoff_info").get<bool>();
  r.cutoff_year = record.at("cutoff_year").get<int>();
  check_consistency(r);
  return r;
}

double Rate::value() const {
  return denominator == 0 ? 0.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::string Rate::percent() const { return format_percent(numerator, denominator); }

std::string format_percent(std::size_t numerator, std::size_t denominator) {
  if (denominator == 0) return "n/a";
  // tenths of a percent, rounded half-up: floor(1000 n / d + 1/2)
  const auto tenths = (2000 * static_cast<unsigned __int128>(numerator) + denominator) / (2 * static_cast<unsigned __int128>(denominator));
  const auto whole = static_cast<unsigned long long>(tenths / 10);
  const auto frac = static_cast<unsigned>(tenths % 10);
  return std::to_string(whole) + "." + std::to_string(frac);
}

std::string format_fixed(double value, int places) {
  if (!std::isfinite(value)) return "nan";
  const double scale = std::pow(10.0, places);
  const bool negative = value < 0;
  // the small epsilon absorbs binary representation error at exact halves (0.0125 -> 0.013)
  const double scaled = std::floor(std::fabs(value) * scale + 0.5 + 1e-9);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, scaled / scale);
  std::string out = buf;
  if (negative && scaled != 0.0) out.insert(out.begin(), '-');
  return out;
}

int question_severity(std::span<const UrlJudgmentRecord> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyQuestion, "question has no judged URLs");
  int severity = 0;
  for (const auto& r : records) severity = std::max(severity, r.leakage_score);
  return severity;
}

LeakageProfile leakage_profile(std::span<const UrlJudgmentRecord> records, Engine engine,
                               std::span<const std::int64_t> universe) {
  LeakageProfile profile;
  profile.engine = engine;
  std::map<std::int64_t, int> severity;
  for (const auto& r : records) {
    if (r.engine != engine) continue;
    ++profile.urls_post_cutoff.denominator;
    if (r.contains_post_cutoff_info) ++profile.urls_post_cutoff.numerator;
    auto [it, inserted] = severity.try_emplace(r.question_id, r.leakage_score);
    if (!inserted) it->second = std::max(it->second, r.leakage_score);
  }
  profile.questions_total = severity.size();
  if (!universe.empty()) {
    std::set<std::int64_t> all(universe.begin(), universe.end());
    for (const auto& [qid, _] : severity) all.erase(qid);
    profile.questions_unusable = all.size();
  }
  for (Rate* rate : {&profile.frac_ge1, &profile.frac_ge2, &profile.frac_ge3, &profile.frac_eq4}) {
    rate->denominator = profile.questions_total;
  }
  for (const auto& [qid, s] : severity) {
    if (s >= 1) ++profile.frac_ge1.numerator;
    if (s >= 2) ++profile.frac_ge2.numerator;
    if (s >= 3) ++profile.frac_ge3.numerator;
    if (s == 4) ++profile.frac_eq4.numerator;
  }
  return profile;
}

std::map<Engine, LeakageProfile> leakage_profiles(std::span<const UrlJudgmentRecord> records,
                                                  std::span<const std::int64_t> universe) {
  std::set<Engine> engines;
  for (const auto& r : records) engines.insert(r.engine);
  std::map<Engine, LeakageProfile> out;
  for (Engine e : engines) out.emplace(e, leakage_profile(records, e, universe));
  return out;
}

std::vector<YearRate> per_year_rates(std::span<const UrlJudgmentRecord> records) {
  std::map<std::pair<int, Engine>, Rate> cells;
  for (const auto& r : records) {
    auto& rate = cells[{r.cutoff_year, r.engine}];
    ++rate.denominator;
    if (r.contains_post_cutoff_info) ++rate.numerator;
  }
  std::vector<YearRate> out;
  for (const auto& [key, rate] : cells) out.push_back(YearRate{key.first, key.second, rate});
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const int> human, std::span<const int> judge) {
  check_labels(human, judge);
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < human.size(); ++i) ++m[human[i]][judge[i]];
  return m;
}

double exact_accuracy_merged01(std::span<const int> human, std::span<const int> judge) {
  check_labels(human, judge);
  if (human.empty()) throw Error(ErrorCode::PreconditionViolation, "accuracy of zero items");
  auto bucket = [](int s) { return s <= 1 ? 0 : s; };
  std::size_t agree = 0;
  for (std::size_t i = 0; i < human.size(); ++i) agree += bucket(human[i]) == bucket(judge[i]) ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(human.size());
}

double quadratic_weighted_kappa(std::span<const int> human, std::span<const int> judge) {
  const auto m = confusion_matrix(human, judge);
  const std::size_t n = human.size();
  if (n < 2) throw Error(ErrorCode::PreconditionViolation, "kappa needs at least 2 items");
  std::array<std::uint64_t, kNumScores> rows{}, cols{};
  for (int i = 0; i < kNumScores; ++i) {
    for (int j = 0; j < kNumScores; ++j) {
      rows[i] += m[i][j];
      cols[j] += m[i][j];
    }
  }
  // The common 1/(K-1)^2 weight factor and the 1/n scaling of E cancel, so both sums stay integral.
  std::uint64_t observed = 0;
  std::uint64_t expected = 0;
  for (int i = 0; i < kNumScores; ++i) {
    for (int j = 0; j < kNumScores; ++j) {
      const auto d2 = static_cast<std::uint64_t>((i - j) * (i - j));
      observed += d2 * m[i][j];
      expected += d2 * rows[i] * cols[j];
    }
  }
  if (expected == 0) throw Error(ErrorCode::DegenerateMarginals, "chance-expected disagreement is zero");
  return 1.0 - static_cast<double>(observed * n) / static_cast<double>(expected);
}

F1Result f1_for_class(std::span<const int> human, std::span<const int> judge, int cls) {
  check_labels(human, judge);
  if (cls < 0 || cls >= kNumScores) throw Error(ErrorCode::LabelOutOfRange, "class " + std::to_string(cls));
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < human.size(); ++i) {
    const bool actual = human[i] == cls;
    const bool predicted = judge[i] == cls;
    if (actual && predicted) ++tp;
    if (!actual && predicted) ++fp;
    if (actual && !predicted) ++fn;
  }
  F1Result r;
  if (tp + fp + fn == 0) {
    r.degenerate = true;
    return r;
  }
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  return r;
}

AgreementReport agreement_report(std::span<const int> human, std::span<const int> judge) {
  AgreementReport report;
  report.confusion = confusion_matrix(human, judge);
  report.n = human.size();
  report.exact_accuracy_merged01 = exact_accuracy_merged01(human, judge);
  try {
    report.qwk = quadratic_weighted_kappa(human, judge);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateMarginals && e.code() != ErrorCode::PreconditionViolation) throw;
  }
  for (int c = 0; c < kNumScores; ++c) report.f1_per_class[c] = f1_for_class(human, judge, c);
  return report;
}

json to_json(const AgreementReport& report) {
  json f1 = json::array();
  for (const auto& r : report.f1_per_class) {
    f1.push_back(json{{"f1", r.f1}, {"precision", r.precision}, {"recall", r.recall}, {"degenerate", r.degenerate}});
  }
  return json{{"n", report.n},
              {"confusion", report.confusion},
              {"exact_accuracy_merged01", report.exact_accuracy_merged01},
              {"qwk", report.qwk ? json(*report.qwk) : json(nullptr)},
              {"f1_per_class", f1}};
}

double brier(double probability, bool outcome_yes) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw Error(ErrorCode::OutOfRangeProbability, "probability " + std::to_string(probability));
  }
  const double o = outcome_yes ? 1.0 : 0.0;
  return (probability - o) * (probability - o);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::PreconditionViolation, "mean of zero values");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double median(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::PreconditionViolation, "median of zero values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  return sorted.size() % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
}

}  // namespace leakaudit
