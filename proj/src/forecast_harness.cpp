#include "leakaudit/forecast_harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <regex>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

constexpr std::string_view kForecastTemplate = R"PROMPT(You are a professional forecaster interviewing for a job.
The question's forecasting window begins on {open_time}.
Your interview question is:
{title}

Question background:
{background}

This question's outcome will be determined by the specific criteria below. These criteria have not yet been satisfied:
{resolution_criteria}

{fine_print}

Summary Research Report:
Warning: These snippets are from an automated search engine. They may contain irrelevant info, conflicting data, or headlines that do not tell the full story. They may also have ambigious dates. You must evaluate them critically and check specific numbers against the resolution criteria.
{summary_report}

Before answering you write:
(a) The time left from now until the resolution date. Consider the forecasting window of when it began and the resolution date.
(b) The status quo outcome if nothing changed.
(c) A brief description of a scenario that results in a No outcome.
(d) A brief description of a scenario that results in a Yes outcome.

You write your rationale remembering that good forecasters put extra weight on the status quo outcome since the world changes slowly most of the time.

The last thing you write is your final answer. You must write the probability of the "Yes" outcome only. Format it exactly as: "Probability: ZZ%")PROMPT";

constexpr std::array<std::pair<ConditionName, std::string_view>, 5> kConditionNames = {{
    {ConditionName::NoRetrieval, "no_retrieval"},
    {ConditionName::Score0Only, "score0_only"},
    {ConditionName::Scores2To4, "scores_2_4"},
    {ConditionName::Scores3To4, "scores_3_4"},
    {ConditionName::Score4Only, "score4_only"},
}};

}  // namespace

std::string_view to_string(ConditionName c) {
  for (const auto& [name, text] : kConditionNames) {
    if (name == c) return text;
  }
  return "unknown";
}

ConditionName condition_from_string(std::string_view name) {
  for (const auto& [c, text] : kConditionNames) {
    if (text == name) return c;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown forecast condition '" + std::string(name) + "'");
}

ForecastCondition ForecastCondition::of(ConditionName name) {
  switch (name) {
    case ConditionName::NoRetrieval: return {name, {}};
    case ConditionName::Score0Only: return {name, {0}};
    case ConditionName::Scores2To4: return {name, {2, 3, 4}};
    case ConditionName::Scores3To4: return {name, {3, 4}};
    case ConditionName::Score4Only: return {name, {4}};
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown forecast condition");
}

std::vector<ForecastCondition> all_conditions() {
  std::vector<ForecastCondition> out;
  for (const auto& [c, _] : kConditionNames) out.push_back(ForecastCondition::of(c));
  return out;
}

std::vector<ForecastCondition> parse_conditions(std::string_view spec) {
  if (trim(spec) == "all") return all_conditions();
  std::vector<ForecastCondition> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto comma = spec.find(',', start);
    if (comma == std::string_view::npos) comma = spec.size();
    const std::string name = trim(spec.substr(start, comma - start));
    if (!name.empty()) {
      const auto c = condition_from_string(name);
      if (std::none_of(out.begin(), out.end(), [&](const auto& x) { return x.name == c; })) {
        out.push_back(ForecastCondition::of(c));
      }
    }
    start = comma + 1;
  }
  if (out.empty()) throw Error(ErrorCode::ConfigInvalid, "no forecast conditions selected");
  return out;
}

std::vector<std::int64_t> eligible_questions(const QuestionSet& questions, std::span<const UrlJudgmentRecord> records,
                                             const EligibilityRule& rule) {
  std::map<std::int64_t, int> severity;
  for (const auto& r : records) {
    auto [it, inserted] = severity.try_emplace(r.question_id, r.leakage_score);
    if (!inserted) it->second = std::max(it->second, r.leakage_score);
  }
  std::vector<std::int64_t> out;
  for (const auto& q : questions.questions) {
    if (rule.require_binary && !q.is_binary()) continue;
    if (cutoff_year(q) != rule.open_year) continue;
    if (rule.require_score4_doc) {
      auto it = severity.find(q.id);
      if (it == severity.end() || it->second != 4) continue;
    }
    out.push_back(q.id);
  }
  return out;
}

std::vector<DocumentView> select_documents(std::span<const UrlJudgmentRecord> records_for_question,
                                           const ForecastCondition& condition, const ViewIndex& views) {
  std::vector<const UrlJudgmentRecord*> picked;
  for (const auto& r : records_for_question) {
    if (condition.admits(r.leakage_score)) picked.push_back(&r);
  }
  std::sort(picked.begin(), picked.end(), [](const auto* a, const auto* b) {
    if (a->leakage_score != b->leakage_score) return a->leakage_score > b->leakage_score;
    return a->url < b->url;
  });
  std::vector<DocumentView> out;
  std::set<std::string> seen;
  for (const auto* r : picked) {
    if (!seen.insert(r->url).second) continue;
    auto it = views.find({r->question_id, r->url});
    if (it == views.end()) {
      throw Error(ErrorCode::InvariantViolation,
                  "judged URL without a document view: question " + std::to_string(r->question_id) + " " + r->url);
    }
    out.push_back(it->second);
  }
  return out;
}

std::string render_summary_report(std::span<const DocumentView> views) {
  if (views.empty()) return std::string(kNoResearchPlaceholder);
  std::string out;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Source " + std::to_string(i + 1) + ": " + views[i].url + "\n" + trim(views[i].text);
  }
  return out;
}

std::string build_forecast_prompt(const Question& q, std::span<const DocumentView> views) {
  if (!q.is_binary()) {
    throw Error(ErrorCode::PreconditionViolation, "question " + std::to_string(q.id) + " is not binary");
  }
  return fill_template(kForecastTemplate, {{"open_time", format_timestamp(q.open_time)},
                                           {"title", q.title},
                                           {"background", q.background},
                                           {"resolution_criteria", q.resolution_criteria},
                                           {"fine_print", q.fine_print.value_or("")},
                                           {"summary_report", render_summary_report(views)}});
}

double parse_probability(std::string_view reply) {
  static const std::regex kPattern(R"(probability\**\s*:\s*\**\s*([0-9]+(?:\.[0-9]*)?|\.[0-9]+)\s*(%)?)",
                                   std::regex::icase);
  const std::string text(reply);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kPattern); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) throw Error(ErrorCode::NoProbabilityFound, "no 'Probability: N' line in reply");
  double value = std::stod(last[1].str());
  if (last[2].matched || value > 1.0) value /= 100.0;
  return std::clamp(value, 0.0, 1.0);
}

std::string raw_reply_ref(std::int64_t question_id, ConditionName condition) {
  return "forecast/" + std::to_string(question_id) + "-" + std::string(to_string(condition)) + ".txt";
}

json to_json(const ForecastResult& r) {
  return json{{"question_id", r.question_id},
              {"condition", to_string(r.condition)},
              {"n_sources", r.n_sources},
              {"probability", r.probability},
              {"outcome", r.outcome_yes ? "yes" : "no"},
              {"brier", r.brier},
              {"raw_reply_ref", r.raw_reply_ref},
              {"attempts", r.attempts}};
}

ForecastResult forecast_result_from_json(const json& record) {
  ForecastResult r;
  r.question_id = record.at("question_id").get<std::int64_t>();
  r.condition = condition_from_string(record.at("condition").get<std::string>());
  r.n_sources = record.at("n_sources").get<std::size_t>();
  r.probability = record.at("probability").get<double>();
  const auto outcome = record.at("outcome").get<std::string>();
  if (outcome != "yes" && outcome != "no") throw Error(ErrorCode::MalformedRecord, "outcome '" + outcome + "'");
  r.outcome_yes = outcome == "yes";
  r.brier = record.at("brier").get<double>();
  r.raw_reply_ref = record.value("raw_reply_ref", "");
  r.attempts = record.value("attempts", 1);
  if (std::fabs(r.brier - brier(r.probability, r.outcome_yes)) > 1e-12) {
    throw Error(ErrorCode::InvariantViolation, "stored brier does not match probability and outcome");
  }
  return r;
}

json to_json(const ConditionSummary& s) {
  return json{{"condition", to_string(s.condition)}, {"n", s.n},
              {"failures", s.failures},              {"avg_sources", s.avg_sources},
              {"mean_brier", s.mean_brier},          {"median_brier", s.median_brier}};
}

ConditionSummary condition_summary_from_json(const json& record) {
  ConditionSummary s;
  s.condition = condition_from_string(record.at("condition").get<std::string>());
  s.n = record.at("n").get<std::size_t>();
  s.failures = record.at("failures").get<std::size_t>();
  s.avg_sources = record.at("avg_sources").get<double>();
  s.mean_brier = record.at("mean_brier").get<double>();
  s.median_brier = record.at("median_brier").get<double>();
  return s;
}

std::vector<ConditionSummary> summarize(std::span<const ForecastResult> results,
                                        std::span<const ForecastFailure> failures,
                                        std::span<const ForecastCondition> conditions) {
  std::vector<ConditionSummary> out;
  for (const auto& c : conditions) {
    ConditionSummary s;
    s.condition = c.name;
    std::vector<double> briers;
    double sources = 0.0;
    for (const auto& r : results) {
      if (r.condition != c.name) continue;
      briers.push_back(r.brier);
      sources += static_cast<double>(r.n_sources);
    }
    s.failures = static_cast<std::size_t>(
        std::count_if(failures.begin(), failures.end(), [&](const auto& f) { return f.condition == c.name; }));
    s.n = briers.size();
    if (!briers.empty()) {
      s.avg_sources = sources / static_cast<double>(briers.size());
      s.mean_brier = mean(briers);
      s.median_brier = median(briers);
    }
    out.push_back(s);
  }
  return out;
}

ForecastRun evaluate_conditions(TextProvider& forecaster, const QuestionSet& questions,
                                std::span<const std::int64_t> eligible, std::span<const UrlJudgmentRecord> records,
                                const ViewIndex& views, std::span<const ForecastCondition> conditions,
                                const ForecastOptions& options) {
  std::map<std::int64_t, std::vector<UrlJudgmentRecord>> by_question;
  for (const auto& r : records) by_question[r.question_id].push_back(r);

  struct Cell {
    std::int64_t question_id;
    const ForecastCondition* condition;
  };
  std::vector<Cell> cells;
  for (auto qid : eligible) {
    for (const auto& c : conditions) cells.push_back(Cell{qid, &c});
  }

  std::vector<std::optional<ForecastResult>> results(cells.size());
  std::vector<std::optional<ForecastFailure>> failures(cells.size());
  parallel_for(cells.size(), options.workers, [&](std::size_t i) {
    const auto& cell = cells[i];
    const Question& q = questions.at(cell.question_id);
    const auto name = cell.condition->name;
    static const std::vector<UrlJudgmentRecord> kNone;
    auto it = by_question.find(cell.question_id);
    const auto& own = it == by_question.end() ? kNone : it->second;
    const auto docs = select_documents(own, *cell.condition, views);
    const std::string prompt = build_forecast_prompt(q, docs);
    std::string last_error;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
      try {
        const Completion reply = forecaster.complete(CompletionRequest{prompt, std::nullopt, attempt});
        ForecastResult r;
        r.question_id = q.id;
        r.condition = name;
        r.n_sources = docs.size();
        r.probability = parse_probability(reply.text);
        r.outcome_yes = q.resolved_yes();
        r.brier = brier(r.probability, r.outcome_yes);
        r.raw_reply_ref = raw_reply_ref(q.id, name);
        r.raw_reply = reply.text;
        r.attempts = attempt + 1;
        results[i] = std::move(r);
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoProbabilityFound && e.code() != ErrorCode::ProviderError) throw;
        last_error = e.what();
        spdlog::warn("question {} [{}]: forecast attempt {} failed: {}", q.id, to_string(name), attempt + 1,
                     last_error);
      }
    }
    failures[i] = ForecastFailure{q.id, name, last_error};
  });

  ForecastRun run;
  for (auto& r : results) {
    if (r) run.results.push_back(std::move(*r));
  }
  for (auto& f : failures) {
    if (f) run.failures.push_back(std::move(*f));
  }
  auto key = [](const auto& x) { return std::pair{x.question_id, static_cast<int>(x.condition)}; };
  std::sort(run.results.begin(), run.results.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::sort(run.failures.begin(), run.failures.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  run.summaries = summarize(run.results, run.failures, conditions);
  return run;
}

}  // namespace leakaudit
