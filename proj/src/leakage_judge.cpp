#include "leakaudit/leakage_judge.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <sstream>

#include "leakaudit/error.hpp"
#include "leakaudit/query_generation.hpp"

namespace leakaudit {
namespace {

constexpr std::string_view kJudgeTemplate = R"PROMPT(You are an expert Data Contamination Auditor.
Your job is to detect if the given text chunk leaks information that originates past the given Information Cutoff Date and how significant this leakage is in answering the given forecasting question.

Question: {question}
Background Info: {background}
Resolution Criteria: {resolution_criteria}
Resolved answer: {resolved_answer}
Information Cutoff Date: {information_cutoff_date}

Post-Cutoff information: Any event, data point, or entity that did not exist or was not public knowledge prior to the Information Cutoff Date.


Judge Process
Step 1:
Scan the text chunk for post-cutoff information, i.e. information that originates after the Information Cutoff Date ({information_cutoff_date}). These can include logical leaks of events/entities that didn't exist pre-cutoff or retroactive revelations where there is a post-cutoff disclosure of previously secret pre-cutoff events. 

Step 2:
Score the post-cutoff information given the Leakage Score Rubric below. 

Leakage Score Rubric:

0 - Noise (Irrelevant or no post-cutoff information)
Assign 0 if no post-cutoff info exists or post-cutoff info exists but is irrelevant to the question topic and would not change a forecaster's probability estimate at all.

1 - Topical
Assign 1 if the post-cutoff info is related to the question topic but would not help or change a forecaster's answer and reasoning in determining the question's answer.

2 - Weak Signal
Assign 2 if the post-cutoff info is relevant to the question and provides a vague/minor directional signal towards the question's resolution. These are often vague trend statements with little or no quantitative detail.

3 - Major or Partial Direct Signal
Assign 3 if the post-cutoff info provides a major component/signal toward the question's resolution. This could involve having direct/decisive data for a partial component of the question or data from a later date than the desired question date that can be used to strongly infer the resolved answer.


4 - Full Decisive/Direct Leakage
Assign 4 if the post-cutoff info directly reveals the resolved answer whether by explicitly stating it or providing data allowing for a certain logical/mathematical calculation of the answer.

Sometimes what isn't mentioned (absence of information) is important for forecasting. Use absence of information only in clearly comprehensive or high-quality reports that are relevant to the question. Otherwise, score based on what is stated, not omissions. When absence of information is reasonable, it is scored a 3 at most, as we do not want to assume a certain 4. 


Example to help anchor scoring:
Ex Question: Will X and Y countries ratify treaty Z by 2024?
Example Cutoff Date: January 15, 2021
'Copyright 2024' is assigned a 0. Irrelevant post-cutoff metadata. 
'In 2024, the Treaty Z Secretariat renamed its Working Group 2 to the 'Implementation Committee.'' is assigned a 1. Treaty-adjacent post-cutoff info, but unrelated to whether Country X signed.
'(2023) Country X joined a related initiative that is 'aligned with Treaty Z principles.' is assigned a 2.
'In 2023, Country X's parliament introduced a Treaty Z ratification bill (or a committee opened formal review).' is assigned a 3. Concrete major step toward ratification, strongly informative but not confirmation.
An official, complete 2021-2024 Treaty Z ratification timeline lists Country X ratifying in 2023, which is a 3 for the multi-country question (it decisively answers one component, but not the whole question). The same comprehensive timeline does not list Country Y, which is also a 3 absence-based signal for non-ratification.
The Treaty Z Depositary's official registry (updated 2024) lists Country X ratifying in 2023 and explicitly states Country Y is not eligible to ratify Treaty Z (so no ratification by Y is possible). This is assigned a 4.

Output Format:

Provide your response as a valid JSON object wrapped with <JSON> and </JSON> containing exactly these keys:


<JSON>
{
  "reasoning": "First, provide all the post-cutoff info found. Then assign a score for each piece of post-cutoff info found based on the Leakage Score Rubric and explain your rationale.",  "contains_post_cutoff_info": boolean,
  "leakage_score": integer (0-4) #Apply the highest leakage score given for the post-cutoff info found here
}
</JSON>

Text chunk to evaluate:
{context})PROMPT";

std::string judge_model_id(const TextProvider& provider, double temperature) {
  std::ostringstream out;
  out << provider.id() << ";temperature=" << temperature;
  return out.str();
}

}  // namespace

void JudgeConfig::validate() const {
  if (!(temperature >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "judge temperature must be >= 0");
  if (max_retries < 0) throw Error(ErrorCode::ConfigInvalid, "judge max_retries must be >= 0");
}

void validate(const LeakageJudgment& j) {
  if (j.leakage_score < 0 || j.leakage_score > 4) {
    throw Error(ErrorCode::ScoreOutOfRange, "leakage_score " + std::to_string(j.leakage_score) + " outside 0-4");
  }
  if (j.leakage_score >= 1 && !j.contains_post_cutoff_info) {
    throw Error(ErrorCode::InconsistentFlag, "leakage_score " + std::to_string(j.leakage_score) +
                                                 " requires contains_post_cutoff_info = true");
  }
}

json to_json(const LeakageJudgment& j) {
  return json{{"question_id", j.question_id},
              {"url", j.url},
              {"reasoning", j.reasoning},
              {"contains_post_cutoff_info", j.contains_post_cutoff_info},
              {"leakage_score", j.leakage_score},
              {"model_id", j.model_id}};
}

LeakageJudgment leakage_judgment_from_json(const json& record) {
  LeakageJudgment j;
  j.question_id = record.at("question_id").get<std::int64_t>();
  j.url = record.at("url").get<std::string>();
  j.reasoning = record.at("reasoning").get<std::string>();
  j.contains_post_cutoff_info = record.at("contains_post_cutoff_info").get<bool>();
  j.leakage_score = record.at("leakage_score").get<int>();
  j.model_id = record.value("model_id", "");
  validate(j);
  return j;
}

std::string build_judge_prompt(const Question& q, const DocumentView& view) {
  if (trim(view.text).empty()) {
    throw Error(ErrorCode::PreconditionViolation, "empty document view for " + view.url);
  }
  return fill_template(kJudgeTemplate, {{"question", q.title},
                                        {"background", q.background},
                                        {"resolution_criteria", q.resolution_criteria},
                                        {"resolved_answer", q.resolution},
                                        {"information_cutoff_date", format_date(cutoff_date(q))},
                                        {"context", view.text}});
}

LeakageJudgment parse_judgment(std::string_view reply) {
  const json payload = parse_json_block(reply);
  if (!payload.is_object()) {
    throw Error(ErrorCode::MalformedPayload, "judge payload is not a JSON object");
  }
  for (const char* key : {"reasoning", "contains_post_cutoff_info", "leakage_score"}) {
    if (!payload.contains(key)) throw Error(ErrorCode::MissingKey, std::string("judge payload lacks '") + key + "'");
  }
  const auto& reasoning = payload["reasoning"];
  const auto& flag = payload["contains_post_cutoff_info"];
  const auto& score = payload["leakage_score"];
  if (!reasoning.is_string()) throw Error(ErrorCode::MalformedPayload, "'reasoning' must be a string");
  if (!flag.is_boolean()) throw Error(ErrorCode::MalformedPayload, "'contains_post_cutoff_info' must be a boolean");
  if (!score.is_number()) throw Error(ErrorCode::MalformedPayload, "'leakage_score' must be a number");

  LeakageJudgment j;
  j.reasoning = reasoning.get<std::string>();
  j.contains_post_cutoff_info = flag.get<bool>();
  if (score.is_number_float()) {
    const double value = score.get<double>();
    if (value != std::floor(value) || value < 0.0 || value > 4.0) {
      throw Error(ErrorCode::ScoreOutOfRange, "leakage_score " + score.dump() + " is not an integer in 0-4");
    }
    j.leakage_score = static_cast<int>(value);
  } else {
    const bool in_range = score.is_number_unsigned() ? score.get<std::uint64_t>() <= 4
                                                     : score.get<std::int64_t>() >= 0 && score.get<std::int64_t>() <= 4;
    if (!in_range) throw Error(ErrorCode::ScoreOutOfRange, "leakage_score " + score.dump() + " outside 0-4");
    j.leakage_score = score.get<int>();
  }
  validate(j);
  return j;
}

JudgeOutcome judge_document(TextProvider& provider, const JudgeConfig& cfg, const Question& q,
                            const DocumentView& view) {
  cfg.validate();
  const std::string prompt = build_judge_prompt(q, view);
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    const Completion reply = provider.complete(CompletionRequest{prompt, cfg.temperature, attempt});
    try {
      JudgeOutcome out;
      out.judgment = parse_judgment(reply.text);
      out.judgment.question_id = q.id;
      out.judgment.url = view.url;
      out.judgment.model_id = judge_model_id(provider, cfg.temperature);
      out.raw_reply = reply.text;
      out.attempts = attempt + 1;
      if (attempt > 0) spdlog::info("question {} {}: judged after {} attempts", q.id, view.url, attempt + 1);
      return out;
    } catch (const Error& e) {
      last_error = e.what();
      spdlog::warn("question {} {}: judge attempt {} rejected: {}", q.id, view.url, attempt + 1, last_error);
    }
  }
  throw Error(ErrorCode::ParseExhausted, "question " + std::to_string(q.id) + " " + view.url + ": no valid verdict after " +
                                             std::to_string(cfg.max_retries + 1) + " attempts; last: " + last_error);
}

}  // namespace leakaudit
