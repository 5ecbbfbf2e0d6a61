#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "leakaudit/doc_processing.hpp"
#include "leakaudit/provider.hpp"
#include "leakaudit/question_store.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

struct JudgeConfig {
  std::string provider_id = "mock";
  double temperature = 0.5;
  int max_retries = 2;

  void validate() const;
};

struct LeakageJudgment {
  std::int64_t question_id = 0;
  std::string url;
  std::string reasoning;
  bool contains_post_cutoff_info = false;
  int leakage_score = 0;
  std::string model_id;

  friend bool operator==(const LeakageJudgment&, const LeakageJudgment&) = default;
};

// Throws Error(ScoreOutOfRange) or Error(InconsistentFlag).
void validate(const LeakageJudgment& j);

json to_json(const LeakageJudgment& j);
// Re-checks the judgment invariants on load.
LeakageJudgment leakage_judgment_from_json(const json& record);

std::string build_judge_prompt(const Question& q, const DocumentView& view);

// Fills reasoning, flag and score; question_id, url and model_id are left to the caller.
// Throws Error(MissingDelimiters | MalformedPayload | MissingKey | ScoreOutOfRange | InconsistentFlag).
LeakageJudgment parse_judgment(std::string_view reply);

struct JudgeOutcome {
  LeakageJudgment judgment;
  std::string raw_reply;  // the reply that parsed
  int attempts = 1;
};

// Retries unparseable replies up to cfg.max_retries times, then throws Error(ParseExhausted).
// Provider failures propagate as Error(ProviderError).
JudgeOutcome judge_document(TextProvider& provider, const JudgeConfig& cfg, const Question& q,
                            const DocumentView& view);

}  // namespace leakaudit
