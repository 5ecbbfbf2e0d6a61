#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "leakaudit/provider.hpp"
#include "leakaudit/question_store.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

inline constexpr int kMinQueries = 10;
inline constexpr int kMaxQueries = 20;

struct GenerationConfig {
  int n_queries = 15;
  int max_retries = 2;
  std::string provider_id = "mock";
};

struct GeneratedQueries {
  std::int64_t question_id = 0;
  std::vector<std::string> queries;
  std::string model_id;
  Timestamp created_at{};

  friend bool operator==(const GeneratedQueries&, const GeneratedQueries&) = default;
};

json to_json(const GeneratedQueries& g);
GeneratedQueries generated_queries_from_json(const json& record);

std::string build_query_prompt(const Question& q, int n);

// Parses the payload between the first "<JSON>" and the next "</JSON>".
// Throws Error(MissingDelimiters) or Error(MalformedPayload).
json parse_json_block(std::string_view reply);

// Validates a parsed reply: strings only, whitespace-normalized, deduplicated in first-seen order,
// truncated to n, and at least kMinQueries left. Throws Error(ValidationError) otherwise.
std::vector<std::string> validate_queries(const json& payload, int n);

GeneratedQueries generate_queries(TextProvider& provider, const Question& q, const GenerationConfig& cfg);

}  // namespace leakaudit
