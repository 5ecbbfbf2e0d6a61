#include "leakaudit/query_generation.hpp"

#include <spdlog/spdlog.h>

#include <unordered_set>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

constexpr std::string_view kOpenMarker = "<JSON>";
constexpr std::string_view kCloseMarker = "</JSON>";

constexpr std::string_view kQueryTemplate =
    R"(You are an expert in using search engines and writing search keywords.
We will breakdown and decompose the user query into {number_of_queries} distinct search queries.
Generate {number_of_queries} distinct search queries that would help gather comprehensive information about this topic.
Each query should focus on a different aspect or perspective.
The queries should be precise, concise, friendly for search engines (not complete sentences), SEO-aware, and relevant to the original query.
Generate queries in the user's native language, do not do any translation.
Return only the queries as a JSON array.

Your response must be a valid JSON array of strings, wrapped with <JSON> and </JSON>.

Example output:
{json_queries_example}

Now, generate the queries based on the user query:
{user_query})";

constexpr std::string_view kQueriesExample = R"(<JSON>["first search query", "second search query"]</JSON>)";

}  // namespace

json to_json(const GeneratedQueries& g) {
  return json{{"question_id", g.question_id},
              {"queries", g.queries},
              {"model_id", g.model_id},
              {"created_at", format_timestamp(g.created_at)}};
}

GeneratedQueries generated_queries_from_json(const json& record) {
  GeneratedQueries g;
  g.question_id = record.at("question_id").get<std::int64_t>();
  g.queries = record.at("queries").get<std::vector<std::string>>();
  g.model_id = record.at("model_id").get<std::string>();
  g.created_at = parse_timestamp(record.at("created_at").get<std::string>());
  return g;
}

std::string build_query_prompt(const Question& q, int n) {
  if (n < kMinQueries || n > kMaxQueries) {
    throw Error(ErrorCode::PreconditionViolation,
                "query count " + std::to_string(n) + " outside [" + std::to_string(kMinQueries) + ", " +
                    std::to_string(kMaxQueries) + "]");
  }
  return fill_template(kQueryTemplate, {{"number_of_queries", std::to_string(n)},
                                        {"json_queries_example", std::string(kQueriesExample)},
                                        {"user_query", q.title + "\n\n" + q.background}});
}

json parse_json_block(std::string_view reply) {
  const auto open = reply.find(kOpenMarker);
  if (open == std::string_view::npos) {
    throw Error(ErrorCode::MissingDelimiters, "no <JSON> marker in reply");
  }
  const auto body_start = open + kOpenMarker.size();
  const auto close = reply.find(kCloseMarker, body_start);
  if (close == std::string_view::npos) {
    throw Error(ErrorCode::MissingDelimiters, "no </JSON> marker after <JSON>");
  }
  const auto body = reply.substr(body_start, close - body_start);
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedPayload, e.what());
  }
}

std::vector<std::string> validate_queries(const json& payload, int n) {
  if (!payload.is_array()) {
    throw Error(ErrorCode::ValidationError, "reply payload is not a JSON array");
  }
  std::vector<std::string> queries;
  std::unordered_set<std::string> seen;
  for (const auto& item : payload) {
    if (!item.is_string()) {
      throw Error(ErrorCode::ValidationError, "query list contains a non-string element");
    }
    std::string query = collapse_whitespace(item.get<std::string>());
    if (query.empty()) continue;
    if (seen.insert(query).second) queries.push_back(std::move(query));
  }
  if (queries.size() > static_cast<std::size_t>(n)) queries.resize(static_cast<std::size_t>(n));
  if (queries.size() < static_cast<std::size_t>(kMinQueries)) {
    throw Error(ErrorCode::ValidationError, "only " + std::to_string(queries.size()) +
                                                " distinct non-empty queries (need at least " +
                                                std::to_string(kMinQueries) + ")");
  }
  return queries;
}

GeneratedQueries generate_queries(TextProvider& provider, const Question& q, const GenerationConfig& cfg) {
  const std::string prompt = build_query_prompt(q, cfg.n_queries);
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    const Completion reply = provider.complete(CompletionRequest{prompt, std::nullopt, attempt});
    try {
      GeneratedQueries out;
      out.question_id = q.id;
      out.queries = validate_queries(parse_json_block(reply.text), cfg.n_queries);
      out.model_id = provider.id() + ";temperature=default";
      out.created_at = reply.obtained_at;
      return out;
    } catch (const Error& e) {
      last_error = e.what();
      spdlog::warn("question {}: query generation attempt {} rejected: {}", q.id, attempt + 1, last_error);
    }
  }
  throw Error(ErrorCode::ValidationError, "question " + std::to_string(q.id) + ": no valid query list after " +
                                              std::to_string(cfg.max_retries + 1) + " attempts; last: " + last_error);
}

}  // namespace leakaudit
