#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "leakaudit/http.hpp"
#include "leakaudit/time.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

enum class Engine { Google, DuckDuckGo };

std::string_view to_string(Engine e);
Engine engine_from_string(std::string_view name);

inline const Date kDefaultRangeStart{std::chrono::year{2000}, std::chrono::January, std::chrono::day{1}};

struct SearchSpec {
  Engine engine = Engine::Google;
  std::string query;
  Date cutoff{};
  Date range_start = kDefaultRangeStart;  // only used by duckduckgo
  int max_results_per_query = 10;
};

struct SearchHit {
  std::string url;
  std::string title;
  std::string snippet;
  Engine engine = Engine::Google;
  int rank = 1;  // 1-based within one (engine, query) result list
  std::string query;
};

struct RetrievalBatch {
  std::int64_t question_id = 0;
  Engine engine = Engine::Google;
  std::vector<std::string> urls;
  int budget = 100;
  std::vector<std::string> failed_queries;
  std::vector<std::string> warnings;

  bool usable() const { return !urls.empty(); }
  friend bool operator==(const RetrievalBatch&, const RetrievalBatch&) = default;
};

json to_json(const RetrievalBatch& b);
RetrievalBatch retrieval_batch_from_json(const json& record);

// Engine-native request: the query text as sent plus the date-filter parameters.
struct EngineRequest {
  Engine engine = Engine::Google;
  std::string query_text;
  std::vector<std::pair<std::string, std::string>> params;
};

EngineRequest build_engine_query(const SearchSpec& spec);

// Lowercases scheme and host, drops default ports, fragments and tracking parameters,
// and strips trailing slashes from non-root paths. Throws Error(UnparseableUrl).
std::string normalize_url(std::string_view raw);

class SearchEngine {
 public:
  virtual ~SearchEngine() = default;
  // One page (0-based) of results; an empty page means the result list is exhausted.
  // Throws on engine failure.
  virtual std::vector<SearchHit> search(const SearchSpec& spec, int page) = 0;
};

struct CollectOptions {
  int budget = 100;
  int max_results_per_query = 10;
  Date range_start = kDefaultRangeStart;
};

// Round-robins pages across queries, deduplicating under normalize_url, until the budget is met
// or every query is exhausted. Throws Error(EngineUnavailable) when every query failed.
RetrievalBatch collect_urls(SearchEngine& engine_impl, std::int64_t question_id, const std::vector<std::string>& queries,
                            Engine engine, Date cutoff, const CollectOptions& options = {});

// Minimum spacing between requests sharing a key, plus a temporary penalty after throttling.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds min_interval);
  void acquire(const std::string& key);
  void penalize(const std::string& key, std::chrono::milliseconds delay);

 private:
  std::chrono::milliseconds min_interval_;
  std::mutex mutex_;
  std::map<std::string, std::chrono::steady_clock::time_point> next_allowed_;
};

// Deterministic in-memory engine. `results_for` returns the full ordered result list for a query;
// it may throw to simulate a failing query.
class MockSearchEngine final : public SearchEngine {
 public:
  using ResultFn = std::function<std::vector<std::string>(const std::string& query)>;
  MockSearchEngine(ResultFn results_for, int page_size = 10);
  std::vector<SearchHit> search(const SearchSpec& spec, int page) override;
  std::size_t calls() const { return calls_; }

 private:
  ResultFn results_for_;
  int page_size_;
  std::atomic<std::size_t> calls_{0};
};

// Synthetic result lists derived from a hash of (engine, query): stable across runs.
MockSearchEngine::ResultFn synthetic_results(Engine engine, int per_query = 30, int site_pool = 40);

struct EngineAdapterOptions {
  std::chrono::milliseconds min_interval{1000};
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{1000};
};

// Google Programmable Search JSON API; credentials from LEAKAUDIT_GOOGLE_API_KEY / LEAKAUDIT_GOOGLE_CX.
class GoogleSearchEngine final : public SearchEngine {
 public:
  GoogleSearchEngine(std::shared_ptr<HttpClient> http, std::string api_key, std::string cx,
                     EngineAdapterOptions options = {});
  static std::unique_ptr<GoogleSearchEngine> from_env(std::shared_ptr<HttpClient> http);
  std::vector<SearchHit> search(const SearchSpec& spec, int page) override;

 private:
  std::shared_ptr<HttpClient> http_;
  std::string api_key_;
  std::string cx_;
  EngineAdapterOptions options_;
  RateLimiter limiter_;
};

// DuckDuckGo HTML endpoint with the df=START..END date-range parameter.
// Endpoint override: LEAKAUDIT_DDG_ENDPOINT.
class DuckDuckGoSearchEngine final : public SearchEngine {
 public:
  DuckDuckGoSearchEngine(std::shared_ptr<HttpClient> http, std::string endpoint = "https://html.duckduckgo.com/html/",
                         EngineAdapterOptions options = {});
  std::vector<SearchHit> search(const SearchSpec& spec, int page) override;

 private:
  std::shared_ptr<HttpClient> http_;
  std::string endpoint_;
  EngineAdapterOptions options_;
  RateLimiter limiter_;
};

std::vector<SearchHit> parse_google_results(std::string_view body, const std::string& query, int first_rank);
std::vector<SearchHit> parse_duckduckgo_html(std::string_view html, const std::string& query, int first_rank);

}  // namespace leakaudit
