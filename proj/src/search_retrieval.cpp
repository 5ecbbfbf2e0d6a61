#include "leakaudit/search_retrieval.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <thread>
#include <unordered_set>

#include "leakaudit/error.hpp"
#include "leakaudit/html.hpp"

namespace leakaudit {

std::string_view to_string(Engine e) { return e == Engine::Google ? "google" : "duckduckgo"; }

Engine engine_from_string(std::string_view name) {
  const std::string lower = to_lower(name);
  if (lower == "google") return Engine::Google;
  if (lower == "duckduckgo" || lower == "ddg") return Engine::DuckDuckGo;
  throw Error(ErrorCode::ConfigInvalid, "unknown engine '" + std::string(name) + "'");
}

json to_json(const RetrievalBatch& b) {
  return json{{"question_id", b.question_id}, {"engine", to_string(b.engine)},   {"urls", b.urls},
              {"budget", b.budget},           {"usable", b.usable()},             {"failed_queries", b.failed_queries},
              {"warnings", b.warnings}};
}

RetrievalBatch retrieval_batch_from_json(const json& record) {
  RetrievalBatch b;
  b.question_id = record.at("question_id").get<std::int64_t>();
  b.engine = engine_from_string(record.at("engine").get<std::string>());
  b.urls = record.at("urls").get<std::vector<std::string>>();
  b.budget = record.at("budget").get<int>();
  b.failed_queries = record.value("failed_queries", std::vector<std::string>{});
  b.warnings = record.value("warnings", std::vector<std::string>{});
  return b;
}

EngineRequest build_engine_query(const SearchSpec& spec) {
  EngineRequest request;
  request.engine = spec.engine;
  if (spec.engine == Engine::Google) {
    request.query_text = spec.query + " before:" + format_date(spec.cutoff);
    request.params = {{"q", request.query_text}};
    return request;
  }
  if (!(spec.range_start < spec.cutoff)) {
    throw Error(ErrorCode::InvariantViolation, "duckduckgo range_start " + format_date(spec.range_start) +
                                                   " must precede cutoff " + format_date(spec.cutoff));
  }
  request.query_text = spec.query;
  request.params = {{"q", spec.query}, {"df", format_date(spec.range_start) + ".." + format_date(spec.cutoff)}};
  return request;
}

namespace {

bool valid_scheme(std::string_view scheme) {
  if (scheme.empty() || !std::isalpha(static_cast<unsigned char>(scheme[0]))) return false;
  return std::all_of(scheme.begin(), scheme.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '+' || c == '-' || c == '.';
  });
}

bool is_tracking_param(std::string_view key) {
  static const std::array<std::string_view, 14> kTracking = {
      "gclid", "fbclid", "msclkid", "dclid", "yclid", "mc_cid", "mc_eid", "igshid", "_ga", "_gl", "ref_src", "spm",
      "utm", "gbraid"};
  const std::string lower = to_lower(key);
  if (lower.rfind("utm_", 0) == 0) return true;
  return std::find(kTracking.begin(), kTracking.end(), lower) != kTracking.end();
}

}  // namespace

std::string normalize_url(std::string_view raw_input) {
  const std::string raw = trim(raw_input);
  auto fail = [&](const std::string& why) { return Error(ErrorCode::UnparseableUrl, "'" + raw + "': " + why); };
  for (unsigned char c : raw) {
    if (c <= 0x20 || c == 0x7f || c == '<' || c == '>' || c == '"' || c == '\\' || c == '^' || c == '`' ||
        c == '{' || c == '}' || c == '|') {
      throw fail("contains a character that is not allowed in URLs");
    }
  }
  const auto scheme_end = raw.find("://");
  if (scheme_end == std::string::npos) throw fail("missing scheme");
  const std::string scheme = to_lower(std::string_view(raw).substr(0, scheme_end));
  if (!valid_scheme(scheme)) throw fail("invalid scheme");

  const std::size_t auth_begin = scheme_end + 3;
  std::size_t auth_end = raw.find_first_of("/?#", auth_begin);
  if (auth_end == std::string::npos) auth_end = raw.size();
  std::string_view authority = std::string_view(raw).substr(auth_begin, auth_end - auth_begin);

  std::string userinfo;
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    userinfo = std::string(authority.substr(0, at + 1));
    authority.remove_prefix(at + 1);
  }
  std::string host;
  std::string_view port;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) throw fail("unterminated IPv6 literal");
    host = std::string(authority.substr(0, close + 1));
    const auto rest = authority.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') throw fail("garbage after IPv6 literal");
      port = rest.substr(1);
    }
  } else {
    const auto colon = authority.rfind(':');
    host = std::string(authority.substr(0, colon));
    if (colon != std::string_view::npos) port = authority.substr(colon + 1);
  }
  host = to_lower(host);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (host.empty()) throw fail("empty host");
  if (!std::all_of(port.begin(), port.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw fail("non-numeric port");
  }
  std::string port_part;
  if (!port.empty() && !((scheme == "http" && port == "80") || (scheme == "https" && port == "443"))) {
    port_part = ":" + std::string(port);
  }

  std::string_view rest = std::string_view(raw).substr(auth_end);
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);
  std::string_view path = rest;
  std::string_view query;
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    path = rest.substr(0, q);
    query = rest.substr(q + 1);
  }
  std::string norm_path(path);
  while (norm_path.size() > 1 && norm_path.back() == '/') norm_path.pop_back();
  if (norm_path.empty() || norm_path == "/") norm_path = "/";

  std::string norm_query;
  std::size_t start = 0;
  while (start <= query.size()) {
    auto amp = query.find('&', start);
    if (amp == std::string_view::npos) amp = query.size();
    const auto part = query.substr(start, amp - start);
    if (!part.empty()) {
      const auto key = part.substr(0, part.find('='));
      if (!is_tracking_param(key)) {
        if (!norm_query.empty()) norm_query.push_back('&');
        norm_query.append(part);
      }
    }
    start = amp + 1;
  }

  std::string out = scheme + "://" + userinfo + host + port_part + norm_path;
  if (!norm_query.empty()) out += "?" + norm_query;
  return out;
}

RetrievalBatch collect_urls(SearchEngine& engine_impl, std::int64_t question_id, const std::vector<std::string>& queries,
                            Engine engine, Date cutoff, const CollectOptions& options) {
  if (queries.empty()) {
    throw Error(ErrorCode::PreconditionViolation, "question " + std::to_string(question_id) + " has no queries");
  }
  if (options.budget <= 0 || options.max_results_per_query <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "budget and max_results_per_query must be positive");
  }
  struct QueryState {
    std::string query;
    int consumed = 0;
    bool done = false;
    bool failed = false;
    bool answered = false;
  };
  std::vector<QueryState> states;
  for (const auto& q : queries) states.push_back(QueryState{q});

  RetrievalBatch batch;
  batch.question_id = question_id;
  batch.engine = engine;
  batch.budget = options.budget;
  std::unordered_set<std::string> seen;

  auto all_done = [&] { return std::all_of(states.begin(), states.end(), [](const auto& s) { return s.done; }); };
  for (int page = 0; !all_done(); ++page) {
    for (auto& state : states) {
      if (state.done) continue;
      SearchSpec spec{engine, state.query, cutoff, options.range_start, options.max_results_per_query};
      std::vector<SearchHit> hits;
      try {
        hits = engine_impl.search(spec, page);
      } catch (const std::exception& e) {
        state.failed = true;
        state.done = true;
        batch.failed_queries.push_back(state.query);
        batch.warnings.push_back("query '" + state.query + "' failed on page " + std::to_string(page) + ": " + e.what());
        spdlog::warn("question {} [{}]: {}", question_id, to_string(engine), batch.warnings.back());
        continue;
      }
      state.answered = true;
      if (hits.empty()) {
        state.done = true;
        continue;
      }
      for (const auto& hit : hits) {
        if (state.consumed >= options.max_results_per_query) break;
        ++state.consumed;
        std::string normalized;
        try {
          normalized = normalize_url(hit.url);
        } catch (const Error& e) {
          batch.warnings.push_back(std::string("skipped result: ") + e.what());
          continue;
        }
        if (seen.insert(normalized).second) {
          batch.urls.push_back(std::move(normalized));
          if (batch.urls.size() >= static_cast<std::size_t>(options.budget)) return batch;
        }
      }
      if (state.consumed >= options.max_results_per_query) state.done = true;
    }
  }
  const bool every_query_failed =
      std::all_of(states.begin(), states.end(), [](const auto& s) { return s.failed && !s.answered; });
  if (every_query_failed) {
    throw Error(ErrorCode::EngineUnavailable, "all " + std::to_string(states.size()) + " queries failed for question " +
                                                  std::to_string(question_id) + " on " + std::string(to_string(engine)));
  }
  if (!batch.usable()) {
    batch.warnings.push_back("no results: batch unusable");
  }
  return batch;
}

RateLimiter::RateLimiter(std::chrono::milliseconds min_interval) : min_interval_(min_interval) {}

void RateLimiter::acquire(const std::string& key) {
  std::chrono::steady_clock::time_point wake;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    auto& next = next_allowed_[key];
    wake = std::max(now, next);
    next = wake + min_interval_;
  }
  std::this_thread::sleep_until(wake);
}

void RateLimiter::penalize(const std::string& key, std::chrono::milliseconds delay) {
  std::lock_guard lock(mutex_);
  auto& next = next_allowed_[key];
  next = std::max(next, std::chrono::steady_clock::now() + delay);
}

MockSearchEngine::MockSearchEngine(ResultFn results_for, int page_size)
    : results_for_(std::move(results_for)), page_size_(page_size) {}

std::vector<SearchHit> MockSearchEngine::search(const SearchSpec& spec, int page) {
  ++calls_;
  build_engine_query(spec);  // enforce the same invariants as the live adapters
  const auto all = results_for_(spec.query);
  std::vector<SearchHit> hits;
  const std::size_t begin = static_cast<std::size_t>(page) * static_cast<std::size_t>(page_size_);
  for (std::size_t i = begin; i < all.size() && i < begin + static_cast<std::size_t>(page_size_); ++i) {
    hits.push_back(SearchHit{all[i], "result " + std::to_string(i + 1), "", spec.engine, static_cast<int>(i + 1),
                             spec.query});
  }
  return hits;
}

MockSearchEngine::ResultFn synthetic_results(Engine engine, int per_query, int site_pool) {
  return [engine, per_query, site_pool](const std::string& query) {
    std::vector<std::string> urls;
    urls.reserve(static_cast<std::size_t>(per_query));
    for (int i = 0; i < per_query; ++i) {
      const std::uint64_t h = fnv1a64(std::string(to_string(engine)) + "|" + query + "|" + std::to_string(i));
      std::string url = "https://site" + std::to_string(h % static_cast<std::uint64_t>(site_pool)) +
                        ".example.com/news/" + std::to_string((h >> 16) % 500);
      if ((h >> 40) % 7 == 0) url += "?utm_source=feed";
      urls.push_back(std::move(url));
    }
    return urls;
  };
}

namespace {

std::string build_url(const std::string& base, const std::vector<std::pair<std::string, std::string>>& params) {
  std::string url = base;
  char sep = base.find('?') == std::string::npos ? '?' : '&';
  for (const auto& [k, v] : params) {
    url += sep + url_encode(k) + "=" + url_encode(v);
    sep = '&';
  }
  return url;
}

std::string host_of(const std::string& url) {
  const auto start = url.find("://");
  if (start == std::string::npos) return url;
  const auto end = url.find_first_of("/?", start + 3);
  return url.substr(start + 3, end == std::string::npos ? std::string::npos : end - start - 3);
}

HttpResponse get_with_backoff(HttpClient& http, RateLimiter& limiter, const EngineAdapterOptions& options,
                              const std::string& url, const HttpHeaders& headers = {}) {
  const std::string host = host_of(url);
  HttpResponse response;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    limiter.acquire(host);
    response = http.get(url, headers);
    if (response.ok()) return response;
    const bool retriable = !response.transport_error.empty() || response.status == 429 || response.status >= 500;
    if (!retriable) break;
    limiter.penalize(host, options.backoff_base * (1 << attempt));
  }
  throw Error(ErrorCode::EngineUnavailable,
              host + ": " + (response.transport_error.empty() ? "http " + std::to_string(response.status)
                                                             : response.transport_error));
}

}  // namespace

GoogleSearchEngine::GoogleSearchEngine(std::shared_ptr<HttpClient> http, std::string api_key, std::string cx,
                                       EngineAdapterOptions options)
    : http_(std::move(http)),
      api_key_(std::move(api_key)),
      cx_(std::move(cx)),
      options_(options),
      limiter_(options.min_interval) {}

std::unique_ptr<GoogleSearchEngine> GoogleSearchEngine::from_env(std::shared_ptr<HttpClient> http) {
  const char* key = std::getenv("LEAKAUDIT_GOOGLE_API_KEY");
  const char* cx = std::getenv("LEAKAUDIT_GOOGLE_CX");
  if (!key || !*key || !cx || !*cx) {
    throw Error(ErrorCode::ConfigInvalid, "LEAKAUDIT_GOOGLE_API_KEY and LEAKAUDIT_GOOGLE_CX must be set");
  }
  return std::make_unique<GoogleSearchEngine>(std::move(http), key, cx);
}

std::vector<SearchHit> GoogleSearchEngine::search(const SearchSpec& spec, int page) {
  const EngineRequest request = build_engine_query(spec);
  // The JSON API serves at most 10 results per call and 100 per query.
  const int first = 1 + page * 10;
  if (first > 91) return {};
  auto params = request.params;
  params.emplace_back("key", api_key_);
  params.emplace_back("cx", cx_);
  params.emplace_back("start", std::to_string(first));
  params.emplace_back("num", "10");
  const auto response =
      get_with_backoff(*http_, limiter_, options_, build_url("https://www.googleapis.com/customsearch/v1", params));
  return parse_google_results(response.body, spec.query, first);
}

std::vector<SearchHit> parse_google_results(std::string_view body, const std::string& query, int first_rank) {
  std::vector<SearchHit> hits;
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::EngineUnavailable, std::string("unparseable google response: ") + e.what());
  }
  if (!parsed.contains("items")) return hits;
  int rank = first_rank;
  for (const auto& item : parsed.at("items")) {
    if (!item.contains("link")) continue;
    hits.push_back(SearchHit{item.at("link").get<std::string>(), item.value("title", ""), item.value("snippet", ""),
                             Engine::Google, rank++, query});
  }
  return hits;
}

DuckDuckGoSearchEngine::DuckDuckGoSearchEngine(std::shared_ptr<HttpClient> http, std::string endpoint,
                                               EngineAdapterOptions options)
    : http_(std::move(http)), endpoint_(std::move(endpoint)), options_(options), limiter_(options.min_interval) {
  if (const char* override_endpoint = std::getenv("LEAKAUDIT_DDG_ENDPOINT"); override_endpoint && *override_endpoint) {
    endpoint_ = override_endpoint;
  }
}

std::vector<SearchHit> DuckDuckGoSearchEngine::search(const SearchSpec& spec, int page) {
  const EngineRequest request = build_engine_query(spec);
  auto params = request.params;
  if (page > 0) {
    params.emplace_back("s", std::to_string(page * 30));
    params.emplace_back("dc", std::to_string(page * 30 + 1));
  }
  const auto response = get_with_backoff(*http_, limiter_, options_, build_url(endpoint_, params));
  return parse_duckduckgo_html(response.body, spec.query, page * 30 + 1);
}

std::vector<SearchHit> parse_duckduckgo_html(std::string_view html, const std::string& query, int first_rank) {
  std::vector<SearchHit> hits;
  int rank = first_rank;
  for (const auto& anchor : find_elements(html, "a")) {
    const auto cls = anchor.attribute("class");
    if (!cls || cls->find("result__a") == std::string::npos) continue;
    auto href = anchor.attribute("href").value_or("");
    // Result links are wrapped in a redirect: //duckduckgo.com/l/?uddg=<encoded target>&rut=...
    if (const auto pos = href.find("uddg="); pos != std::string::npos) {
      auto end = href.find('&', pos);
      href = url_decode(href.substr(pos + 5, end == std::string::npos ? std::string::npos : end - pos - 5));
    }
    if (href.rfind("//", 0) == 0) href = "https:" + href;
    if (href.empty()) continue;
    hits.push_back(SearchHit{href, collapse_whitespace(anchor.inner_text), "", Engine::DuckDuckGo, rank++, query});
  }
  return hits;
}

}  // namespace leakaudit
