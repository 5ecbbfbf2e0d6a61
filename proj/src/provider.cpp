#include "leakaudit/provider.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "leakaudit/error.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

ScriptedProvider::ScriptedProvider(std::vector<std::string> replies, std::string id, Clock clock)
    : replies_(std::move(replies)), id_(std::move(id)), clock_(clock ? std::move(clock) : system_clock()) {}

Completion ScriptedProvider::complete(const CompletionRequest& request) {
  std::lock_guard lock(mutex_);
  const std::size_t n = requests_.size();
  requests_.push_back(request);
  if (replies_.empty()) {
    throw Error(ErrorCode::ProviderError, "scripted provider has no replies");
  }
  return Completion{replies_[std::min(n, replies_.size() - 1)], clock_()};
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::vector<CompletionRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

CachingTextProvider::CachingTextProvider(std::shared_ptr<TextProvider> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

Completion CachingTextProvider::complete(const CompletionRequest& request) {
  std::ostringstream key;
  key << inner_->id() << '\n'
      << (request.temperature ? std::to_string(*request.temperature) : std::string("default")) << '\n'
      << request.attempt << '\n'
      << request.prompt;
  const std::string hash = sha256_hex(key.str());
  const auto path = dir_ / hash.substr(0, 2) / (hash + ".json");
  if (std::filesystem::exists(path)) {
    const json cached = json::parse(read_file(path));
    ++hits_;
    return Completion{cached.at("text").get<std::string>(),
                      parse_timestamp(cached.at("obtained_at").get<std::string>())};
  }
  ++misses_;
  Completion fresh = inner_->complete(request);
  const json record{{"provider", inner_->id()},
                    {"text", fresh.text},
                    {"obtained_at", format_timestamp(fresh.obtained_at)}};
  write_file_atomic(path, record.dump());
  return fresh;
}

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ < 2) {
    throw Error(ErrorCode::ConfigInvalid, "embedding dimension must be at least 2");
  }
}

std::string HashingEmbedder::id() const { return "hashing-" + std::to_string(dimension_); }

std::vector<std::vector<double>> HashingEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dimension_, 0.0);
    auto add = [&](std::string_view feature) {
      const std::uint64_t h = fnv1a64(feature);
      v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    };
    const std::string lower = to_lower(text);
    std::size_t i = 0;
    while (i < lower.size()) {
      if (!is_word_byte(static_cast<unsigned char>(lower[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < lower.size() && is_word_byte(static_cast<unsigned char>(lower[j]))) ++j;
      const std::string word = "^" + lower.substr(i, j - i) + "$";
      add(word);
      for (std::size_t k = 0; k + 3 <= word.size(); ++k) add(std::string_view(word).substr(k, 3));
      i = j;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      // No word features (empty or punctuation-only text): fall back to a fixed direction.
      v[0] = 1.0;
    } else {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

OpenAiCompatibleOptions openai_options_from_env(const std::string& model) {
  OpenAiCompatibleOptions options;
  options.model = model;
  if (const char* base = std::getenv("LEAKAUDIT_OPENAI_BASE_URL"); base && *base) options.base_url = base;
  if (const char* key = std::getenv("LEAKAUDIT_OPENAI_API_KEY"); key && *key) options.api_key = key;
  return options;
}

namespace {

HttpResponse post_with_retries(HttpClient& http, const OpenAiCompatibleOptions& options, const std::string& url,
                               const std::string& body) {
  HttpHeaders headers;
  if (!options.api_key.empty()) headers["Authorization"] = "Bearer " + options.api_key;
  HttpResponse response;
  for (int attempt = 0; attempt <= options.max_transport_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::seconds(1 << attempt));
    response = http.post(url, body, "application/json", headers);
    if (response.ok()) return response;
    const bool retriable = !response.transport_error.empty() || response.status == 429 || response.status >= 500;
    if (!retriable) break;
  }
  throw Error(ErrorCode::ProviderError,
              url + " failed: " +
                  (response.transport_error.empty() ? "http " + std::to_string(response.status) + " " + response.body.substr(0, 200)
                                                    : response.transport_error));
}

}  // namespace

OpenAiChatProvider::OpenAiChatProvider(OpenAiCompatibleOptions options, std::shared_ptr<HttpClient> http, Clock clock)
    : options_(std::move(options)), http_(std::move(http)), clock_(clock ? std::move(clock) : system_clock()) {}

Completion OpenAiChatProvider::complete(const CompletionRequest& request) {
  json body{{"model", options_.model}, {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  if (request.temperature) body["temperature"] = *request.temperature;
  const auto response = post_with_retries(*http_, options_, options_.base_url + "/chat/completions", body.dump());
  try {
    const json parsed = json::parse(response.body);
    return Completion{parsed.at("choices").at(0).at("message").at("content").get<std::string>(), clock_()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderError, std::string("unexpected chat completion payload: ") + e.what());
  }
}

OpenAiEmbedder::OpenAiEmbedder(OpenAiCompatibleOptions options, std::shared_ptr<HttpClient> http)
    : options_(std::move(options)), http_(std::move(http)) {}

std::vector<std::vector<double>> OpenAiEmbedder::embed(std::span<const std::string> texts) {
  json body{{"model", options_.model}, {"input", json(std::vector<std::string>(texts.begin(), texts.end()))}};
  HttpResponse response;
  try {
    response = post_with_retries(*http_, options_, options_.base_url + "/embeddings", body.dump());
  } catch (const Error& e) {
    throw Error(ErrorCode::EmbedderError, e.what());
  }
  try {
    const json parsed = json::parse(response.body);
    std::vector<std::vector<double>> out(texts.size());
    for (const auto& item : parsed.at("data")) {
      const auto index = item.at("index").get<std::size_t>();
      if (index >= out.size()) throw Error(ErrorCode::EmbedderError, "embedding index out of range");
      out[index] = item.at("embedding").get<std::vector<double>>();
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::EmbedderError, std::string("unexpected embeddings payload: ") + e.what());
  }
}

}  // namespace leakaudit
