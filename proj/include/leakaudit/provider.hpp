#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leakaudit/http.hpp"
#include "leakaudit/time.hpp"

namespace leakaudit {

struct CompletionRequest {
  std::string prompt;
  std::optional<double> temperature;  // nullopt = provider default
  int attempt = 0;                    // 0-based; distinguishes retries of the same prompt
};

struct Completion {
  std::string text;
  Timestamp obtained_at{};
};

// Text-in/text-out generation. Implementations must be safe to call concurrently.
// Transport failures surface as Error(ProviderError).
class TextProvider {
 public:
  virtual ~TextProvider() = default;
  virtual std::string id() const = 0;
  virtual Completion complete(const CompletionRequest& request) = 0;
};

// Embedding dimension is discovered from the first result; it must be uniform per instance.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

// Replays canned replies in order, then keeps repeating the last one. Records every prompt.
class ScriptedProvider final : public TextProvider {
 public:
  explicit ScriptedProvider(std::vector<std::string> replies, std::string id = "scripted", Clock clock = {});
  std::string id() const override { return id_; }
  Completion complete(const CompletionRequest& request) override;

  std::size_t calls() const;
  std::vector<CompletionRequest> requests() const;

 private:
  std::vector<std::string> replies_;
  std::string id_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::vector<CompletionRequest> requests_;
};

// Wraps any provider with a reply cache keyed by (provider id, temperature, attempt, prompt).
// Cached completions keep the timestamp of the original call, so reruns reproduce artifacts.
class CachingTextProvider final : public TextProvider {
 public:
  CachingTextProvider(std::shared_ptr<TextProvider> inner, std::filesystem::path dir);
  std::string id() const override { return inner_->id(); }
  Completion complete(const CompletionRequest& request) override;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<TextProvider> inner_;
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// Feature-hashed character-trigram embedding. Deterministic across runs and platforms.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256);
  std::string id() const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dimension_;
};

struct OpenAiCompatibleOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model;
  int max_transport_retries = 2;
};

// Chat-completions adapter for OpenAI-compatible servers (vLLM, llama.cpp server, hosted APIs).
class OpenAiChatProvider final : public TextProvider {
 public:
  OpenAiChatProvider(OpenAiCompatibleOptions options, std::shared_ptr<HttpClient> http, Clock clock);
  std::string id() const override { return "openai:" + options_.model; }
  Completion complete(const CompletionRequest& request) override;

 private:
  OpenAiCompatibleOptions options_;
  std::shared_ptr<HttpClient> http_;
  Clock clock_;
};

class OpenAiEmbedder final : public Embedder {
 public:
  OpenAiEmbedder(OpenAiCompatibleOptions options, std::shared_ptr<HttpClient> http);
  std::string id() const override { return "openai:" + options_.model; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  OpenAiCompatibleOptions options_;
  std::shared_ptr<HttpClient> http_;
};

// Reads LEAKAUDIT_OPENAI_BASE_URL / LEAKAUDIT_OPENAI_API_KEY; the model comes from the id suffix.
OpenAiCompatibleOptions openai_options_from_env(const std::string& model);

}  // namespace leakaudit
