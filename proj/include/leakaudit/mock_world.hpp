#pragma once

#include <atomic>
#include <string>

#include "leakaudit/http.hpp"
#include "leakaudit/provider.hpp"

namespace leakaudit {

// Offline language model that recognizes the query, judge and forecast prompts and answers each
// with a reply derived from a hash of the prompt. A small share of first attempts is deliberately
// malformed so retry paths run in end-to-end tests.
class MockLanguageModel final : public TextProvider {
 public:
  explicit MockLanguageModel(Clock clock, std::string id = "mock");
  std::string id() const override { return id_; }
  Completion complete(const CompletionRequest& request) override;
  std::size_t calls() const { return calls_; }

 private:
  Clock clock_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

// Offline web: every URL maps to a stable synthetic HTML page. Some URLs answer 404, some serve
// binary documents, and about one page in ten is long enough to need chunk selection.
class MockWebClient final : public HttpClient {
 public:
  HttpResponse get(const std::string& url, const HttpHeaders& headers = {}) override;
  HttpResponse post(const std::string& url, std::string_view body, std::string_view content_type,
                    const HttpHeaders& headers = {}) override;
  std::size_t requests() const { return requests_; }

 private:
  std::atomic<std::size_t> requests_{0};
};

std::string synthetic_page(const std::string& url);

}  // namespace leakaudit
