#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace leakaudit {

using HttpHeaders = std::map<std::string, std::string>;

struct HttpResponse {
  int status = 0;  // 0 when the transport failed before a status line arrived
  std::string body;
  HttpHeaders headers;  // lowercased names
  std::string transport_error;
  std::string final_url;

  bool ok() const { return transport_error.empty() && status >= 200 && status < 300; }
};

// Thread-safe blocking HTTP. Implementations follow redirects.
class HttpClient {
 public:
  virtual ~HttpClient() = default;
  virtual HttpResponse get(const std::string& url, const HttpHeaders& headers = {}) = 0;
  virtual HttpResponse post(const std::string& url, std::string_view body, std::string_view content_type,
                            const HttpHeaders& headers = {}) = 0;
};

struct HttpClientOptions {
  std::chrono::seconds timeout{30};
  int max_redirects = 10;
  std::string user_agent = "leakaudit/1.0 (+retrospective-forecasting leakage audit)";
};

std::unique_ptr<HttpClient> make_http_client(HttpClientOptions options = {});

// Percent-encodes everything outside the RFC 3986 unreserved set.
std::string url_encode(std::string_view text);
std::string url_decode(std::string_view text);

}  // namespace leakaudit
