#include <httplib.h>

#include "leakaudit/http.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string target;  // path + query
};

bool split_url(const std::string& url, SplitUrl& out) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return false;
  const auto path_start = url.find_first_of("/?", scheme_end + 3);
  out.origin = url.substr(0, path_start);
  out.target = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (!out.target.empty() && out.target.front() == '?') out.target.insert(out.target.begin(), '/');
  const auto frag = out.target.find('#');
  if (frag != std::string::npos) out.target.resize(frag);
  return out.origin.size() > scheme_end + 3;
}

class HttplibClient final : public HttpClient {
 public:
  explicit HttplibClient(HttpClientOptions options) : options_(std::move(options)) {}

  HttpResponse get(const std::string& url, const HttpHeaders& headers) override {
    return perform(url, headers, [](httplib::Client& cli, const std::string& target, const httplib::Headers& h) {
      return cli.Get(target, h);
    });
  }

  HttpResponse post(const std::string& url, std::string_view body, std::string_view content_type,
                    const HttpHeaders& headers) override {
    const std::string payload(body);
    const std::string ctype(content_type);
    return perform(url, headers, [&](httplib::Client& cli, const std::string& target, const httplib::Headers& h) {
      return cli.Post(target, h, payload, ctype);
    });
  }

 private:
  template <typename Send>
  HttpResponse perform(const std::string& url, const HttpHeaders& headers, Send&& send) {
    HttpResponse response;
    response.final_url = url;
    SplitUrl parts;
    if (!split_url(url, parts)) {
      response.transport_error = "unsupported url: " + url;
      return response;
    }
    try {
      httplib::Client cli(parts.origin);
      const auto secs = static_cast<time_t>(options_.timeout.count());
      cli.set_connection_timeout(secs, 0);
      cli.set_read_timeout(secs, 0);
      cli.set_write_timeout(secs, 0);
      cli.set_follow_location(true);
      cli.enable_server_certificate_verification(true);
      httplib::Headers h{{"User-Agent", options_.user_agent}};
      for (const auto& [k, v] : headers) h.emplace(k, v);
      auto result = send(cli, parts.target, h);
      if (!result) {
        response.transport_error = httplib::to_string(result.error());
        return response;
      }
      response.status = result->status;
      response.body = std::move(result->body);
      for (const auto& [k, v] : result->headers) response.headers[to_lower(k)] = v;
      if (!result->location.empty()) response.final_url = result->location;
    } catch (const std::exception& e) {
      response.transport_error = e.what();
    }
    return response;
  }

  HttpClientOptions options_;
};

}  // namespace

std::unique_ptr<HttpClient> make_http_client(HttpClientOptions options) {
  return std::make_unique<HttplibClient>(std::move(options));
}

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0f]);
    }
  }
  return out;
}

std::string url_decode(std::string_view text) {
  auto hexval = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      const int hi = hexval(text[i + 1]);
      const int lo = hexval(text[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(text[i] == '+' ? ' ' : text[i]);
  }
  return out;
}

}  // namespace leakaudit
