#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <map>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leakaudit/http.hpp"
#include "leakaudit/time.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

struct SelfReportedDate {
  Date date{};
  std::string source;  // e.g. "meta:article:published_time", "jsonld:dateModified", "byline:updated"

  friend bool operator==(const SelfReportedDate&, const SelfReportedDate&) = default;
};

struct FetchedPage {
  std::string url;
  int http_status = 0;
  Timestamp fetched_at{};
  std::string content_hash;  // sha256 of the raw bytes
  std::string extracted_text;
  std::vector<SelfReportedDate> self_reported_dates;
  std::optional<std::string> fetch_error;

  bool ok() const { return !fetch_error.has_value(); }
  friend bool operator==(const FetchedPage&, const FetchedPage&) = default;
};

json to_json(const FetchedPage& page);
FetchedPage fetched_page_from_json(const json& record);

// Visible text with markup, scripts and styles removed. Navigation, sidebars and
// related-content modules are kept. Throws Error(UndecodableContent) for binary payloads or
// charsets other than UTF-8 / ASCII / Latin-1 / Windows-1252.
std::string extract_text(std::string_view html);

std::vector<SelfReportedDate> extract_self_reported_dates(std::string_view html);

// Parses the date component of common timestamp spellings ("2020-06-01T..", "2020/06/01",
// "June 1, 2020", "1 June 2020", "Jun. 1, 2020").
std::optional<Date> parse_loose_date(std::string_view text);

// Disk cache: <dir>/<2-char shard>/<sha256(url)>.bin holds the raw bytes and
// <sha256(url)>.json the derived fields. Writes are atomic and serialized per key.
class PageCache {
 public:
  explicit PageCache(std::filesystem::path dir);

  std::optional<FetchedPage> load(const std::string& url) const;
  std::optional<std::string> load_raw(const std::string& url) const;
  void store(const FetchedPage& page, std::string_view raw_bytes);

  std::filesystem::path blob_path(const std::string& url) const;
  std::filesystem::path meta_path(const std::string& url) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::mutex& lock_for(const std::string& key);

  std::filesystem::path dir_;
  std::array<std::mutex, 64> stripes_;
};

struct FetchPolicy {
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{1000};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

// Never throws for network or content problems: failures become FetchedPage::fetch_error and are
// cached like successes.
FetchedPage fetch(const std::string& url, PageCache& cache, HttpClient& http, const FetchPolicy& policy,
                  const Clock& clock);

// Limits simultaneous in-flight requests globally and per host.
class ConnectionLimiter {
 public:
  ConnectionLimiter(std::size_t global_limit, std::size_t per_host_limit);
  class Permit {
   public:
    Permit(ConnectionLimiter& owner, std::string host);
    ~Permit();
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ConnectionLimiter& owner_;
    std::string host_;
  };

 private:
  std::size_t global_limit_;
  std::size_t per_host_limit_;
  std::size_t in_flight_ = 0;
  std::map<std::string, std::size_t> per_host_;
  std::mutex mutex_;
  std::condition_variable cv_;
};

}  // namespace leakaudit
