#include "leakaudit/fetch_extract.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <thread>

#include "leakaudit/error.hpp"
#include "leakaudit/html.hpp"

namespace leakaudit {

json to_json(const FetchedPage& page) {
  json dates = json::array();
  for (const auto& d : page.self_reported_dates) dates.push_back({{"date", format_date(d.date)}, {"source", d.source}});
  return json{{"url", page.url},
              {"http_status", page.http_status},
              {"fetched_at", format_timestamp(page.fetched_at)},
              {"content_hash", page.content_hash},
              {"extracted_text", page.extracted_text},
              {"self_reported_dates", dates},
              {"fetch_error", page.fetch_error ? json(*page.fetch_error) : json(nullptr)}};
}

FetchedPage fetched_page_from_json(const json& record) {
  FetchedPage page;
  page.url = record.at("url").get<std::string>();
  page.http_status = record.at("http_status").get<int>();
  page.fetched_at = parse_timestamp(record.at("fetched_at").get<std::string>());
  page.content_hash = record.at("content_hash").get<std::string>();
  page.extracted_text = record.at("extracted_text").get<std::string>();
  for (const auto& d : record.at("self_reported_dates")) {
    page.self_reported_dates.push_back(
        SelfReportedDate{parse_date(d.at("date").get<std::string>()), d.at("source").get<std::string>()});
  }
  if (const auto& err = record.at("fetch_error"); !err.is_null()) page.fetch_error = err.get<std::string>();
  return page;
}

namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      len = 4;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

std::string latin1_to_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::string declared_charset(std::string_view bytes) {
  const std::string head = to_lower(bytes.substr(0, std::min<std::size_t>(bytes.size(), 4096)));
  const auto pos = head.find("charset=");
  if (pos == std::string::npos) return {};
  std::size_t p = pos + 8;
  while (p < head.size() && (head[p] == '"' || head[p] == '\'' || head[p] == ' ')) ++p;
  std::size_t e = p;
  while (e < head.size() && (std::isalnum(static_cast<unsigned char>(head[e])) || head[e] == '-' || head[e] == '_')) ++e;
  return head.substr(p, e - p);
}

std::string decode_document(std::string_view bytes) {
  if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);
  const auto sample = bytes.substr(0, std::min<std::size_t>(bytes.size(), 8192));
  std::size_t controls = 0;
  for (unsigned char c : sample) {
    if (c == 0) throw Error(ErrorCode::UndecodableContent, "binary content (NUL byte)");
    if (c < 0x09 || (c > 0x0D && c < 0x20)) ++controls;
  }
  if (!sample.empty() && controls * 10 > sample.size()) {
    throw Error(ErrorCode::UndecodableContent, "binary content (control bytes)");
  }
  const std::string charset = declared_charset(bytes);
  static constexpr std::array<std::string_view, 4> kUtf8 = {"", "utf-8", "utf8", "us-ascii"};
  static constexpr std::array<std::string_view, 6> kLatin = {"iso-8859-1", "latin1",      "latin-1",
                                                             "windows-1252", "cp1252", "iso-8859-15"};
  if (std::find(kUtf8.begin(), kUtf8.end(), charset) != kUtf8.end() || charset == "ascii") {
    if (valid_utf8(bytes)) return std::string(bytes);
    return latin1_to_utf8(bytes);
  }
  if (std::find(kLatin.begin(), kLatin.end(), charset) != kLatin.end()) return latin1_to_utf8(bytes);
  throw Error(ErrorCode::UndecodableContent, "unsupported charset '" + charset + "'");
}

bool skipped_container(std::string_view tag) { return tag == "svg" || tag == "template" || tag == "select"; }

bool is_void_element(std::string_view tag) {
  static constexpr std::array<std::string_view, 14> kVoid = {"area", "base", "br",   "col",  "embed",  "hr",    "img",
                                                             "input", "link", "meta", "param", "source", "track", "wbr"};
  return std::find(kVoid.begin(), kVoid.end(), tag) != kVoid.end();
}

std::string tidy_lines(std::string_view raw) {
  std::string out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto nl = raw.find('\n', start);
    if (nl == std::string_view::npos) nl = raw.size();
    const std::string line = collapse_whitespace(raw.substr(start, nl - start));
    if (!line.empty()) {
      if (!out.empty()) out.push_back('\n');
      out += line;
    }
    start = nl + 1;
  }
  return out;
}

}  // namespace

std::string extract_text(std::string_view html) {
  const std::string doc = decode_document(html);
  std::string raw;
  raw.reserve(doc.size() / 2);
  int skip_depth = 0;
  bool in_head = false;
  tokenize_html(doc, [&](const HtmlToken& t) {
    switch (t.kind) {
      case HtmlToken::Kind::StartTag:
        if (t.name == "head") in_head = true;
        if (t.name == "body") in_head = false;
        if (skipped_container(t.name) && !t.self_closing && !is_void_element(t.name)) ++skip_depth;
        if (is_block_element(t.name)) raw.push_back('\n');
        break;
      case HtmlToken::Kind::EndTag:
        if (t.name == "head") in_head = false;
        if (skipped_container(t.name) && skip_depth > 0) --skip_depth;
        if (is_block_element(t.name)) raw.push_back('\n');
        break;
      case HtmlToken::Kind::Text:
        if (!t.raw_text && !in_head && skip_depth == 0) raw += decode_entities(t.text);
        break;
      case HtmlToken::Kind::Comment:
        break;
    }
  });
  return tidy_lines(raw);
}

namespace {

int month_from_name(std::string_view word) {
  static constexpr std::array<std::string_view, 12> kMonths = {"jan", "feb", "mar", "apr", "may", "jun",
                                                               "jul", "aug", "sep", "oct", "nov", "dec"};
  const std::string lower = to_lower(word);
  if (lower.size() < 3) return 0;
  for (std::size_t i = 0; i < kMonths.size(); ++i) {
    if (lower.compare(0, 3, kMonths[i]) == 0) {
      static constexpr std::array<std::string_view, 12> kFull = {"january", "february", "march",     "april",
                                                                 "may",     "june",     "july",      "august",
                                                                 "september", "october", "november", "december"};
      // Accept "Sep", "Sept", "September", but not arbitrary words starting with a month prefix.
      if (lower.size() == 3 || kFull[i].rfind(lower, 0) == 0) return static_cast<int>(i + 1);
    }
  }
  return 0;
}

std::optional<Date> make_date(int y, int m, int d) {
  if (y < 1900 || y > 2100 || m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)}, std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

struct Cursor {
  std::string_view s;
  std::size_t p = 0;
  bool at_end() const { return p >= s.size(); }
  void skip(std::string_view chars) {
    while (p < s.size() && chars.find(s[p]) != std::string_view::npos) ++p;
  }
  std::optional<int> number(std::size_t min_digits, std::size_t max_digits) {
    std::size_t q = p;
    int v = 0;
    while (q < s.size() && q - p < max_digits && std::isdigit(static_cast<unsigned char>(s[q]))) {
      v = v * 10 + (s[q] - '0');
      ++q;
    }
    if (q - p < min_digits) return std::nullopt;
    if (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q]))) return std::nullopt;
    p = q;
    return v;
  }
  std::string_view word() {
    std::size_t q = p;
    while (q < s.size() && std::isalpha(static_cast<unsigned char>(s[q]))) ++q;
    auto w = s.substr(p, q - p);
    p = q;
    return w;
  }
};

std::optional<Date> parse_date_prefix(std::string_view text) {
  // ISO-like: YYYY-MM-DD / YYYY/MM/DD
  {
    Cursor c{text};
    auto y = c.number(4, 4);
    if (y && !c.at_end() && (c.s[c.p] == '-' || c.s[c.p] == '/')) {
      const char sep = c.s[c.p++];
      auto m = c.number(1, 2);
      if (m && !c.at_end() && c.s[c.p] == sep) {
        ++c.p;
        if (auto d = c.number(1, 2)) return make_date(*y, *m, *d);
      }
    }
  }
  // Month D, YYYY
  {
    Cursor c{text};
    if (int m = month_from_name(c.word()); m != 0) {
      c.skip(". ");
      if (auto d = c.number(1, 2)) {
        c.skip("stndrh");  // ordinal suffixes
        c.skip(", ");
        if (auto y = c.number(4, 4)) return make_date(*y, m, *d);
      }
    }
  }
  // D Month YYYY
  {
    Cursor c{text};
    if (auto d = c.number(1, 2)) {
      c.skip("stndrh");
      c.skip(" ");
      if (int m = month_from_name(c.word()); m != 0) {
        c.skip("., ");
        if (auto y = c.number(4, 4)) return make_date(*y, m, *d);
      }
    }
  }
  return std::nullopt;
}

const std::array<std::string_view, 22>& date_meta_keys() {
  static constexpr std::array<std::string_view, 22> kKeys = {
      "article:published_time", "article:modified_time", "og:updated_time",   "og:published_time",
      "date",                   "pubdate",               "publishdate",       "publish_date",
      "publish-date",           "dc.date",               "dc.date.issued",    "dc.date.modified",
      "dcterms.created",        "dcterms.modified",      "dcterms.date",      "last-modified",
      "lastmod",                "datepublished",         "datemodified",      "sailthru.date",
      "parsely-pub-date",       "citation_publication_date"};
  return kKeys;
}

void collect_jsonld_dates(const json& node, std::vector<SelfReportedDate>& out) {
  static constexpr std::array<std::string_view, 4> kKeys = {"datePublished", "dateModified", "dateCreated",
                                                            "uploadDate"};
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) {
      if (v.is_string() && std::find(kKeys.begin(), kKeys.end(), k) != kKeys.end()) {
        if (auto d = parse_loose_date(v.get<std::string>())) out.push_back({*d, "jsonld:" + k});
      } else {
        collect_jsonld_dates(v, out);
      }
    }
  } else if (node.is_array()) {
    for (const auto& v : node) collect_jsonld_dates(v, out);
  }
}

void collect_byline_dates(std::string_view text, std::vector<SelfReportedDate>& out) {
  struct Keyword {
    std::string_view phrase;
    std::string_view source;
  };
  static constexpr std::array<Keyword, 7> kKeywords = {{{"last updated", "byline:updated"},
                                                        {"updated", "byline:updated"},
                                                        {"last modified", "byline:updated"},
                                                        {"modified", "byline:updated"},
                                                        {"first published", "byline:published"},
                                                        {"published", "byline:published"},
                                                        {"posted", "byline:published"}}};
  const std::string lower = to_lower(text);
  std::vector<std::pair<std::size_t, SelfReportedDate>> found;
  std::vector<std::size_t> consumed_ends;
  for (const auto& kw : kKeywords) {
    for (auto pos = lower.find(kw.phrase); pos != std::string::npos; pos = lower.find(kw.phrase, pos + 1)) {
      if (pos > 0 && std::isalpha(static_cast<unsigned char>(lower[pos - 1]))) continue;
      const std::size_t end = pos + kw.phrase.size();
      // "updated" inside "last updated" is the same byline.
      if (std::find(consumed_ends.begin(), consumed_ends.end(), end) != consumed_ends.end()) continue;
      Cursor c{text, end};
      c.skip(" :");
      if (lower.compare(c.p, 3, "on ") == 0) c.p += 3;
      c.skip(" :");
      if (auto d = parse_date_prefix(text.substr(c.p, 40))) {
        found.emplace_back(pos, SelfReportedDate{*d, std::string(kw.source)});
        consumed_ends.push_back(end);
      }
    }
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [pos, d] : found) out.push_back(std::move(d));
}

}  // namespace

std::optional<Date> parse_loose_date(std::string_view text) { return parse_date_prefix(trim(text)); }

std::vector<SelfReportedDate> extract_self_reported_dates(std::string_view html) {
  std::vector<SelfReportedDate> dates;
  bool ldjson_script = false;
  std::string doc;
  try {
    doc = decode_document(html);
  } catch (const Error&) {
    return dates;
  }
  tokenize_html(doc, [&](const HtmlToken& t) {
    if (t.kind == HtmlToken::Kind::StartTag) {
      if (t.name == "script") {
        ldjson_script = to_lower(t.attribute("type").value_or("")) == "application/ld+json";
      } else if (t.name == "meta") {
        const auto content = t.attribute("content");
        if (!content) return;
        for (const char* attr : {"property", "name", "itemprop", "http-equiv"}) {
          const auto key = t.attribute(attr);
          if (!key) continue;
          const std::string lower = to_lower(*key);
          const auto& keys = date_meta_keys();
          if (std::find(keys.begin(), keys.end(), lower) != keys.end()) {
            if (auto d = parse_loose_date(*content)) dates.push_back({*d, "meta:" + lower});
            break;
          }
        }
      } else if (t.name == "time") {
        if (auto dt = t.attribute("datetime")) {
          if (auto d = parse_loose_date(*dt)) {
            const auto itemprop = t.attribute("itemprop");
            dates.push_back({*d, itemprop ? "time:" + to_lower(*itemprop) : std::string("time:datetime")});
          }
        }
      }
    } else if (t.kind == HtmlToken::Kind::Text && t.raw_text && t.name == "script" && ldjson_script) {
      try {
        collect_jsonld_dates(json::parse(t.text), dates);
      } catch (const json::exception&) {
        // Malformed JSON-LD is common; it simply contributes no dates.
      }
    }
  });
  try {
    collect_byline_dates(extract_text(html), dates);
  } catch (const Error&) {
  }
  std::vector<SelfReportedDate> unique;
  for (auto& d : dates) {
    if (std::find(unique.begin(), unique.end(), d) == unique.end()) unique.push_back(std::move(d));
  }
  return unique;
}

PageCache::PageCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

std::filesystem::path PageCache::blob_path(const std::string& url) const {
  const auto key = sha256_hex(url);
  return dir_ / key.substr(0, 2) / (key + ".bin");
}

std::filesystem::path PageCache::meta_path(const std::string& url) const {
  const auto key = sha256_hex(url);
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::mutex& PageCache::lock_for(const std::string& key) { return stripes_[fnv1a64(key) % stripes_.size()]; }

std::optional<FetchedPage> PageCache::load(const std::string& url) const {
  const auto path = meta_path(url);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return fetched_page_from_json(json::parse(read_file(path)));
}

std::optional<std::string> PageCache::load_raw(const std::string& url) const {
  const auto path = blob_path(url);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_file(path);
}

void PageCache::store(const FetchedPage& page, std::string_view raw_bytes) {
  std::lock_guard lock(lock_for(page.url));
  write_file_atomic(blob_path(page.url), raw_bytes);
  // The sidecar is written last: its presence marks a complete entry.
  write_file_atomic(meta_path(page.url), to_json(page).dump(1));
}

FetchedPage fetch(const std::string& url, PageCache& cache, HttpClient& http, const FetchPolicy& policy,
                  const Clock& clock) {
  if (auto cached = cache.load(url)) return *cached;

  HttpResponse response;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay = policy.backoff_base * (1 << (attempt - 1));
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
    }
    response = http.get(url);
    const bool retriable = !response.transport_error.empty() || response.status == 429 || response.status >= 500;
    if (!retriable) break;
  }

  FetchedPage page;
  page.url = url;
  page.http_status = response.status;
  page.fetched_at = clock();
  page.content_hash = sha256_hex(response.body);
  if (!response.transport_error.empty()) {
    page.fetch_error = "transport: " + response.transport_error;
  } else if (response.status < 200 || response.status >= 300) {
    page.fetch_error = "http " + std::to_string(response.status);
  } else {
    const auto ct_it = response.headers.find("content-type");
    const std::string content_type = ct_it == response.headers.end() ? "" : to_lower(ct_it->second);
    const bool textual = content_type.empty() || content_type.find("html") != std::string::npos ||
                         content_type.find("text/") != std::string::npos || content_type.find("xml") != std::string::npos;
    if (!textual) {
      page.fetch_error = "unsupported content type: " + content_type;
    } else {
      try {
        page.extracted_text = extract_text(response.body);
        page.self_reported_dates = extract_self_reported_dates(response.body);
        if (auto lm = response.headers.find("last-modified"); lm != response.headers.end()) {
          // RFC 7231 form: "Wed, 21 Oct 2015 07:28:00 GMT"
          std::string_view v = lm->second;
          if (const auto comma = v.find(','); comma != std::string_view::npos) v.remove_prefix(comma + 1);
          if (auto d = parse_loose_date(v)) page.self_reported_dates.push_back({*d, "http:last-modified"});
        }
      } catch (const Error& e) {
        page.extracted_text.clear();
        page.self_reported_dates.clear();
        page.fetch_error = e.what();
      }
    }
  }
  if (page.fetch_error) spdlog::debug("fetch {} failed: {}", url, *page.fetch_error);
  cache.store(page, response.body);
  return page;
}

ConnectionLimiter::ConnectionLimiter(std::size_t global_limit, std::size_t per_host_limit)
    : global_limit_(std::max<std::size_t>(global_limit, 1)), per_host_limit_(std::max<std::size_t>(per_host_limit, 1)) {}

ConnectionLimiter::Permit::Permit(ConnectionLimiter& owner, std::string host) : owner_(owner), host_(std::move(host)) {
  std::unique_lock lock(owner_.mutex_);
  owner_.cv_.wait(lock, [&] {
    return owner_.in_flight_ < owner_.global_limit_ && owner_.per_host_[host_] < owner_.per_host_limit_;
  });
  ++owner_.in_flight_;
  ++owner_.per_host_[host_];
}

ConnectionLimiter::Permit::~Permit() {
  {
    std::lock_guard lock(owner_.mutex_);
    --owner_.in_flight_;
    --owner_.per_host_[host_];
  }
  owner_.cv_.notify_all();
}

}  // namespace leakaudit
