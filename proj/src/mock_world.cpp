#include "leakaudit/mock_world.hpp"

#include <array>
#include <random>

#include "leakaudit/error.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {
namespace {

constexpr std::array<std::string_view, 20> kFacets = {
    "latest news",      "official statement", "timeline",        "analysis",        "forecast",
    "expert opinion",   "history",            "statistics",      "government",      "vote",
    "negotiations",     "report",             "announcement",    "background",      "policy",
    "decision",         "deadline",           "outlook",         "reaction",        "progress"};

constexpr std::array<std::string_view, 48> kVocabulary = {
    "the",       "committee", "announced", "talks",     "between",   "officials", "treaty",    "market",
    "growth",    "expected",  "report",    "election",  "minister",  "agreement", "signed",    "members",
    "council",   "vote",      "proposal",  "economic",  "security",  "alliance",  "decision",  "process",
    "analysts",  "said",      "would",     "could",     "before",    "after",     "during",    "year",
    "policy",    "regional",  "national",  "summit",    "delayed",   "approved",  "rejected",  "review",
    "pending",   "support",   "opposition", "sources",  "statement", "deadline",  "quarter",   "ratified"};

std::string after_marker(std::string_view text, std::string_view marker) {
  const auto pos = text.find(marker);
  return pos == std::string_view::npos ? std::string() : std::string(text.substr(pos + marker.size()));
}

std::string query_reply(std::string_view prompt) {
  int n = 15;
  const auto gen = prompt.find("Generate ");
  if (gen != std::string_view::npos) n = std::atoi(std::string(prompt.substr(gen + 9, 3)).c_str());
  std::string title = after_marker(prompt, "based on the user query:\n");
  title = title.substr(0, title.find('\n'));
  const std::string base = collapse_whitespace(title.substr(0, 60));
  json queries = json::array();
  for (int i = 0; i < n && i < static_cast<int>(kFacets.size()); ++i) queries.push_back(base + " " + std::string(kFacets[i]));
  return "Here are the queries.\n<JSON>" + queries.dump() + "</JSON>";
}

std::string judge_reply(std::string_view prompt, int attempt) {
  const std::string context = after_marker(prompt, "Text chunk to evaluate:\n");
  const std::uint64_t h = fnv1a64(context);
  if (attempt == 0 && (h >> 20) % 23 == 0) return "The leakage score is probably 3.";
  const auto r = h % 100;
  const int score = r < 60 ? 0 : r < 70 ? 1 : r < 80 ? 2 : r < 90 ? 3 : 4;
  const bool flag = score > 0 || (h >> 8) % 2 == 1;
  json payload{{"reasoning", "Synthetic verdict " + std::to_string(h % 9973) + "."},
               {"contains_post_cutoff_info", flag},
               {"leakage_score", score}};
  return "<JSON>\n" + payload.dump(2) + "\n</JSON>";
}

std::string forecast_reply(std::string_view prompt, int attempt) {
  const std::uint64_t h = fnv1a64(prompt);
  if (attempt == 0 && h % 31 == 0) return "(a) Not sure yet. I need more time.";
  const int percent = 5 + static_cast<int>(h % 91);
  return "(a) Some time remains.\n(b) Status quo.\nDraft Probability: 50%\n(c) ...\n(d) ...\nProbability: " +
         std::to_string(percent) + "%";
}

}  // namespace

MockLanguageModel::MockLanguageModel(Clock clock, std::string id) : clock_(std::move(clock)), id_(std::move(id)) {
  if (!clock_) clock_ = system_clock();
}

Completion MockLanguageModel::complete(const CompletionRequest& request) {
  ++calls_;
  const std::string_view prompt = request.prompt;
  std::string text;
  if (prompt.starts_with("You are an expert in using search engines")) {
    text = query_reply(prompt);
  } else if (prompt.starts_with("You are an expert Data Contamination Auditor.")) {
    text = judge_reply(prompt, request.attempt);
  } else if (prompt.starts_with("You are a professional forecaster")) {
    text = forecast_reply(prompt, request.attempt);
  } else {
    throw Error(ErrorCode::ProviderError, "mock model does not recognize the prompt");
  }
  return Completion{std::move(text), clock_()};
}

std::string synthetic_page(const std::string& url) {
  const std::uint64_t h = fnv1a64(url);
  std::mt19937_64 rng(h);
  auto word = [&] { return kVocabulary[rng() % kVocabulary.size()]; };
  auto sentence = [&] {
    std::string s;
    const int len = 8 + static_cast<int>(rng() % 14);
    for (int i = 0; i < len; ++i) {
      if (i > 0) s += ' ';
      s += word();
    }
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s + ".";
  };
  const int year = 2015 + static_cast<int>(h % 11);
  const int month = 1 + static_cast<int>((h >> 8) % 12);
  const int day = 1 + static_cast<int>((h >> 16) % 28);
  char date[16];
  std::snprintf(date, sizeof date, "%04d-%02d-%02d", year, month, day);
  const bool long_page = (h >> 24) % 10 == 0;
  const int paragraphs = long_page ? 420 : 3 + static_cast<int>(rng() % 30);

  std::string html = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" + sentence() + "</title>";
  html += "<meta property=\"article:published_time\" content=\"" + std::string(date) + "T08:00:00Z\">";
  html += "<script>var tracking = {id: " + std::to_string(h % 1000) + "};</script><style>p{margin:0}</style>";
  html += "</head><body><nav><a href=\"/\">Home</a> <a href=\"/world\">World</a></nav><article><h1>" + sentence() + "</h1>";
  for (int p = 0; p < paragraphs; ++p) {
    html += "<p>";
    const int sentences = 1 + static_cast<int>(rng() % 3);
    for (int s = 0; s < sentences; ++s) html += (s ? " " : "") + sentence();
    html += "</p>\n";
  }
  html += "</article><aside><h2>Related</h2><ul><li>" + sentence() + "</li></ul></aside></body></html>\n";
  return html;
}

HttpResponse MockWebClient::get(const std::string& url, const HttpHeaders&) {
  ++requests_;
  const std::uint64_t h = fnv1a64(url);
  HttpResponse r;
  r.final_url = url;
  if (h % 41 == 0) {
    r.status = 404;
    r.body = "<html><body>Not found</body></html>";
    r.headers["content-type"] = "text/html";
  } else if (h % 53 == 0) {
    r.status = 200;
    r.body = std::string("%PDF-1.4\0\0\x01\x02binary", 20);
    r.headers["content-type"] = "application/pdf";
  } else {
    r.status = 200;
    r.body = synthetic_page(url);
    r.headers["content-type"] = "text/html; charset=utf-8";
  }
  return r;
}

HttpResponse MockWebClient::post(const std::string& url, std::string_view, std::string_view, const HttpHeaders&) {
  ++requests_;
  HttpResponse r;
  r.final_url = url;
  r.status = 405;
  return r;
}

}  // namespace leakaudit
