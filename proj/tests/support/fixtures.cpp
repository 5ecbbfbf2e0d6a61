#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "leakaudit/util.hpp"

namespace fs = std::filesystem;

namespace fixtures {

Question make_question(std::int64_t id, const std::string& open_time, bool yes, bool binary) {
  Question q;
  q.id = id;
  q.title = "Will event " + std::to_string(id) + " happen?";
  q.background = "Background for question " + std::to_string(id) + ".";
  q.resolution_criteria = "Resolves Yes if event " + std::to_string(id) + " happens before the close date.";
  q.open_time = parse_timestamp(open_time);
  q.close_time = q.open_time + std::chrono::days(60);
  q.resolve_time = q.close_time + std::chrono::days(1);
  q.qtype = binary ? QuestionType::Binary : QuestionType::Other;
  q.resolution = binary ? (yes ? "yes" : "no") : "42";
  return q;
}

EngineCounts google_counts() {
  return {Engine::Google,
          393,
          {387, 370, 279, 161},
          {{2021, 1831, 3955}, {2022, 3115, 6703}, {2023, 2008, 5821}, {2025, 5949, 22400}}};
}

EngineCounts duckduckgo_counts() {
  return {Engine::DuckDuckGo,
          389,
          {382, 374, 316, 213},
          {{2021, 1932, 4100}, {2022, 3170, 6605}, {2023, 1822, 5811}, {2025, 4974, 17938}}};
}

namespace {

// Questions per cutoff year; 393 in total.
const std::vector<std::pair<int, std::size_t>> kYearQuestions = {{2021, 40}, {2022, 68}, {2023, 59}, {2025, 226}};

std::vector<int> severities(const EngineCounts& c, std::size_t n) {
  std::vector<int> out;
  const std::array<std::size_t, 5> at_least = {n, c.severity_ge[0], c.severity_ge[1], c.severity_ge[2], c.severity_ge[3]};
  for (int s = 0; s < 5; ++s) {
    const std::size_t count = at_least[s] - (s < 4 ? at_least[s + 1] : 0);
    out.insert(out.end(), count, s);
  }
  std::mt19937_64 rng(static_cast<std::uint64_t>(c.engine) + 7);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

void add_engine(AuditCorpus& corpus, const EngineCounts& c, const std::map<int, std::vector<std::int64_t>>& by_year) {
  // The unusable questions of an engine are the last ones of its final year.
  const std::size_t unusable = corpus.universe.size() - c.questions_usable;
  const auto sev = severities(c, c.questions_usable);
  std::size_t next_sev = 0;
  for (const auto& [year, flagged, total] : c.years) {
    auto ids = by_year.at(year);
    if (year == std::get<0>(c.years.back())) ids.resize(ids.size() - unusable);
    const std::size_t nq = ids.size();
    for (std::size_t i = 0; i < nq; ++i) {
      const std::size_t urls = total / nq + (i < total % nq ? 1 : 0);
      const std::size_t flags = flagged / nq + (i < flagged % nq ? 1 : 0);
      const int s = sev.at(next_sev++);
      for (std::size_t k = 0; k < urls; ++k) {
        UrlJudgmentRecord r;
        r.question_id = ids[i];
        r.url = "https://fixture.example/" + std::string(to_string(c.engine)) + "/" + std::to_string(ids[i]) + "/" +
                std::to_string(k);
        r.engine = c.engine;
        r.contains_post_cutoff_info = k < flags;
        r.leakage_score = k == 0 ? s : 0;
        r.cutoff_year = year;
        corpus.records.push_back(std::move(r));
      }
    }
  }
}

}  // namespace

const AuditCorpus& audit_corpus() {
  static const AuditCorpus corpus = [] {
    AuditCorpus c;
    std::map<int, std::vector<std::int64_t>> by_year;
    std::int64_t id = 10000;
    for (const auto& [year, n] : kYearQuestions) {
      for (std::size_t i = 0; i < n; ++i, ++id) {
        const auto q = make_question(id, std::to_string(year) + "-03-01T12:00:00Z", id % 2 == 0);
        c.questions.questions.push_back(q);
        c.universe.push_back(id);
        by_year[year].push_back(id);
      }
    }
    add_engine(c, google_counts(), by_year);
    add_engine(c, duckduckgo_counts(), by_year);
    return c;
  }();
  return corpus;
}

EligibilityCorpus eligibility_corpus() {
  EligibilityCorpus c;
  std::int64_t id = 50000;
  auto add = [&](const std::string& open, bool binary, std::vector<int> scores, bool expected) {
    const auto q = make_question(id, open, id % 3 == 0, binary);
    c.questions.questions.push_back(q);
    for (std::size_t k = 0; k < scores.size(); ++k) {
      const std::string url = "https://elig.example/" + std::to_string(id) + "/" + std::to_string(k);
      c.records.push_back(UrlJudgmentRecord{id, url, Engine::Google, scores[k], scores[k] > 0, cutoff_year(q)});
      DocumentView v;
      v.question_id = id;
      v.url = url;
      v.text = "Document " + std::to_string(k) + " about event " + std::to_string(id) + ".";
      v.token_count = count_tokens(v.text);
      c.views.emplace(std::pair{id, url}, std::move(v));
    }
    if (expected) c.expected.push_back(id);
    ++id;
  };
  // 92 here plus the boundary question below.
  for (int i = 0; i < 92; ++i) {
    const std::string day = std::to_string(10 + i % 18);
    const std::string month = std::to_string(1 + i % 9);
    const std::string open = "2025-0" + month + "-" + day + "T08:00:00Z";
    std::vector<int> scores{0, 4};
    if (i % 4 == 1) scores = {4};
    if (i % 4 == 2) scores = {0, 1, 2, 3, 4};
    if (i % 4 == 3) scores = {3, 4, 4, 0};
    add(open, true, scores, true);
    // Decoys interleaved with the eligible questions.
    if (i % 3 == 0) add(open, true, {0, 1, 2, 3}, false);   // no score-4 document
    if (i % 5 == 0) add(open, false, {4, 4}, false);        // not binary
    if (i % 7 == 0) add("2024-06-01T00:00:00Z", true, {4}, false);  // opened in 2024
    if (i % 11 == 0) add(open, true, {}, false);            // nothing judged
  }
  add("2024-12-31T23:59:59Z", true, {4}, false);  // one second before the 2025 boundary
  add("2025-01-01T00:00:00Z", true, {0, 4}, true);  // first instant of 2025
  add("2026-01-01T00:00:00Z", true, {4}, false);
  return c;
}

AgreementFixture agreement_fixture_134() {
  // Human label histogram and the disagreement cells enumerated below.
  const std::array<int, 5> human_hist = {40, 14, 25, 25, 30};
  const std::array<std::pair<int, int>, 7> cells = {{{4, 3}, {3, 4}, {3, 2}, {2, 3}, {2, 0}, {0, 2}, {1, 2}}};
  const int mismatches = 32;
  std::array<int, 7> x{};
  auto evaluate = [&]() -> std::optional<AgreementFixture> {
    std::array<int, 5> diagonal = human_hist;
    for (std::size_t c = 0; c < cells.size(); ++c) diagonal[cells[c].first] -= x[c];
    if (*std::min_element(diagonal.begin(), diagonal.end()) < 0) return std::nullopt;
    AgreementFixture f;
    for (int s = 0; s < 5; ++s) {
      f.human.insert(f.human.end(), diagonal[s], s);
      f.judge.insert(f.judge.end(), diagonal[s], s);
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      f.human.insert(f.human.end(), x[c], cells[c].first);
      f.judge.insert(f.judge.end(), x[c], cells[c].second);
    }
    if (std::lround(merged_accuracy_oracle(f.human, f.judge) * f.human.size()) != 102) return std::nullopt;
    if (std::lround(qwk_oracle(f.human, f.judge) * 100) != 85) return std::nullopt;
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < f.human.size(); ++i) {
      tp += f.human[i] == 4 && f.judge[i] == 4;
      fp += f.human[i] != 4 && f.judge[i] == 4;
      fn += f.human[i] == 4 && f.judge[i] != 4;
    }
    if (std::lround(200.0 * tp / (2 * tp + fp + fn)) != 82) return std::nullopt;
    return f;
  };
  // Odometer over x[0..6] in [0, 10] with the given sum.
  std::function<std::optional<AgreementFixture>(std::size_t, int)> search = [&](std::size_t pos,
                                                                                int left) -> std::optional<AgreementFixture> {
    if (pos + 1 == x.size()) {
      if (left > 10) return std::nullopt;
      x[pos] = left;
      return evaluate();
    }
    for (int v = 0; v <= std::min(left, 10); ++v) {
      x[pos] = v;
      if (auto f = search(pos + 1, left - v)) return f;
    }
    return std::nullopt;
  };
  auto found = search(0, mismatches);
  if (!found) throw std::runtime_error("no agreement fixture found");
  // Interleave so the fixture does not depend on item order.
  std::vector<std::size_t> order(found->human.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(134);
  std::shuffle(order.begin(), order.end(), rng);
  AgreementFixture shuffled;
  for (auto i : order) {
    shuffled.human.push_back(found->human[i]);
    shuffled.judge.push_back(found->judge[i]);
  }
  return shuffled;
}

namespace {

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

}  // namespace

std::vector<std::size_t> mmr_oracle(const std::vector<double>& query, const std::vector<std::vector<double>>& chunks,
                                    double lambda, std::size_t k) {
  std::vector<std::size_t> picked;
  std::vector<bool> used(chunks.size(), false);
  while (picked.size() < std::min(k, chunks.size())) {
    std::size_t best = chunks.size();
    double best_score = 0;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      if (used[c]) continue;
      double score = oracle_cosine(chunks[c], query);
      if (!picked.empty()) {
        double redundancy = -1e300;
        for (auto s : picked) redundancy = std::max(redundancy, oracle_cosine(chunks[c], chunks[s]));
        score = lambda * score - (1 - lambda) * redundancy;
      }
      if (best == chunks.size() || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    used[best] = true;
    picked.push_back(best);
  }
  return picked;
}

double qwk_oracle(const std::vector<int>& human, const std::vector<int>& judge) {
  const std::size_t n = human.size();
  double observed[5][5] = {};
  double hist_h[5] = {}, hist_j[5] = {};
  for (std::size_t i = 0; i < n; ++i) {
    observed[human[i]][judge[i]] += 1;
    hist_h[human[i]] += 1;
    hist_j[judge[i]] += 1;
  }
  double num = 0, den = 0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double w = (i - j) * (i - j) / 16.0;
      const double expected = hist_h[i] * hist_j[j] / static_cast<double>(n);
      num += w * observed[i][j];
      den += w * expected;
    }
  }
  return 1.0 - num / den;
}

double merged_accuracy_oracle(const std::vector<int>& human, const std::vector<int>& judge) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < human.size(); ++i) {
    const int h = human[i] == 1 ? 0 : human[i];
    const int j = judge[i] == 1 ? 0 : judge[i];
    same += h == j;
  }
  return static_cast<double>(same) / static_cast<double>(human.size());
}

const std::vector<AdversarialReply>& adversarial_judge_replies() {
  static const std::vector<AdversarialReply> replies = {
      {"no markers", R"({"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4})",
       ErrorCode::MissingDelimiters},
      {"open marker only", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4})",
       ErrorCode::MissingDelimiters},
      {"markers reversed", R"(</JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4}<JSON>)",
       ErrorCode::MissingDelimiters},
      {"lowercase markers", R"(<json>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4}</json>)",
       ErrorCode::MissingDelimiters},
      {"markdown fence only",
       "```json\n{\"reasoning\": \"r\", \"contains_post_cutoff_info\": true, \"leakage_score\": 4}\n```",
       ErrorCode::MissingDelimiters},
      {"empty payload", "<JSON></JSON>", ErrorCode::MalformedPayload},
      {"truncated payload", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leak</JSON>)",
       ErrorCode::MalformedPayload},
      {"trailing comma", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4,}</JSON>)",
       ErrorCode::MalformedPayload},
      {"single quotes", R"(<JSON>{'reasoning': 'r', 'contains_post_cutoff_info': true, 'leakage_score': 4}</JSON>)",
       ErrorCode::MalformedPayload},
      {"array payload", R"(<JSON>[{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4}]</JSON>)",
       ErrorCode::MalformedPayload},
      {"nested score object",
       R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": {"value": 4}}</JSON>)",
       ErrorCode::MalformedPayload},
      {"missing score", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true}</JSON>)", ErrorCode::MissingKey},
      {"missing reasoning", R"(<JSON>{"contains_post_cutoff_info": false, "leakage_score": 0}</JSON>)",
       ErrorCode::MissingKey},
      {"nested judgment",
       R"(<JSON>{"judgment": {"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 4}}</JSON>)",
       ErrorCode::MissingKey},
      {"score as string", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": "4"}</JSON>)",
       ErrorCode::MalformedPayload},
      {"flag as string", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": "true", "leakage_score": 2}</JSON>)",
       ErrorCode::MalformedPayload},
      {"score 5", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 5}</JSON>)",
       ErrorCode::ScoreOutOfRange},
      {"negative score", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": false, "leakage_score": -1}</JSON>)",
       ErrorCode::ScoreOutOfRange},
      {"fractional score", R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 2.5}</JSON>)",
       ErrorCode::ScoreOutOfRange},
      {"flag false with score 3",
       R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": false, "leakage_score": 3}</JSON>)",
       ErrorCode::InconsistentFlag},
  };
  return replies;
}

std::string text_with_tokens(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 16> kWords = {"alpha", "treaty", "vote",   "summit", "market", "delta",
                                                              "rate",  "growth", "signal", "review", "policy", "bank",
                                                              "troop", "budget", "report", "talks"};
  std::mt19937_64 rng(seed);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += (i % 40 == 0) ? "\n" : " ";
    out += kWords[rng() % kWords.size()];
    out += std::to_string(i % 997);
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("leakaudit-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path sample_questions() { return fs::path(LEAKAUDIT_TEST_DATA_DIR) / "questions_sample.jsonl"; }

PipelineConfig mock_config(const fs::path& workdir, const fs::path& questions) {
  PipelineConfig c;
  set_workdir(c, workdir);
  c.questions_input = questions;
  c.fixed_time = "2026-01-01T00:00:00Z";
  c.workers = 3;
  return c;
}

std::vector<StageSummary> run_all_stages(const PipelineConfig& config) {
  Services services = make_services(config);
  std::vector<StageSummary> out;
  for (const auto& stage : kStageNames) out.push_back(run_stage(stage, config, services));
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& root, const std::vector<std::string>& skip_dirs) {
  std::map<std::string, std::string> files;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    const auto rel = fs::relative(it->path(), root);
    if (it.depth() == 0 && it->is_directory() &&
        std::find(skip_dirs.begin(), skip_dirs.end(), rel.generic_string()) != skip_dirs.end()) {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file()) files[rel.generic_string()] = read_file(it->path());
  }
  return files;
}

}  // namespace fixtures
