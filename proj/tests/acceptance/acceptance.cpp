#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "leakaudit/annotation.hpp"
#include "leakaudit/doc_processing.hpp"
#include "leakaudit/leakage_judge.hpp"

using namespace leakaudit;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void criterion(const std::string& name, const std::function<std::string()>& check) {
  std::string detail;
  try {
    detail = check();
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const bool pass = detail.empty();
  if (!pass) ++failures;
  fmt::print("{} {}{}\n", pass ? "PASS" : "FAIL", name, pass ? "" : " (" + detail + ")");
}

std::string expect(bool ok, const std::string& what) { return ok ? "" : what; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string leakage_profile_table() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& c = fixtures::audit_corpus();
  const auto profiles = leakage_profiles(c.records, c.universe);
  const auto& g = profiles.at(Engine::Google);
  const auto& d = profiles.at(Engine::DuckDuckGo);
  const std::vector<std::string> got = {g.urls_post_cutoff.percent(), g.frac_ge1.percent(), g.frac_ge2.percent(),
                                        g.frac_ge3.percent(),         g.frac_eq4.percent(), d.urls_post_cutoff.percent(),
                                        d.frac_ge1.percent(),         d.frac_ge2.percent(), d.frac_ge3.percent(),
                                        d.frac_eq4.percent()};
  const std::vector<std::string> want = {"33.2", "98.5", "94.1", "71.0", "41.0", "34.5", "98.2", "96.1", "81.2", "54.8"};
  if (got != want) return "got " + fmt::format("{}", fmt::join(got, " "));
  if (d.questions_unusable != 4) return "duckduckgo unusable " + std::to_string(d.questions_unusable);
  const double s = seconds_since(t0);
  return expect(s < 1.0, fmt::format("took {:.3f}s", s));
}

std::string per_year_table() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& c = fixtures::audit_corpus();
  const auto rates = per_year_rates(c.records);
  std::string got;
  for (const auto& r : rates) got += fmt::format("{}:{}:{} ", r.year, to_string(r.engine), r.rate.percent());
  const std::string want =
      "2021:google:46.3 2021:duckduckgo:47.1 2022:google:46.5 2022:duckduckgo:48.0 "
      "2023:google:34.5 2023:duckduckgo:31.4 2025:google:26.6 2025:duckduckgo:27.7 ";
  if (got != want) return "got " + got;
  const auto profiles = leakage_profiles(c.records, c.universe);
  if (profiles.at(Engine::Google).urls_post_cutoff.percent() != "33.2" ||
      profiles.at(Engine::DuckDuckGo).urls_post_cutoff.percent() != "34.5") {
    return "totals differ";
  }
  const double s = seconds_since(t0);
  return expect(s < 1.0, fmt::format("took {:.3f}s", s));
}

std::string forecast_math() {
  const auto c = fixtures::eligibility_corpus();
  const auto eligible = eligible_questions(c.questions, c.records);
  const auto conditions = all_conditions();
  fixtures::FunctionProvider half([](const CompletionRequest&) { return std::string("Probability: 50%"); });
  auto run = evaluate_conditions(half, c.questions, eligible, c.records, c.views, conditions);
  for (const auto& s : run.summaries) {
    if (format_fixed(s.mean_brier, 3) != "0.250" || s.n != eligible.size()) {
      return fmt::format("{} mean {} at p=0.5", to_string(s.condition), s.mean_brier);
    }
  }
  fixtures::FunctionProvider perfect([&](const CompletionRequest& req) {
    for (const auto& q : c.questions.questions) {
      if (req.prompt.find(q.title) != std::string::npos) return std::string(q.resolved_yes() ? "Probability: 100%" : "Probability: 0%");
    }
    return std::string();
  });
  run = evaluate_conditions(perfect, c.questions, eligible, c.records, c.views, conditions);
  for (const auto& s : run.summaries) {
    if (s.mean_brier != 0.0 || s.n != eligible.size()) return fmt::format("{} mean {} when perfect", to_string(s.condition), s.mean_brier);
  }
  const std::vector<double> p{0.1, 0.7, 0.4, 0.9, 0.2};
  const std::vector<bool> yes{false, true, false, true, true};
  std::vector<ForecastResult> rs;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ForecastResult r;
    r.question_id = static_cast<std::int64_t>(i);
    r.probability = p[i];
    r.outcome_yes = yes[i];
    r.brier = brier(p[i], yes[i]);
    rs.push_back(r);
  }
  const std::vector<ForecastCondition> one{ForecastCondition::of(ConditionName::NoRetrieval)};
  const auto s = summarize(rs, {}, one).at(0);
  if (format_fixed(s.median_brier, 3) != "0.090" || format_fixed(s.mean_brier, 3) != "0.182") {
    return fmt::format("median {} mean {}", s.median_brier, s.mean_brier);
  }
  return "";
}

std::string eligibility() {
  const auto c = fixtures::eligibility_corpus();
  const auto got = eligible_questions(c.questions, c.records);
  if (got != c.expected) return "ids differ from the expected set";
  return expect(got.size() == 93, "count " + std::to_string(got.size()));
}

std::vector<Chunk> as_chunks(const std::vector<std::vector<double>>& vecs) {
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < vecs.size(); ++i) out.push_back(Chunk{i, "", 1, vecs[i]});
  return out;
}

std::string mmr_oracle() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  int instances = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 10, dim = 1 + rng() % 8, k = 1 + rng() % 10;
    auto vec = [&] {
      std::vector<double> v(dim);
      for (auto& x : v) x = coord(rng);
      return v;
    };
    const auto query = vec();
    std::vector<std::vector<double>> vecs;
    for (std::size_t i = 0; i < n; ++i) vecs.push_back(vec());
    const double lambda = static_cast<double>(rng() % 11) / 10.0;
    const auto chunks = as_chunks(vecs);
    if (mmr_select_positions(query, chunks, lambda, k) != fixtures::mmr_oracle(query, vecs, lambda, k)) {
      return fmt::format("instance {} differs (n={} dim={} lambda={})", t, n, dim, lambda);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> sims;
    for (const auto& v : vecs) sims.push_back(cosine_similarity(v, query));
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sims[a] > sims[b]; });
    order.resize(std::min(n, k));
    if (mmr_select_positions(query, chunks, 1.0, k) != order) return fmt::format("lambda=1 is not top-k at {}", t);
    ++instances;
  }
  return expect(instances >= 100, "too few instances");
}

std::string qwk_oracle() {
  std::mt19937_64 rng(808);
  int pairs = 0;
  for (int t = 0; t < 400 && pairs < 150; ++t) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<int> h(n), j(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = static_cast<int>(rng() % 5);
      j[i] = rng() % 2 ? h[i] : static_cast<int>(rng() % 5);
    }
    const double want = fixtures::qwk_oracle(h, j);
    if (std::isnan(want)) continue;
    const double got = quadratic_weighted_kappa(h, j);
    if (std::abs(got - want) > 1e-12) return fmt::format("pair {}: {} vs {}", t, got, want);
    if (std::set<int>(h.begin(), h.end()).size() > 1 && std::abs(quadratic_weighted_kappa(h, h) - 1.0) > 1e-12) {
      return "identical vectors do not give 1.0";
    }
    ++pairs;
  }
  return expect(pairs >= 100, "too few pairs");
}

std::string agreement_fixtures() {
  const double acc = exact_accuracy_merged01(std::vector<int>{0, 1, 2, 3, 4}, std::vector<int>{1, 0, 2, 4, 4});
  if (std::abs(acc - 0.8) > 1e-12) return fmt::format("merged accuracy {}", acc);
  const auto f = f1_for_class(std::vector<int>{4, 4, 0}, std::vector<int>{4, 0, 4}, 4);
  if (std::abs(f.precision - 0.5) > 1e-12 || std::abs(f.recall - 0.5) > 1e-12 || std::abs(f.f1 - 0.5) > 1e-12) {
    return "F1 fixture";
  }
  const auto fx = fixtures::agreement_fixture_134();
  const auto r = agreement_report(fx.human, fx.judge);
  const auto pct = format_fixed(100.0 * r.exact_accuracy_merged01, 1);
  if (pct != "76.1") return "134-doc accuracy " + pct;
  if (!r.qwk || format_fixed(*r.qwk, 2) != "0.85") return "134-doc kappa";
  return expect(format_fixed(r.f1_per_class[4].f1, 2) == "0.82", "134-doc F1(4)");
}

std::string judge_parsing() {
  const auto dir = fixtures::temp_dir("acceptance-judge");
  auto config = fixtures::mock_config(dir, fixtures::sample_questions());
  Services services = make_services(config);
  for (const auto& stage : {"ingest", "gen-queries", "search", "fetch", "process"}) run_stage(stage, config, services);
  const auto& replies = fixtures::adversarial_judge_replies();
  if (replies.size() != 20) return "fixture size";
  for (const auto& r : replies) {
    try {
      parse_judgment(r.reply);
      return "accepted: " + r.name;
    } catch (const Error& e) {
      if (e.code() != r.expected) return fmt::format("{}: {} instead of {}", r.name, to_string(e.code()), to_string(r.expected));
    }
  }
  std::atomic<std::size_t> calls{0};
  services.judge_provider = std::make_shared<fixtures::FunctionProvider>(
      [&](const CompletionRequest&) { return replies[calls++ % replies.size()].reply; });
  const auto s = run_stage("judge", config, services);
  const auto persisted = read_file(config.paths.judgments);
  if (calls < replies.size()) return "not every reply was served";
  return expect(persisted.empty() && s.counts.at("judgments") == 0, "invalid judgments persisted");
}

std::string determinism() {
  const auto a = fixtures::temp_dir("acceptance-det-a");
  const auto b = fixtures::temp_dir("acceptance-det-b");
  for (const auto& s : fixtures::run_all_stages(fixtures::mock_config(a, fixtures::sample_questions()))) {
    if (!s.ok()) return "stage " + s.stage + " failed";
  }
  fixtures::run_all_stages(fixtures::mock_config(b, fixtures::sample_questions()));
  const auto sa = fixtures::snapshot(a), sb = fixtures::snapshot(b);
  if (sa.size() != sb.size()) return fmt::format("{} vs {} files", sa.size(), sb.size());
  for (const auto& [path, bytes] : sa) {
    auto it = sb.find(path);
    if (it == sb.end() || it->second != bytes) return "differs: " + path;
  }
  return "";
}

std::string doc_thresholds() {
  HashingEmbedder embedder;
  const SelectionParams params;
  const auto small = process_document(1, "https://t.example/a", fixtures::text_with_tokens(5000), "q", params, embedder);
  if (small.mode != ViewMode::Full || small.token_count != 5000) return "5000 tokens not passed through";
  const auto big = process_document(1, "https://t.example/b", fixtures::text_with_tokens(10000), "q", params, embedder);
  if (big.mode != ViewMode::MmrSelected || !big.selected_chunk_indices) return "10000 tokens not selected";
  if (big.selected_chunk_indices->size() > 30 || big.token_count > 7680) {
    return fmt::format("10000 tokens gave {} chunks, {} tokens", big.selected_chunk_indices->size(), big.token_count);
  }
  const auto edge = process_document(1, "https://t.example/c", fixtures::text_with_tokens(7680), "q", params, embedder);
  return expect(edge.mode == ViewMode::MmrSelected && edge.token_count <= 7680, "7680 tokens not selected");
}

std::string annotation_round_trip() {
  AnnotationStore store(":memory:");
  std::vector<AnnotationDoc> docs;
  std::vector<int> human, judge;
  for (int i = 0; i < 10; ++i) {
    const auto q = fixtures::make_question(600 + i, "2023-07-01T00:00:00Z");
    DocumentView v;
    v.question_id = q.id;
    v.url = "https://rt.example/" + std::to_string(i);
    v.text = "Document " + std::to_string(i);
    docs.push_back(make_annotation_doc(q, v, (i * 3) % 5));
    judge.push_back((i * 3) % 5);
    human.push_back(i % 4 == 0 ? (judge.back() + 1) % 5 : judge.back());
  }
  const std::vector<std::string> people{"ann-a", "ann-b"};
  store.add_tasks(assign_batches(docs, people));
  AnnotationServer server(store);
  const int port = server.bind({"127.0.0.1", 0});
  std::thread t([&] { server.serve(); });
  server.wait_until_ready();
  std::string err;
  {
    httplib::Client a("127.0.0.1", port), b("127.0.0.1", port);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      auto& cli = i % 2 == 0 ? a : b;
      const json body{{"doc_id", docs[i].doc_id}, {"score", human[i]}, {"rationale", "r"}};
      auto res = cli.Post("/labels", {{"X-Annotator-Id", people[i % 2]}}, body.dump(), "application/json");
      if (!res || res->status != 200) {
        err = "label " + std::to_string(i) + " rejected";
        break;
      }
    }
    if (err.empty()) {
      auto res = a.Get("/agreement-report");
      if (!res || res->status != 200) {
        err = "agreement-report unavailable";
      } else {
        auto got = json::parse(res->body);
        got.erase("skipped_unlabeled");
        got.erase("skipped_no_judge");
        if (got != to_json(agreement_report(human, judge))) err = "report differs from the metrics output";
      }
    }
  }
  server.stop();
  t.join();
  return err;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  criterion("leakage-profile-table", leakage_profile_table);
  criterion("per-year-table", per_year_table);
  criterion("forecast-scoring", forecast_math);
  criterion("eligibility-93", eligibility);
  criterion("mmr-oracle", mmr_oracle);
  criterion("qwk-oracle", qwk_oracle);
  criterion("agreement-fixtures", agreement_fixtures);
  criterion("judge-parse-robustness", judge_parsing);
  criterion("pipeline-determinism", determinism);
  criterion("doc-thresholds", doc_thresholds);
  criterion("annotation-round-trip", annotation_round_trip);
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
