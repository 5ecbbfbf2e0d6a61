#include <doctest.h>

#include <random>
#include <set>

#include "fixtures.hpp"
#include "leakaudit/metrics_aggregation.hpp"

using namespace leakaudit;

namespace {

std::vector<UrlJudgmentRecord> for_engine(Engine e) {
  std::vector<UrlJudgmentRecord> out;
  for (const auto& r : fixtures::audit_corpus().records) {
    if (r.engine == e) out.push_back(r);
  }
  return out;
}

void check_profile(const fixtures::EngineCounts& c, const std::vector<std::string>& expected) {
  const auto& corpus = fixtures::audit_corpus();
  const auto p = leakage_profile(corpus.records, c.engine, corpus.universe);
  CHECK(p.questions_total == c.questions_usable);
  CHECK(p.questions_unusable == corpus.universe.size() - c.questions_usable);
  std::size_t flagged = 0, total = 0;
  for (const auto& [y, f, t] : c.years) {
    flagged += f;
    total += t;
  }
  CHECK(p.urls_post_cutoff == Rate{flagged, total});
  CHECK(p.frac_ge1 == Rate{c.severity_ge[0], c.questions_usable});
  CHECK(p.frac_eq4 == Rate{c.severity_ge[3], c.questions_usable});
  CHECK(p.urls_post_cutoff.percent() == expected[0]);
  CHECK(p.frac_ge1.percent() == expected[1]);
  CHECK(p.frac_ge2.percent() == expected[2]);
  CHECK(p.frac_ge3.percent() == expected[3]);
  CHECK(p.frac_eq4.percent() == expected[4]);
}

}  // namespace

TEST_CASE("percent formatting rounds half up exactly") {
  CHECK(format_percent(12903, 38879) == "33.2");
  CHECK(format_percent(1, 8) == "12.5");
  CHECK(format_percent(1, 16) == "6.3");
  CHECK(format_percent(1, 3) == "33.3");
  CHECK(format_percent(2, 3) == "66.7");
  CHECK(format_percent(0, 5) == "0.0");
  CHECK(format_percent(5, 5) == "100.0");
  CHECK(format_percent(1, 0) == "n/a");
  CHECK(format_fixed(0.25, 3) == "0.250");
  CHECK(format_fixed(0.0005, 3) == "0.001");
}

TEST_CASE("leakage profiles reproduce the per-engine table") {
  check_profile(fixtures::google_counts(), {"33.2", "98.5", "94.1", "71.0", "41.0"});
  check_profile(fixtures::duckduckgo_counts(), {"34.5", "98.2", "96.1", "81.2", "54.8"});
  const auto& corpus = fixtures::audit_corpus();
  const auto all = leakage_profiles(corpus.records, corpus.universe);
  CHECK(all.size() == 2);
  CHECK(all.at(Engine::DuckDuckGo).questions_unusable == 4);
}

TEST_CASE("per-year rates reproduce the per-year table") {
  const auto rates = per_year_rates(fixtures::audit_corpus().records);
  const std::map<std::pair<int, Engine>, std::string> expected = {
      {{2021, Engine::Google}, "46.3"},     {{2022, Engine::Google}, "46.5"},
      {{2023, Engine::Google}, "34.5"},     {{2025, Engine::Google}, "26.6"},
      {{2021, Engine::DuckDuckGo}, "47.1"}, {{2022, Engine::DuckDuckGo}, "48.0"},
      {{2023, Engine::DuckDuckGo}, "31.4"}, {{2025, Engine::DuckDuckGo}, "27.7"}};
  REQUIRE(rates.size() == expected.size());
  for (const auto& r : rates) {
    CHECK(r.year != 2024);
    CHECK(r.rate.percent() == expected.at({r.year, r.engine}));
  }
  for (std::size_t i = 1; i < rates.size(); ++i) {
    CHECK(std::pair{rates[i - 1].year, static_cast<int>(rates[i - 1].engine)} <
          std::pair{rates[i].year, static_cast<int>(rates[i].engine)});
  }
  // Sums of the per-year rates equal the overall rates.
  for (Engine e : {Engine::Google, Engine::DuckDuckGo}) {
    std::size_t f = 0, t = 0;
    for (const auto& r : rates) {
      if (r.engine == e) {
        f += r.rate.numerator;
        t += r.rate.denominator;
      }
    }
    CHECK(leakage_profile(for_engine(e), e).urls_post_cutoff == Rate{f, t});
  }
}

TEST_CASE("severity is the maximum score") {
  std::vector<UrlJudgmentRecord> rs = {{1, "a", Engine::Google, 0, false, 2025},
                                       {1, "b", Engine::Google, 3, true, 2025},
                                       {1, "c", Engine::Google, 1, true, 2025}};
  CHECK(question_severity(rs) == 3);
  CHECK_THROWS_AS(question_severity(std::span<const UrlJudgmentRecord>{}), Error);
  auto p = leakage_profile(rs, Engine::Google);
  CHECK(p.questions_total == 1);
  CHECK(p.frac_ge3 == Rate{1, 1});
  CHECK(p.frac_eq4 == Rate{0, 1});
}

TEST_CASE("record loading enforces the flag rule") {
  UrlJudgmentRecord r{7, "https://x.example/", Engine::DuckDuckGo, 2, true, 2022};
  CHECK(url_judgment_record_from_json(to_json(r)) == r);
  auto bad = to_json(r);
  bad["contains_post_cutoff_info"] = false;
  CHECK_THROWS_AS(url_judgment_record_from_json(bad), Error);
  bad = to_json(r);
  bad["leakage_score"] = 5;
  CHECK_THROWS_AS(url_judgment_record_from_json(bad), Error);
}

TEST_CASE("confusion matrix and validation") {
  const std::vector<int> h{0, 1, 2, 3, 4, 4};
  const std::vector<int> j{0, 2, 2, 4, 4, 3};
  const auto m = confusion_matrix(h, j);
  std::size_t total = 0;
  for (int a = 0; a < kNumScores; ++a) {
    std::size_t row = 0;
    for (int b = 0; b < kNumScores; ++b) row += m[a][b];
    CHECK(row == static_cast<std::size_t>(std::count(h.begin(), h.end(), a)));
    total += row;
  }
  for (int b = 0; b < kNumScores; ++b) {
    std::size_t col = 0;
    for (int a = 0; a < kNumScores; ++a) col += m[a][b];
    CHECK(col == static_cast<std::size_t>(std::count(j.begin(), j.end(), b)));
  }
  CHECK(total == h.size());
  CHECK(m[1][2] == 1);
  CHECK(m[4][3] == 1);
  try {
    confusion_matrix(std::vector<int>{1, 2}, std::vector<int>{1});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  try {
    confusion_matrix(std::vector<int>{1, 5}, std::vector<int>{1, 1});
    FAIL("expected LabelOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LabelOutOfRange);
  }
}

TEST_CASE("merged accuracy") {
  CHECK(exact_accuracy_merged01(std::vector<int>{0, 1, 2, 3, 4}, std::vector<int>{1, 0, 2, 4, 4}) ==
        doctest::Approx(0.8));
  CHECK(exact_accuracy_merged01(std::vector<int>{1, 1}, std::vector<int>{0, 0}) == 1.0);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<int> h(n), j(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = static_cast<int>(rng() % 5);
      j[i] = static_cast<int>(rng() % 5);
    }
    CHECK(exact_accuracy_merged01(h, j) == fixtures::merged_accuracy_oracle(h, j));
  }
}

TEST_CASE("class F1") {
  const auto r = f1_for_class(std::vector<int>{4, 4, 0}, std::vector<int>{4, 0, 4}, 4);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.f1 == doctest::Approx(0.5));
  CHECK_FALSE(r.degenerate);
  const auto none = f1_for_class(std::vector<int>{0, 1}, std::vector<int>{1, 0}, 4);
  CHECK(none.degenerate);
  CHECK(none.f1 == 0.0);
  const auto missed = f1_for_class(std::vector<int>{4}, std::vector<int>{3}, 4);
  CHECK_FALSE(missed.degenerate);
  CHECK(missed.f1 == 0.0);
}

TEST_CASE("quadratic weighted kappa agrees with the oracle") {
  CHECK(quadratic_weighted_kappa(std::vector<int>{0, 1, 2, 3, 4}, std::vector<int>{0, 1, 2, 3, 4}) == 1.0);
  std::mt19937_64 rng(99);
  int checked = 0, degenerate = 0;
  for (int t = 0; t < 400 && checked < 200; ++t) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<int> h(n), j(n);
    const int spread = 1 + static_cast<int>(rng() % 5);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = static_cast<int>(rng() % spread);
      j[i] = (rng() % 3 == 0) ? h[i] : static_cast<int>(rng() % spread);
    }
    const double oracle = fixtures::qwk_oracle(h, j);
    if (std::isnan(oracle)) {
      ++degenerate;
      try {
        quadratic_weighted_kappa(h, j);
        FAIL("expected DegenerateMarginals");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateMarginals);
      }
      continue;
    }
    ++checked;
    const double k = quadratic_weighted_kappa(h, j);
    CHECK(std::abs(k - oracle) <= 1e-12);
    CHECK(std::abs(k - quadratic_weighted_kappa(j, h)) <= 1e-12);
    if (std::set<int>(h.begin(), h.end()).size() > 1) CHECK(quadratic_weighted_kappa(h, h) == doctest::Approx(1.0));
  }
  CHECK(checked >= 100);
  CHECK(degenerate > 0);
  CHECK_THROWS_AS(quadratic_weighted_kappa(std::vector<int>{2}, std::vector<int>{2}), Error);
}

TEST_CASE("134-document agreement fixture") {
  const auto fx = fixtures::agreement_fixture_134();
  REQUIRE(fx.human.size() == 134);
  const auto report = agreement_report(fx.human, fx.judge);
  CHECK(report.n == 134);
  CHECK(format_percent(102, 134) == "76.1");
  CHECK(report.exact_accuracy_merged01 == doctest::Approx(102.0 / 134.0));
  REQUIRE(report.qwk.has_value());
  CHECK(format_fixed(*report.qwk, 2) == "0.85");
  CHECK(format_fixed(report.f1_per_class[4].f1, 2) == "0.82");
  const auto j = to_json(report);
  CHECK(j.at("n") == 134);
}

TEST_CASE("brier, mean and median") {
  CHECK(brier(0.5, true) == 0.25);
  CHECK(brier(0.5, false) == 0.25);
  CHECK(brier(1.0, true) == 0.0);
  CHECK(brier(0.0, true) == 1.0);
  CHECK_THROWS_AS(brier(1.1, true), Error);
  CHECK_THROWS_AS(brier(-0.1, true), Error);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double p = u(rng);
    CHECK(brier(p, true) >= 0.0);
    CHECK(brier(p, true) <= 1.0);
  }
  CHECK(median(std::vector<double>{3, 1, 2}) == 2.0);
  CHECK(median(std::vector<double>{4, 1, 2, 3}) == 2.5);
  CHECK(mean(std::vector<double>{1, 2, 3, 4}) == 2.5);
  CHECK_THROWS_AS(median(std::vector<double>{}), Error);
}
