#include <doctest.h>

#include <numeric>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "leakaudit/doc_processing.hpp"
#include "leakaudit/provider.hpp"

using namespace leakaudit;

namespace {

std::vector<Chunk> chunks_from(const std::vector<std::vector<double>>& vecs) {
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < vecs.size(); ++i) out.push_back(Chunk{i, "c" + std::to_string(i), 1, vecs[i]});
  return out;
}

std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const std::string alphabet = "abc XYZ 09,.!\n\t  \xc3\xa9\xe2\x82\xac-";
  std::string s;
  const std::size_t len = rng() % (max_len + 1);
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
  return s;
}

}  // namespace

TEST_CASE("selection parameters") {
  SelectionParams p;
  CHECK_NOTHROW(p.validate());
  p.passthrough_threshold = 7000;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SelectionParams{};
  p.lambda = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("token counting") {
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens("hello world") == 2);
  CHECK(count_tokens("a, b.") == 4);
  std::string repeated;
  for (int i = 0; i < 300; ++i) repeated += "token ";
  CHECK(count_tokens(repeated) >= 256);
  CHECK(count_tokens(fixtures::text_with_tokens(1234)) == 1234);
}

TEST_CASE("token counts are monotone under concatenation") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_text(rng, 60);
    const auto b = random_text(rng, 60);
    const auto ab = count_tokens(a + b);
    CHECK(ab >= std::max(count_tokens(a), count_tokens(b)));
  }
}

TEST_CASE("token spans tile the input") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_text(rng, 80);
    const auto spans = default_tokenizer().tokenize(s);
    std::size_t pos = 0;
    for (const auto& span : spans) {
      CHECK(span.begin == pos);
      CHECK(span.end > span.begin);
      pos = span.end;
    }
    if (!spans.empty()) CHECK(pos == s.size());
  }
}

TEST_CASE("chunking arithmetic") {
  const auto c = chunk(fixtures::text_with_tokens(600), 256);
  REQUIRE(c.size() == 3);
  CHECK(c[0].token_count == 256);
  CHECK(c[1].token_count == 256);
  CHECK(c[2].token_count == 88);
  CHECK(chunk(fixtures::text_with_tokens(100), 256).size() == 1);
  CHECK(chunk("", 256).empty());
}

TEST_CASE("chunks reconstruct the input") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_text(rng, 400);
    const int size = 1 + static_cast<int>(rng() % 20);
    const auto parts = chunk(s, size);
    std::string joined;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      joined += parts[k].text;
      CHECK(parts[k].index == k);
      if (k + 1 < parts.size()) CHECK(parts[k].token_count == static_cast<std::size_t>(size));
      CHECK(count_tokens(parts[k].text) == parts[k].token_count);
    }
    CHECK(joined == s);
  }
}

TEST_CASE("cosine similarity") {
  const std::vector<double> v{0.3, -1.2, 2.0};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == doctest::Approx(0.0));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{-1, 0}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1}), Error);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), Error);
}

TEST_CASE("mmr prefers diversity over a near duplicate") {
  const std::vector<double> query{1.0, 0.0};
  const std::vector<std::vector<double>> vecs = {{1.0, 0.05}, {0.99, 0.06}, {0.6, 0.8}};
  const auto chunks = chunks_from(vecs);
  const auto picked = mmr_select_positions(query, chunks, 0.3, 2);
  CHECK(picked == std::vector<std::size_t>{0, 2});
  CHECK(picked == fixtures::mmr_oracle(query, vecs, 0.3, 2));
  // With more weight on relevance the near duplicate wins.
  CHECK(mmr_select_positions(query, chunks, 0.5, 2) == std::vector<std::size_t>{0, 1});
  // k beyond the pool returns every chunk in greedy order.
  const auto all = mmr_select_positions(query, chunks, 0.5, 10);
  CHECK(all.size() == 3);
  CHECK(all == fixtures::mmr_oracle(query, vecs, 0.5, 10));
  CHECK_THROWS_AS(mmr_select_positions(query, chunks, 0.5, 0), Error);
  CHECK_THROWS_AS(mmr_select_positions(query, chunks, -0.1, 1), Error);
}

TEST_CASE("mmr ties go to the lowest index") {
  const std::vector<double> query{1.0, 0.0};
  const auto chunks = chunks_from({{0.0, 1.0}, {1.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}});
  const auto picked = mmr_select_positions(query, chunks, 1.0, 3);
  CHECK(picked == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("mmr matches the brute-force oracle on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const std::size_t dim = 1 + rng() % 8;
    auto vec = [&] {
      std::vector<double> v(dim);
      for (auto& x : v) x = coord(rng);
      return v;
    };
    const auto query = vec();
    std::vector<std::vector<double>> vecs;
    for (std::size_t i = 0; i < n; ++i) vecs.push_back(vec());
    const double lambda = (trial % 5 == 0) ? 1.0 : static_cast<double>(rng() % 101) / 100.0;
    const std::size_t k = 1 + rng() % 10;
    const auto chunks = chunks_from(vecs);
    const auto got = mmr_select_positions(query, chunks, lambda, k);
    CHECK(got == fixtures::mmr_oracle(query, vecs, lambda, k));
    CHECK(got.size() == std::min(k, n));
    CHECK(std::set<std::size_t>(got.begin(), got.end()).size() == got.size());
  }
}

TEST_CASE("lambda one is a top-k similarity sort") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const std::size_t dim = 1 + rng() % 8;
    std::vector<double> query(dim);
    for (auto& x : query) x = coord(rng);
    std::vector<std::vector<double>> vecs(n, std::vector<double>(dim));
    for (auto& v : vecs) {
      for (auto& x : v) x = coord(rng);
    }
    const std::size_t k = 1 + rng() % 10;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> sims;
    for (const auto& v : vecs) sims.push_back(cosine_similarity(v, query));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    order.resize(std::min(k, n));
    CHECK(mmr_select_positions(query, chunks_from(vecs), 1.0, k) == order);
  }
}

TEST_CASE("document view thresholds") {
  HashingEmbedder embedder;
  const SelectionParams params;
  const auto full = process_document(1, "https://d.example/1", fixtures::text_with_tokens(5000), "title", params, embedder);
  CHECK(full.mode == ViewMode::Full);
  CHECK(full.token_count == 5000);
  CHECK_FALSE(full.selected_chunk_indices.has_value());

  const auto big = process_document(1, "https://d.example/2", fixtures::text_with_tokens(10000), "title", params, embedder);
  CHECK(big.mode == ViewMode::MmrSelected);
  REQUIRE(big.selected_chunk_indices.has_value());
  CHECK(big.selected_chunk_indices->size() <= 30);
  CHECK(big.token_count <= 7680);
  CHECK(count_tokens(big.text) == big.token_count);
  CHECK(big.text.find(chunk_separator(big.selected_chunk_indices->front())) == 0);

  const auto edge = process_document(1, "https://d.example/3", fixtures::text_with_tokens(7680), "title", params, embedder);
  CHECK(edge.mode == ViewMode::MmrSelected);
  CHECK(edge.token_count <= 7680);

  const auto under = process_document(1, "https://d.example/4", fixtures::text_with_tokens(7679), "title", params, embedder);
  CHECK(under.mode == ViewMode::Full);
}

TEST_CASE("views never exceed the threshold") {
  HashingEmbedder embedder(64);
  SelectionParams p{16, 5, 0.7, 80};
  for (std::size_t n : {0u, 1u, 79u, 80u, 81u, 200u, 1000u}) {
    const auto v = process_document(2, "https://d.example/x", fixtures::text_with_tokens(n, n + 3), "q", p, embedder);
    CHECK(v.token_count <= 80);
    CHECK(count_tokens(v.text) == v.token_count);
  }
}

TEST_CASE("document views round trip") {
  HashingEmbedder embedder;
  const auto v = process_document(5, "https://d.example/5", fixtures::text_with_tokens(9000), "some title",
                                  SelectionParams{}, embedder);
  CHECK(document_view_from_json(to_json(v)) == v);
  auto bad = to_json(v);
  bad["mode"] = "full";
  CHECK_THROWS_AS(document_view_from_json(bad), Error);
}

TEST_CASE("failed pages cannot be processed") {
  HashingEmbedder embedder;
  FetchedPage page;
  page.url = "https://d.example/f";
  page.fetch_error = "404";
  try {
    process_document(1, page, "q", SelectionParams{}, embedder);
    FAIL("expected PreconditionViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PreconditionViolation);
  }
}
