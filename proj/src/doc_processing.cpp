#include "leakaudit/doc_processing.hpp"

#include <cctype>
#include <cmath>
#include <limits>

#include "leakaudit/error.hpp"

namespace leakaudit {

void SelectionParams::validate() const {
  if (chunk_tokens <= 0 || max_chunks <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "chunk_tokens and max_chunks must be positive");
  }
  if (passthrough_threshold != chunk_tokens * max_chunks) {
    throw Error(ErrorCode::ConfigInvalid, "passthrough_threshold must equal chunk_tokens * max_chunks");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "lambda must lie in [0, 1]");
  }
}

namespace {

bool is_space_byte(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(std::size_t max_word_chars) : max_word_chars_(max_word_chars) {
  if (max_word_chars_ == 0) throw Error(ErrorCode::ConfigInvalid, "max_word_chars must be positive");
}

std::string WordPieceTokenizer::id() const { return "wordpiece-" + std::to_string(max_word_chars_); }

std::vector<TokenSpan> WordPieceTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> spans;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const std::size_t start = i;
    while (i < n && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i == n) {
      if (!spans.empty()) spans.back().end = n;
      break;
    }
    if (is_word_byte(static_cast<unsigned char>(text[i]))) {
      std::size_t chars = 0;
      while (i < n && chars < max_word_chars_ && is_word_byte(static_cast<unsigned char>(text[i]))) {
        ++i;
        while (i < n && is_continuation(static_cast<unsigned char>(text[i]))) ++i;
        ++chars;
      }
    } else {
      ++i;
    }
    spans.push_back(TokenSpan{start, i});
  }
  return spans;
}

const Tokenizer& default_tokenizer() {
  static const WordPieceTokenizer tokenizer;
  return tokenizer;
}

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer) { return tokenizer.tokenize(text).size(); }

std::vector<Chunk> chunk(std::string_view text, int chunk_tokens, const Tokenizer& tokenizer) {
  if (chunk_tokens <= 0) {
    throw Error(ErrorCode::PreconditionViolation, "chunk_tokens must be positive");
  }
  std::vector<Chunk> chunks;
  if (text.empty()) return chunks;
  const auto spans = tokenizer.tokenize(text);
  if (spans.empty()) {
    chunks.push_back(Chunk{0, std::string(text), 0, {}});
    return chunks;
  }
  const auto per_chunk = static_cast<std::size_t>(chunk_tokens);
  for (std::size_t first = 0; first < spans.size(); first += per_chunk) {
    const std::size_t last = std::min(first + per_chunk, spans.size()) - 1;
    const std::size_t begin = first == 0 ? 0 : spans[first].begin;
    const std::size_t end = last + 1 == spans.size() ? text.size() : spans[last].end;
    chunks.push_back(Chunk{chunks.size(), std::string(text.substr(begin, end - begin)), last - first + 1, {}});
  }
  return chunks;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "vectors of dimension " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  }
  const double sim = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(sim, -1.0, 1.0);
}

std::vector<std::size_t> mmr_select_positions(std::span<const double> query_vec, std::span<const Chunk> chunks,
                                              double lambda, std::size_t k) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::PreconditionViolation, "lambda must lie in [0, 1]");
  }
  if (k == 0) {
    throw Error(ErrorCode::PreconditionViolation, "k must be at least 1");
  }
  const std::size_t n = chunks.size();
  const std::size_t picks = std::min(k, n);
  std::vector<double> relevance(n);
  for (std::size_t i = 0; i < n; ++i) relevance[i] = cosine_similarity(chunks[i].embedding, query_vec);

  std::vector<std::size_t> order;
  order.reserve(picks);
  std::vector<bool> taken(n, false);
  // max similarity of each candidate to anything already selected
  std::vector<double> redundancy(n, -std::numeric_limits<double>::infinity());

  for (std::size_t round = 0; round < picks; ++round) {
    std::size_t best = n;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      const double score = round == 0 ? relevance[c] : lambda * relevance[c] - (1.0 - lambda) * redundancy[c];
      if (best == n || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    taken[best] = true;
    order.push_back(best);
    for (std::size_t c = 0; c < n; ++c) {
      if (!taken[c]) redundancy[c] = std::max(redundancy[c], cosine_similarity(chunks[c].embedding, chunks[best].embedding));
    }
  }
  return order;
}

std::vector<Chunk> mmr_select(std::span<const double> query_vec, std::span<const Chunk> chunks, double lambda,
                              std::size_t k) {
  std::vector<Chunk> out;
  for (auto pos : mmr_select_positions(query_vec, chunks, lambda, k)) out.push_back(chunks[pos]);
  return out;
}

json to_json(const DocumentView& view) {
  json j{{"question_id", view.question_id},
         {"url", view.url},
         {"mode", view.mode == ViewMode::Full ? "full" : "mmr_selected"},
         {"text", view.text},
         {"relevance_query", view.relevance_query},
         {"token_count", view.token_count}};
  j["selected_chunk_indices"] = view.selected_chunk_indices ? json(*view.selected_chunk_indices) : json(nullptr);
  return j;
}

DocumentView document_view_from_json(const json& record) {
  DocumentView view;
  view.question_id = record.at("question_id").get<std::int64_t>();
  view.url = record.at("url").get<std::string>();
  const auto mode = record.at("mode").get<std::string>();
  if (mode == "full") {
    view.mode = ViewMode::Full;
  } else if (mode == "mmr_selected") {
    view.mode = ViewMode::MmrSelected;
  } else {
    throw Error(ErrorCode::MalformedRecord, "unknown view mode '" + mode + "'");
  }
  view.text = record.at("text").get<std::string>();
  view.relevance_query = record.value("relevance_query", "");
  view.token_count = record.value("token_count", std::size_t{0});
  if (const auto& sel = record.at("selected_chunk_indices"); !sel.is_null()) {
    view.selected_chunk_indices = sel.get<std::vector<std::size_t>>();
  }
  if ((view.mode == ViewMode::Full) != !view.selected_chunk_indices.has_value()) {
    throw Error(ErrorCode::InvariantViolation, "selected_chunk_indices must be present exactly for mmr_selected views");
  }
  return view;
}

std::string chunk_separator(std::size_t chunk_index) { return "[chunk " + std::to_string(chunk_index) + "]\n"; }

DocumentView process_document(std::int64_t question_id, const std::string& url, const std::string& text,
                              const std::string& query_text, const SelectionParams& params, Embedder& embedder,
                              const Tokenizer& tokenizer) {
  params.validate();
  DocumentView view;
  view.question_id = question_id;
  view.url = url;
  const std::size_t tokens = count_tokens(text, tokenizer);
  const auto threshold = static_cast<std::size_t>(params.passthrough_threshold);
  if (tokens < threshold) {
    view.mode = ViewMode::Full;
    view.text = text;
    view.token_count = tokens;
    return view;
  }

  auto chunks = chunk(text, params.chunk_tokens, tokenizer);
  std::vector<std::string> inputs;
  inputs.reserve(chunks.size() + 1);
  inputs.push_back(query_text);
  for (const auto& c : chunks) inputs.push_back(c.text);
  auto vectors = embedder.embed(inputs);
  if (vectors.size() != inputs.size()) {
    throw Error(ErrorCode::EmbedderError, "embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                                              std::to_string(inputs.size()) + " inputs");
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw Error(ErrorCode::DimensionMismatch, "embedding dimension is not uniform within the document");
    }
  }
  for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i].embedding = std::move(vectors[i + 1]);

  const auto order =
      mmr_select_positions(vectors.front(), chunks, params.lambda, static_cast<std::size_t>(params.max_chunks));
  std::string rendered;
  std::vector<std::size_t> indices;
  for (auto pos : order) {
    std::string candidate = rendered + chunk_separator(chunks[pos].index) + trim(chunks[pos].text) + "\n";
    const std::size_t candidate_tokens = count_tokens(candidate, tokenizer);
    if (candidate_tokens > threshold) break;
    rendered = std::move(candidate);
    view.token_count = candidate_tokens;
    indices.push_back(chunks[pos].index);
  }
  view.mode = ViewMode::MmrSelected;
  view.text = std::move(rendered);
  view.selected_chunk_indices = std::move(indices);
  view.relevance_query = query_text;
  return view;
}

DocumentView process_document(std::int64_t question_id, const FetchedPage& page, const std::string& query_text,
                              const SelectionParams& params, Embedder& embedder, const Tokenizer& tokenizer) {
  if (!page.ok()) {
    throw Error(ErrorCode::PreconditionViolation, "page " + page.url + " has no extracted text: " + *page.fetch_error);
  }
  return process_document(question_id, page.url, page.extracted_text, query_text, params, embedder, tokenizer);
}

}  // namespace leakaudit
