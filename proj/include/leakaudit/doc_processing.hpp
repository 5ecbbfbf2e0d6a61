#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leakaudit/fetch_extract.hpp"
#include "leakaudit/provider.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

struct SelectionParams {
  int chunk_tokens = 256;
  int max_chunks = 30;
  double lambda = 0.7;
  int passthrough_threshold = 7680;  // chunk_tokens * max_chunks

  // Throws Error(ConfigInvalid) when the invariants do not hold.
  void validate() const;
};

// Byte range of one token. Ranges tile the input: the first starts at 0, each starts where the
// previous ended, and the last ends at the input size.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string id() const = 0;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
};

// Default tokenizer: a token is a run of word characters (ASCII alphanumerics and any non-ASCII
// UTF-8 sequence, split every max_word_chars characters) or a single punctuation byte, together
// with the whitespace that precedes it. Trailing whitespace belongs to the last token.
// Purely byte-based, so counts are identical on every platform.
class WordPieceTokenizer final : public Tokenizer {
 public:
  explicit WordPieceTokenizer(std::size_t max_word_chars = 12);
  std::string id() const override;
  std::vector<TokenSpan> tokenize(std::string_view text) const override;

 private:
  std::size_t max_word_chars_;
};

const Tokenizer& default_tokenizer();

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer = default_tokenizer());

struct Chunk {
  std::size_t index = 0;
  std::string text;
  std::size_t token_count = 0;
  std::vector<double> embedding;
};

// Contiguous, non-overlapping chunks whose concatenation is the input. Every chunk except
// possibly the last has exactly chunk_tokens tokens.
std::vector<Chunk> chunk(std::string_view text, int chunk_tokens, const Tokenizer& tokenizer = default_tokenizer());

// Throws Error(DimensionMismatch) or Error(ZeroVector).
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Greedy maximal marginal relevance. The first pick maximizes query similarity; each later pick
// maximizes lambda * sim(c, query) - (1 - lambda) * max_s sim(c, s). Ties go to the lowest index.
// Returns positions into `chunks` in selection order.
std::vector<std::size_t> mmr_select_positions(std::span<const double> query_vec, std::span<const Chunk> chunks,
                                              double lambda, std::size_t k);
std::vector<Chunk> mmr_select(std::span<const double> query_vec, std::span<const Chunk> chunks, double lambda,
                              std::size_t k);

enum class ViewMode { Full, MmrSelected };

struct DocumentView {
  std::int64_t question_id = 0;
  std::string url;
  ViewMode mode = ViewMode::Full;
  std::string text;
  std::optional<std::vector<std::size_t>> selected_chunk_indices;
  std::string relevance_query;  // text the chunks were ranked against (empty for full views)
  std::size_t token_count = 0;  // count_tokens(text)

  friend bool operator==(const DocumentView&, const DocumentView&) = default;
};

json to_json(const DocumentView& view);
DocumentView document_view_from_json(const json& record);

std::string chunk_separator(std::size_t chunk_index);

// Short documents (< passthrough_threshold tokens) pass through unchanged. Longer ones are
// chunked, embedded, MMR-ranked against `query_text`, and rendered in selection order with a
// separator line before each chunk. Rendering stops before the view would exceed the threshold,
// so the view never holds more than passthrough_threshold tokens.
DocumentView process_document(std::int64_t question_id, const std::string& url, const std::string& text,
                              const std::string& query_text, const SelectionParams& params, Embedder& embedder,
                              const Tokenizer& tokenizer = default_tokenizer());
// Requires a successfully fetched page (Error(PreconditionViolation) otherwise).
DocumentView process_document(std::int64_t question_id, const FetchedPage& page, const std::string& query_text,
                              const SelectionParams& params, Embedder& embedder,
                              const Tokenizer& tokenizer = default_tokenizer());

}  // namespace leakaudit
