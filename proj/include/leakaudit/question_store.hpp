#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leakaudit/time.hpp"
#include "leakaudit/util.hpp"

namespace leakaudit {

enum class QuestionType { Binary, Other };

// A resolved forecasting question. open_time is the information cutoff for every downstream stage.
struct Question {
  std::int64_t id = 0;
  std::string title;
  std::string background;
  std::string resolution_criteria;
  std::optional<std::string> fine_print;
  Timestamp open_time{};
  Timestamp close_time{};
  Timestamp resolve_time{};
  std::string status = "resolved";
  QuestionType qtype = QuestionType::Binary;
  std::string resolution;

  bool is_binary() const { return qtype == QuestionType::Binary; }
  bool resolved_yes() const { return resolution == "yes"; }

  friend bool operator==(const Question&, const Question&) = default;
};

struct QuestionSet {
  std::vector<Question> questions;
  std::string source_path;

  const Question* find(std::int64_t id) const;
  // Throws Error(UnknownDoc) naming the id.
  const Question& at(std::int64_t id) const;
};

json to_json(const Question& q);
// Validates every invariant. Errors carry the offending field name.
Question question_from_json(const json& record);
void validate(const Question& q);

QuestionSet load_questions(const std::filesystem::path& path);
void save_questions(const std::filesystem::path& path, const QuestionSet& set);

Date cutoff_date(const Question& q);
int cutoff_year(const Question& q);

}  // namespace leakaudit
