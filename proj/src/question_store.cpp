#include "leakaudit/question_store.hpp"

#include <unordered_map>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

const json& require_field(const json& record, const char* field) {
  auto it = record.find(field);
  if (it == record.end()) {
    throw Error(ErrorCode::MalformedRecord, std::string("field '") + field + "' is missing");
  }
  return *it;
}

std::string string_field(const json& record, const char* field) {
  const json& v = require_field(record, field);
  if (!v.is_string()) {
    throw Error(ErrorCode::MalformedRecord, std::string("field '") + field + "' must be a string");
  }
  return v.get<std::string>();
}

Timestamp timestamp_field(const json& record, const char* field) {
  const std::string raw = string_field(record, field);
  try {
    return parse_timestamp(raw);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("field '") + field + "': " + e.what());
  }
}

}  // namespace

const Question* QuestionSet::find(std::int64_t id) const {
  for (const auto& q : questions) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

const Question& QuestionSet::at(std::int64_t id) const {
  if (const Question* q = find(id)) return *q;
  throw Error(ErrorCode::UnknownDoc, "question " + std::to_string(id) + " is not in " + source_path);
}

json to_json(const Question& q) {
  return json{
      {"id", q.id},
      {"title", q.title},
      {"background", q.background},
      {"resolution_criteria", q.resolution_criteria},
      {"fine_print", q.fine_print ? json(*q.fine_print) : json(nullptr)},
      {"open_time", format_timestamp(q.open_time)},
      {"close_time", format_timestamp(q.close_time)},
      {"resolve_time", format_timestamp(q.resolve_time)},
      {"status", q.status},
      {"qtype", q.qtype == QuestionType::Binary ? "binary" : "other"},
      {"resolution", q.resolution},
  };
}

void validate(const Question& q) {
  if (q.open_time >= q.resolve_time) {
    throw Error(ErrorCode::InvariantViolation, "open_time < resolve_time violated for question " + std::to_string(q.id));
  }
  if (q.status != "resolved") {
    throw Error(ErrorCode::InvariantViolation, "field 'status' must be 'resolved' for question " + std::to_string(q.id));
  }
  if (q.is_binary() && q.resolution != "yes" && q.resolution != "no") {
    throw Error(ErrorCode::InvariantViolation,
                "field 'resolution' of binary question " + std::to_string(q.id) + " must be yes/no");
  }
}

Question question_from_json(const json& record) {
  if (!record.is_object()) {
    throw Error(ErrorCode::MalformedRecord, "record is not an object");
  }
  Question q;
  const json& id = require_field(record, "id");
  if (!id.is_number_integer()) {
    throw Error(ErrorCode::MalformedRecord, "field 'id' must be an integer");
  }
  q.id = id.get<std::int64_t>();
  q.title = string_field(record, "title");
  q.background = string_field(record, "background");
  q.resolution_criteria = string_field(record, "resolution_criteria");
  if (auto it = record.find("fine_print"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw Error(ErrorCode::MalformedRecord, "field 'fine_print' must be a string or null");
    }
    q.fine_print = it->get<std::string>();
  }
  q.open_time = timestamp_field(record, "open_time");
  q.close_time = timestamp_field(record, "close_time");
  q.resolve_time = timestamp_field(record, "resolve_time");
  q.status = string_field(record, "status");
  const std::string qtype = string_field(record, "qtype");
  if (qtype == "binary") {
    q.qtype = QuestionType::Binary;
  } else if (qtype == "other") {
    q.qtype = QuestionType::Other;
  } else {
    throw Error(ErrorCode::MalformedRecord, "field 'qtype' must be binary or other");
  }
  q.resolution = string_field(record, "resolution");
  validate(q);
  return q;
}

QuestionSet load_questions(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::MissingFile, "question file " + path.string() + " does not exist");
  }
  QuestionSet set;
  set.source_path = path.string();
  std::unordered_map<std::int64_t, std::size_t> seen;
  read_jsonl(path, [&](const json& record, std::size_t line) {
    Question q;
    try {
      q = question_from_json(record);
    } catch (const Error& e) {
      throw Error(e.code(), path.filename().string() + ":" + std::to_string(line) + ": " + e.what());
    }
    if (auto [it, inserted] = seen.emplace(q.id, line); !inserted) {
      throw Error(ErrorCode::DuplicateId, path.filename().string() + ":" + std::to_string(line) + ": id " +
                                              std::to_string(q.id) + " already defined on line " +
                                              std::to_string(it->second));
    }
    set.questions.push_back(std::move(q));
  });
  return set;
}

void save_questions(const std::filesystem::path& path, const QuestionSet& set) {
  std::vector<json> records;
  records.reserve(set.questions.size());
  for (const auto& q : set.questions) records.push_back(to_json(q));
  write_jsonl(path, records);
}

Date cutoff_date(const Question& q) { return utc_date(q.open_time); }

int cutoff_year(const Question& q) { return static_cast<int>(cutoff_date(q).year()); }

}  // namespace leakaudit
