#include "leakaudit/annotation.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <tuple>
#include <set>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

class Statement {
 public:
  Statement(sqlite3* db, std::string_view sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::IoError, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::string_view v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
  Statement& bind(int i, std::optional<int> v) {
    if (v) return bind(i, *v);
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }

  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(ErrorCode::IoError, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw Error(ErrorCode::IoError, std::string("sqlite bind: ") + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::IoError, "sqlite: " + msg);
  }
}

// Commits on commit(); rolls back if destroyed first.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

constexpr const char* kSchema = R"(
CREATE TABLE IF NOT EXISTS docs (
  doc_id TEXT PRIMARY KEY,
  seq INTEGER NOT NULL,
  question_id INTEGER NOT NULL,
  url TEXT NOT NULL,
  title TEXT NOT NULL,
  background TEXT NOT NULL,
  resolution_criteria TEXT NOT NULL,
  resolution TEXT NOT NULL,
  cutoff TEXT NOT NULL,
  view_text TEXT NOT NULL,
  judge_score INTEGER,
  assigned_to TEXT NOT NULL,
  state TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS labels (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  doc_id TEXT NOT NULL REFERENCES docs(doc_id),
  annotator_id TEXT NOT NULL,
  score INTEGER NOT NULL,
  rationale TEXT NOT NULL,
  created_at TEXT NOT NULL,
  current INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS labels_doc ON labels(doc_id, annotator_id, current);
CREATE TABLE IF NOT EXISTS adjudications (
  doc_id TEXT PRIMARY KEY REFERENCES docs(doc_id),
  consensus_score INTEGER NOT NULL,
  notes TEXT NOT NULL,
  participants TEXT NOT NULL,
  created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS mutations (
  mutation_id TEXT PRIMARY KEY,
  outcome TEXT NOT NULL
);
)";

constexpr const char* kDocColumns =
    "doc_id, question_id, url, title, background, resolution_criteria, resolution, cutoff, view_text, judge_score, "
    "assigned_to, state";

AnnotationTask read_task(const Statement& st) {
  AnnotationTask t;
  t.doc.doc_id = st.text(0);
  t.doc.question_id = st.integer(1);
  t.doc.url = st.text(2);
  t.doc.title = st.text(3);
  t.doc.background = st.text(4);
  t.doc.resolution_criteria = st.text(5);
  t.doc.resolution = st.text(6);
  t.doc.cutoff = st.text(7);
  t.doc.view_text = st.text(8);
  if (!st.is_null(9)) t.doc.judge_score = static_cast<int>(st.integer(9));
  t.assigned_to = st.text(10);
  t.state = task_state_from_string(st.text(11));
  return t;
}

AnnotationLabel read_label(const Statement& st) {
  return AnnotationLabel{st.text(0), st.text(1), static_cast<int>(st.integer(2)), st.text(3),
                         parse_timestamp(st.text(4))};
}

void check_score(int score) {
  if (score < 0 || score > 4) throw Error(ErrorCode::ScoreOutOfRange, "score " + std::to_string(score) + " outside 0-4");
}

}  // namespace

std::string_view to_string(TaskState s) {
  switch (s) {
    case TaskState::Pending: return "pending";
    case TaskState::Labeled: return "labeled";
    case TaskState::InReview: return "in_review";
    case TaskState::Adjudicated: return "adjudicated";
  }
  return "unknown";
}

TaskState task_state_from_string(std::string_view s) {
  if (s == "pending") return TaskState::Pending;
  if (s == "labeled") return TaskState::Labeled;
  if (s == "in_review") return TaskState::InReview;
  if (s == "adjudicated") return TaskState::Adjudicated;
  throw Error(ErrorCode::MalformedRecord, "unknown task state '" + std::string(s) + "'");
}

std::string annotation_doc_id(std::int64_t question_id, const std::string& url) {
  return std::to_string(question_id) + "-" + sha256_hex(url).substr(0, 12);
}

AnnotationDoc make_annotation_doc(const Question& q, const DocumentView& view, std::optional<int> judge_score) {
  AnnotationDoc d;
  d.doc_id = annotation_doc_id(q.id, view.url);
  d.question_id = q.id;
  d.url = view.url;
  d.title = q.title;
  d.background = q.background;
  d.resolution_criteria = q.resolution_criteria;
  d.resolution = q.resolution;
  d.cutoff = format_date(cutoff_date(q));
  d.view_text = view.text;
  d.judge_score = judge_score;
  return d;
}

std::vector<AnnotationDoc> annotation_docs(const QuestionSet& questions, std::span<const DocumentView> views,
                                           std::span<const LeakageJudgment> judgments,
                                           std::optional<std::size_t> sample) {
  std::map<std::pair<std::int64_t, std::string>, int> scores;
  for (const auto& j : judgments) scores[{j.question_id, j.url}] = j.leakage_score;
  std::vector<AnnotationDoc> docs;
  docs.reserve(views.size());
  for (const auto& v : views) {
    auto it = scores.find({v.question_id, v.url});
    docs.push_back(make_annotation_doc(questions.at(v.question_id), v,
                                       it == scores.end() ? std::nullopt : std::optional<int>(it->second)));
  }
  std::sort(docs.begin(), docs.end(), [](const AnnotationDoc& a, const AnnotationDoc& b) {
    return std::tie(a.question_id, a.url) < std::tie(b.question_id, b.url);
  });
  if (sample && *sample < docs.size()) {
    std::vector<std::pair<std::string, std::size_t>> keyed;
    for (std::size_t i = 0; i < docs.size(); ++i) keyed.emplace_back(sha256_hex(docs[i].doc_id), i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < *sample; ++i) keep.push_back(keyed[i].second);
    std::sort(keep.begin(), keep.end());
    std::vector<AnnotationDoc> picked;
    for (auto i : keep) picked.push_back(std::move(docs[i]));
    docs = std::move(picked);
  }
  return docs;
}

std::vector<AnnotationTask> assign_batches(std::span<const AnnotationDoc> docs, std::span<const std::string> annotators) {
  if (annotators.empty()) throw Error(ErrorCode::PreconditionViolation, "at least one annotator is required");
  if (docs.empty()) throw Error(ErrorCode::PreconditionViolation, "no documents to assign");
  std::set<std::string> names(annotators.begin(), annotators.end());
  if (names.size() != annotators.size() || names.contains("")) {
    throw Error(ErrorCode::PreconditionViolation, "annotator ids must be distinct and non-empty");
  }
  std::set<std::string> seen;
  std::vector<AnnotationTask> tasks;
  tasks.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!seen.insert(docs[i].doc_id).second) throw Error(ErrorCode::DuplicateId, "doc " + docs[i].doc_id + " listed twice");
    tasks.push_back(AnnotationTask{docs[i], annotators[i % annotators.size()], TaskState::Pending});
  }
  return tasks;
}

json to_json(const GoldItem& g) {
  return json{{"doc_id", g.doc_id},
              {"question_id", g.question_id},
              {"url", g.url},
              {"human_score", g.human_score},
              {"judge_score", g.judge_score}};
}

struct AnnotationStore::Impl {
  sqlite3* db = nullptr;
  Clock clock;
  mutable std::mutex mutex;

  ~Impl() {
    if (db) sqlite3_close(db);
  }

  std::optional<std::string> recorded_outcome(const std::string& mutation_id) const {
    Statement st(db, "SELECT outcome FROM mutations WHERE mutation_id = ?");
    st.bind(1, mutation_id);
    if (st.step()) return st.text(0);
    return std::nullopt;
  }

  void record_outcome(const std::string& mutation_id, std::string_view outcome) {
    Statement st(db, "INSERT INTO mutations(mutation_id, outcome) VALUES (?, ?)");
    st.bind(1, mutation_id).bind(2, outcome);
    st.step();
  }

  AnnotationTask load_task(const std::string& doc_id) const {
    Statement st(db, std::string("SELECT ") + kDocColumns + " FROM docs WHERE doc_id = ?");
    st.bind(1, doc_id);
    if (!st.step()) throw Error(ErrorCode::UnknownDoc, "no document '" + doc_id + "'");
    return read_task(st);
  }

  std::optional<AnnotationLabel> current_label(const std::string& doc_id, const std::string& annotator) const {
    Statement st(db,
                 "SELECT doc_id, annotator_id, score, rationale, created_at FROM labels "
                 "WHERE doc_id = ? AND annotator_id = ? AND current = 1");
    st.bind(1, doc_id).bind(2, annotator);
    if (st.step()) return read_label(st);
    return std::nullopt;
  }

  // The current label of someone other than the primary annotator (latest if several reviewed).
  std::optional<AnnotationLabel> review_label(const std::string& doc_id, const std::string& primary) const {
    Statement st(db,
                 "SELECT doc_id, annotator_id, score, rationale, created_at FROM labels "
                 "WHERE doc_id = ? AND annotator_id <> ? AND current = 1 ORDER BY id DESC LIMIT 1");
    st.bind(1, doc_id).bind(2, primary);
    if (st.step()) return read_label(st);
    return std::nullopt;
  }

  void set_state(const std::string& doc_id, TaskState state) {
    Statement st(db, "UPDATE docs SET state = ? WHERE doc_id = ?");
    st.bind(1, to_string(state)).bind(2, doc_id);
    st.step();
  }

  std::vector<AnnotationTask> query_tasks(const std::string& where, const std::optional<std::string>& arg) const {
    Statement st(db, std::string("SELECT ") + kDocColumns + " FROM docs " + where + " ORDER BY seq");
    if (arg) st.bind(1, *arg);
    std::vector<AnnotationTask> out;
    while (st.step()) out.push_back(read_task(st));
    return out;
  }
};

AnnotationStore::AnnotationStore(const std::filesystem::path& db_path, Clock clock) : impl_(std::make_unique<Impl>()) {
  impl_->clock = clock ? std::move(clock) : system_clock();
  if (db_path != ":memory:" && db_path.has_parent_path()) std::filesystem::create_directories(db_path.parent_path());
  if (sqlite3_open(db_path.string().c_str(), &impl_->db) != SQLITE_OK) {
    throw Error(ErrorCode::IoError, "cannot open annotation store " + db_path.string());
  }
  sqlite3_busy_timeout(impl_->db, 5000);
  if (db_path != ":memory:") exec(impl_->db, "PRAGMA journal_mode=WAL");
  exec(impl_->db, "PRAGMA foreign_keys=ON");
  exec(impl_->db, kSchema);
}

AnnotationStore::~AnnotationStore() = default;

std::size_t AnnotationStore::add_tasks(std::span<const AnnotationTask> tasks) {
  std::lock_guard lock(impl_->mutex);
  Transaction tx(impl_->db);
  std::int64_t seq = 0;
  {
    Statement st(impl_->db, "SELECT COALESCE(MAX(seq), -1) FROM docs");
    st.step();
    seq = st.integer(0) + 1;
  }
  std::size_t inserted = 0;
  for (const auto& t : tasks) {
    if (t.assigned_to.empty()) throw Error(ErrorCode::PreconditionViolation, "task " + t.doc.doc_id + " has no annotator");
    if (t.doc.judge_score) check_score(*t.doc.judge_score);
    Statement st(impl_->db,
                 "INSERT OR IGNORE INTO docs(doc_id, seq, question_id, url, title, background, resolution_criteria, "
                 "resolution, cutoff, view_text, judge_score, assigned_to, state) "
                 "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, 'pending')");
    st.bind(1, t.doc.doc_id).bind(2, seq).bind(3, t.doc.question_id).bind(4, t.doc.url).bind(5, t.doc.title);
    st.bind(6, t.doc.background).bind(7, t.doc.resolution_criteria).bind(8, t.doc.resolution).bind(9, t.doc.cutoff);
    st.bind(10, t.doc.view_text).bind(11, t.doc.judge_score).bind(12, t.assigned_to);
    st.step();
    if (sqlite3_changes(impl_->db) > 0) {
      ++inserted;
      ++seq;
    }
  }
  tx.commit();
  return inserted;
}

std::vector<AnnotationTask> AnnotationStore::tasks(const std::optional<std::string>& annotator) const {
  std::lock_guard lock(impl_->mutex);
  if (!annotator) return impl_->query_tasks("", std::nullopt);
  // A reviewer also sees the tasks of others they have labeled.
  return impl_->query_tasks(
      "WHERE assigned_to = ?1 OR doc_id IN (SELECT doc_id FROM labels WHERE annotator_id = ?1)", annotator);
}

AnnotationTask AnnotationStore::task(const std::string& doc_id) const {
  std::lock_guard lock(impl_->mutex);
  return impl_->load_task(doc_id);
}

TaskState AnnotationStore::submit_label(const AnnotationLabel& label, const std::optional<std::string>& mutation_id) {
  std::lock_guard lock(impl_->mutex);
  if (mutation_id) {
    if (auto prior = impl_->recorded_outcome(*mutation_id)) return task_state_from_string(*prior);
  }
  if (label.annotator_id.empty()) throw Error(ErrorCode::PreconditionViolation, "label without annotator id");
  Transaction tx(impl_->db);
  const auto task = impl_->load_task(label.doc_id);
  check_score(label.score);
  const bool primary = label.annotator_id == task.assigned_to;

  TaskState next = task.state;
  switch (task.state) {
    case TaskState::Adjudicated:
      throw Error(ErrorCode::Conflict, label.doc_id + " is already adjudicated");
    case TaskState::Pending:
      if (!primary) throw Error(ErrorCode::Conflict, label.doc_id + " has no primary label to review yet");
      next = TaskState::Labeled;
      break;
    case TaskState::Labeled: {
      // Either side may re-label; the task moves forward once primary and review differ.
      const auto other = primary ? impl_->review_label(label.doc_id, task.assigned_to)
                                 : impl_->current_label(label.doc_id, task.assigned_to);
      if (other && other->score != label.score) next = TaskState::InReview;
      break;
    }
    case TaskState::InReview:
      break;  // re-labels stay in review until adjudicated
  }

  {
    Statement st(impl_->db, "UPDATE labels SET current = 0 WHERE doc_id = ? AND annotator_id = ?");
    st.bind(1, label.doc_id).bind(2, label.annotator_id);
    st.step();
  }
  {
    Statement st(impl_->db,
                 "INSERT INTO labels(doc_id, annotator_id, score, rationale, created_at, current) VALUES (?, ?, ?, ?, ?, 1)");
    st.bind(1, label.doc_id).bind(2, label.annotator_id).bind(3, label.score).bind(4, label.rationale);
    st.bind(5, format_timestamp(impl_->clock()));
    st.step();
  }
  if (next != task.state) impl_->set_state(label.doc_id, next);
  if (mutation_id) impl_->record_outcome(*mutation_id, to_string(next));
  tx.commit();
  return next;
}

std::vector<AnnotationLabel> AnnotationStore::current_labels(const std::string& doc_id) const {
  std::lock_guard lock(impl_->mutex);
  const auto task = impl_->load_task(doc_id);
  Statement st(impl_->db,
               "SELECT doc_id, annotator_id, score, rationale, created_at FROM labels WHERE doc_id = ? AND current = 1 "
               "ORDER BY (annotator_id = ?) DESC, id");
  st.bind(1, doc_id).bind(2, task.assigned_to);
  std::vector<AnnotationLabel> out;
  while (st.step()) out.push_back(read_label(st));
  return out;
}

std::vector<AnnotationLabel> AnnotationStore::label_history(const std::string& doc_id) const {
  std::lock_guard lock(impl_->mutex);
  impl_->load_task(doc_id);
  Statement st(impl_->db,
               "SELECT doc_id, annotator_id, score, rationale, created_at FROM labels WHERE doc_id = ? ORDER BY id");
  st.bind(1, doc_id);
  std::vector<AnnotationLabel> out;
  while (st.step()) out.push_back(read_label(st));
  return out;
}

std::optional<Adjudication> AnnotationStore::adjudication(const std::string& doc_id) const {
  std::lock_guard lock(impl_->mutex);
  Statement st(impl_->db, "SELECT doc_id, consensus_score, notes, participants FROM adjudications WHERE doc_id = ?");
  st.bind(1, doc_id);
  if (!st.step()) return std::nullopt;
  return Adjudication{st.text(0), static_cast<int>(st.integer(1)), st.text(2),
                      json::parse(st.text(3)).get<std::vector<std::string>>()};
}

std::vector<AnnotationTask> AnnotationStore::disagreement_queue() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->query_tasks("WHERE state = 'in_review'", std::nullopt);
}

TaskState AnnotationStore::adjudicate(const Adjudication& adj, const std::optional<std::string>& mutation_id) {
  std::lock_guard lock(impl_->mutex);
  if (mutation_id) {
    if (auto prior = impl_->recorded_outcome(*mutation_id)) return task_state_from_string(*prior);
  }
  Transaction tx(impl_->db);
  const auto task = impl_->load_task(adj.doc_id);
  check_score(adj.consensus_score);
  if (task.state != TaskState::InReview) {
    throw Error(ErrorCode::Conflict, adj.doc_id + " is " + std::string(to_string(task.state)) + ", not in_review");
  }
  auto participants = adj.participants;
  if (participants.empty()) {
    participants.push_back(task.assigned_to);
    if (auto review = impl_->review_label(adj.doc_id, task.assigned_to)) participants.push_back(review->annotator_id);
  }
  Statement st(impl_->db,
               "INSERT INTO adjudications(doc_id, consensus_score, notes, participants, created_at) VALUES (?, ?, ?, ?, ?)");
  st.bind(1, adj.doc_id).bind(2, adj.consensus_score).bind(3, adj.notes).bind(4, json(participants).dump());
  st.bind(5, format_timestamp(impl_->clock()));
  st.step();
  impl_->set_state(adj.doc_id, TaskState::Adjudicated);
  if (mutation_id) impl_->record_outcome(*mutation_id, to_string(TaskState::Adjudicated));
  tx.commit();
  return TaskState::Adjudicated;
}

GoldExport AnnotationStore::export_gold() const {
  std::lock_guard lock(impl_->mutex);
  const auto all = impl_->query_tasks("", std::nullopt);
  std::size_t open = 0;
  for (const auto& t : all) open += t.state == TaskState::InReview ? 1 : 0;
  if (open > 0) throw Error(ErrorCode::IncompleteGold, std::to_string(open) + " disagreements await adjudication");

  GoldExport out;
  std::vector<int> human, judge;
  for (const auto& t : all) {
    if (t.state == TaskState::Pending) {
      ++out.skipped_unlabeled;
      continue;
    }
    if (!t.doc.judge_score) {
      ++out.skipped_no_judge;
      continue;
    }
    int consensus = 0;
    if (t.state == TaskState::Adjudicated) {
      Statement st(impl_->db, "SELECT consensus_score FROM adjudications WHERE doc_id = ?");
      st.bind(1, t.doc.doc_id);
      if (!st.step()) throw Error(ErrorCode::InvariantViolation, t.doc.doc_id + " adjudicated without a record");
      consensus = static_cast<int>(st.integer(0));
    } else {
      const auto primary = impl_->current_label(t.doc.doc_id, t.assigned_to);
      if (!primary) throw Error(ErrorCode::InvariantViolation, t.doc.doc_id + " labeled without a primary label");
      consensus = primary->score;
    }
    out.items.push_back(GoldItem{t.doc.doc_id, t.doc.question_id, t.doc.url, consensus, *t.doc.judge_score});
    human.push_back(consensus);
    judge.push_back(*t.doc.judge_score);
  }
  if (!out.items.empty()) out.report = agreement_report(human, judge);
  return out;
}

}  // namespace leakaudit
