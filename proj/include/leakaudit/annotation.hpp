#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leakaudit/doc_processing.hpp"
#include "leakaudit/leakage_judge.hpp"
#include "leakaudit/metrics_aggregation.hpp"
#include "leakaudit/question_store.hpp"
#include "leakaudit/time.hpp"

namespace leakaudit {

enum class TaskState { Pending, Labeled, InReview, Adjudicated };

std::string_view to_string(TaskState s);
TaskState task_state_from_string(std::string_view s);

struct AnnotationDoc {
  std::string doc_id;  // "<question id>-<first 12 hex of sha256(url)>"
  std::int64_t question_id = 0;
  std::string url;
  std::string title;
  std::string background;
  std::string resolution_criteria;
  std::string resolution;
  std::string cutoff;  // YYYY-MM-DD
  std::string view_text;
  std::optional<int> judge_score;

  friend bool operator==(const AnnotationDoc&, const AnnotationDoc&) = default;
};

std::string annotation_doc_id(std::int64_t question_id, const std::string& url);
AnnotationDoc make_annotation_doc(const Question& q, const DocumentView& view, std::optional<int> judge_score);

// One doc per view, ordered by (question, url), carrying the judge score when one exists. With
// `sample`, keeps the `sample` docs with the smallest sha256(doc_id), still in that order.
// Throws Error(UnknownDoc) for a view whose question is missing.
std::vector<AnnotationDoc> annotation_docs(const QuestionSet& questions, std::span<const DocumentView> views,
                                           std::span<const LeakageJudgment> judgments,
                                           std::optional<std::size_t> sample = std::nullopt);

struct AnnotationTask {
  AnnotationDoc doc;
  std::string assigned_to;
  TaskState state = TaskState::Pending;
};

struct AnnotationLabel {
  std::string doc_id;
  std::string annotator_id;
  int score = 0;
  std::string rationale;
  Timestamp created_at{};
};

struct Adjudication {
  std::string doc_id;
  int consensus_score = 0;
  std::string notes;
  std::vector<std::string> participants;  // defaults to the two labelers
};

// Round-robin over the docs in the given order. Throws Error(PreconditionViolation) for no
// annotators or no docs, Error(DuplicateId) for repeated doc ids.
std::vector<AnnotationTask> assign_batches(std::span<const AnnotationDoc> docs, std::span<const std::string> annotators);

struct GoldItem {
  std::string doc_id;
  std::int64_t question_id = 0;
  std::string url;
  int human_score = 0;
  int judge_score = 0;
};

struct GoldExport {
  std::vector<GoldItem> items;
  std::size_t skipped_unlabeled = 0;  // pending tasks
  std::size_t skipped_no_judge = 0;   // labeled but never judged
  std::optional<AgreementReport> report;  // absent when no items
};

json to_json(const GoldItem& g);

// Transactional store in a single SQLite file (":memory:" for tests). Safe for concurrent callers.
class AnnotationStore {
 public:
  explicit AnnotationStore(const std::filesystem::path& db_path, Clock clock = system_clock());
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  // Inserts tasks whose doc is not yet stored; existing assignments are never changed.
  // Returns how many were inserted.
  std::size_t add_tasks(std::span<const AnnotationTask> tasks);

  std::vector<AnnotationTask> tasks(const std::optional<std::string>& annotator = std::nullopt) const;
  AnnotationTask task(const std::string& doc_id) const;  // Error(UnknownDoc)

  // Errors: UnknownDoc, ScoreOutOfRange, PreconditionViolation (no annotator), Conflict (label not
  // allowed in the task's state). A repeated mutation id returns the first outcome unchanged.
  TaskState submit_label(const AnnotationLabel& label, const std::optional<std::string>& mutation_id = std::nullopt);

  std::vector<AnnotationLabel> current_labels(const std::string& doc_id) const;  // primary first
  std::vector<AnnotationLabel> label_history(const std::string& doc_id) const;   // oldest first
  std::optional<Adjudication> adjudication(const std::string& doc_id) const;

  // Tasks in in_review, in creation order.
  std::vector<AnnotationTask> disagreement_queue() const;

  // Allowed only for tasks in in_review (Error(Conflict) otherwise).
  TaskState adjudicate(const Adjudication& adj, const std::optional<std::string>& mutation_id = std::nullopt);

  // Consensus label per task: the adjudicated score, else the primary label.
  // Throws Error(IncompleteGold) while any task is in_review.
  GoldExport export_gold() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct AnnotationServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

// HTTP+JSON front end: GET /tasks?annotator=, GET /docs/{id}, POST /labels, GET /disagreements,
// POST /adjudications, GET /agreement-report, GET /export, GET /health.
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store);
  ~AnnotationServer();
  // Binds and returns the bound port. Throws Error(IoError) if binding fails.
  int bind(const AnnotationServerOptions& options);
  // Blocks serving requests until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace leakaudit
