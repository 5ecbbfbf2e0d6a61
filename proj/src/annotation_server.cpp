#include <httplib.h>

#include <atomic>

#include "leakaudit/annotation.hpp"
#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownDoc: return 404;
    case ErrorCode::Conflict:
    case ErrorCode::IncompleteGold: return 409;
    case ErrorCode::ScoreOutOfRange:
    case ErrorCode::PreconditionViolation: return 422;
    case ErrorCode::MalformedPayload:
    case ErrorCode::MissingKey: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, json{{"error", code}, {"message", message}}, status);
}

json task_json(const AnnotationTask& t, bool reveal_judge) {
  json doc{{"doc_id", t.doc.doc_id},
           {"question_id", t.doc.question_id},
           {"url", t.doc.url},
           {"title", t.doc.title},
           {"background", t.doc.background},
           {"resolution_criteria", t.doc.resolution_criteria},
           {"resolution", t.doc.resolution},
           {"cutoff", t.doc.cutoff},
           {"assigned_to", t.assigned_to},
           {"state", to_string(t.state)}};
  if (reveal_judge) doc["judge_score"] = t.doc.judge_score ? json(*t.doc.judge_score) : json(nullptr);
  return doc;
}

json label_json(const AnnotationLabel& l) {
  return json{{"doc_id", l.doc_id},
              {"annotator_id", l.annotator_id},
              {"score", l.score},
              {"rationale", l.rationale},
              {"created_at", format_timestamp(l.created_at)}};
}

json body_of(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw Error(ErrorCode::MalformedPayload, "request body must be a JSON object");
  return body;
}

template <typename T>
T field(const json& body, const char* key) {
  if (!body.contains(key)) throw Error(ErrorCode::MissingKey, std::string("missing '") + key + "'");
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::MalformedPayload, std::string("'") + key + "' has the wrong type");
  }
}

std::optional<std::string> optional_string(const json& body, const char* key) {
  if (!body.contains(key) || body.at(key).is_null()) return std::nullopt;
  return field<std::string>(body, key);
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  httplib::Server server;
  std::atomic<bool> bound{false};

  explicit Impl(AnnotationStore& s) : store(s) { routes(); }

  void guarded(httplib::Response& res, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type, X-Annotator-Id"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, {{"status", "ok"}}); });

    server.Get("/tasks", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::optional<std::string> annotator;
        if (req.has_param("annotator")) annotator = req.get_param_value("annotator");
        json out = json::array();
        for (const auto& t : store.tasks(annotator)) out.push_back(task_json(t, t.state == TaskState::Adjudicated));
        send_json(res, out);
      });
    });

    server.Get(R"(/docs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto t = store.task(req.matches[1]);
        const bool adjudicated = t.state == TaskState::Adjudicated;
        json doc = task_json(t, adjudicated);
        doc["view_text"] = t.doc.view_text;
        // Blind labeling: before review starts an annotator sees only their own label.
        const auto viewer = req.get_header_value("X-Annotator-Id");
        const bool open = t.state == TaskState::InReview || adjudicated;
        json labels = json::array();
        for (const auto& l : store.current_labels(t.doc.doc_id)) {
          if (open || l.annotator_id == viewer) labels.push_back(label_json(l));
        }
        doc["labels"] = labels;
        if (auto adj = store.adjudication(t.doc.doc_id)) {
          doc["adjudication"] = json{{"consensus_score", adj->consensus_score},
                                     {"notes", adj->notes},
                                     {"participants", adj->participants}};
        }
        send_json(res, doc);
      });
    });

    server.Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = body_of(req);
        AnnotationLabel label;
        label.doc_id = field<std::string>(body, "doc_id");
        label.annotator_id = req.get_header_value("X-Annotator-Id");
        if (label.annotator_id.empty()) label.annotator_id = field<std::string>(body, "annotator_id");
        label.score = field<int>(body, "score");
        label.rationale = optional_string(body, "rationale").value_or("");
        const auto state = store.submit_label(label, optional_string(body, "mutation_id"));
        send_json(res, json{{"doc_id", label.doc_id}, {"state", to_string(state)}});
      });
    });

    server.Get("/disagreements", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json out = json::array();
        for (const auto& t : store.disagreement_queue()) {
          json item = task_json(t, false);
          json labels = json::array();
          for (const auto& l : store.current_labels(t.doc.doc_id)) labels.push_back(label_json(l));
          item["labels"] = labels;
          out.push_back(item);
        }
        send_json(res, out);
      });
    });

    server.Post("/adjudications", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = body_of(req);
        Adjudication adj;
        adj.doc_id = field<std::string>(body, "doc_id");
        adj.consensus_score = field<int>(body, "consensus_score");
        adj.notes = optional_string(body, "notes").value_or("");
        if (body.contains("participants")) adj.participants = field<std::vector<std::string>>(body, "participants");
        const auto state = store.adjudicate(adj, optional_string(body, "mutation_id"));
        send_json(res, json{{"doc_id", adj.doc_id}, {"state", to_string(state)}});
      });
    });

    server.Get("/agreement-report", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        const auto gold = store.export_gold();
        if (!gold.report) throw Error(ErrorCode::IncompleteGold, "no labeled documents with judge scores");
        json out = to_json(*gold.report);
        out["skipped_unlabeled"] = gold.skipped_unlabeled;
        out["skipped_no_judge"] = gold.skipped_no_judge;
        send_json(res, out);
      });
    });

    server.Get("/export", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        const auto gold = store.export_gold();
        json items = json::array();
        for (const auto& g : gold.items) items.push_back(to_json(g));
        send_json(res, json{{"items", items},
                            {"skipped_unlabeled", gold.skipped_unlabeled},
                            {"skipped_no_judge", gold.skipped_no_judge},
                            {"report", gold.report ? to_json(*gold.report) : json(nullptr)}});
      });
    });
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store) : impl_(std::make_unique<Impl>(store)) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const AnnotationServerOptions& options) {
  int port = options.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(options.host);
  } else if (!impl_->server.bind_to_port(options.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + options.host + ":" + std::to_string(options.port));
  impl_->bound = true;
  return port;
}

void AnnotationServer::serve() {
  if (!impl_->bound) throw Error(ErrorCode::PreconditionViolation, "serve() before bind()");
  impl_->server.listen_after_bind();
}

void AnnotationServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace leakaudit
