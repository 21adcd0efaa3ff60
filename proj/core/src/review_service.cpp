#include "offscript/review_service.hpp"

#include <httplib.h>

#include "offscript/engine.hpp"
#include "offscript/metrics.hpp"

namespace offscript {

using nlohmann::json;

std::string_view to_string(AuditStatus s) {
  switch (s) {
    case AuditStatus::running: return "running";
    case AuditStatus::complete: return "complete";
    case AuditStatus::failed: return "failed";
  }
  return "failed";
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found:
    case ErrorCode::unknown_conversation:
    case ErrorCode::unknown_instruction:
      return 404;
    case ErrorCode::invalid_verdict:
    case ErrorCode::validation_error:
    case ErrorCode::parse_error:
    case ErrorCode::usage:
      return 400;
    case ErrorCode::backend_unconfigured:
      return 503;
    default:
      return 500;
  }
}

namespace {

constexpr std::size_t kExcerptBytes = 120;

std::string excerpt(const std::string& text) {
  if (text.size() <= kExcerptBytes) return text;
  std::size_t cut = kExcerptBytes;
  // Back up to a UTF-8 lead byte.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut) + "...";
}

struct FlagRef {
  const AuditSession* session;
  const Flag* flag;
};

const FlagRef* find_flag(const std::vector<FlagRef>& refs, const std::string& id) {
  for (const auto& r : refs) {
    if (r.flag->id == id) return &r;
  }
  return nullptr;
}

std::vector<FlagRef> flag_refs(const std::vector<AuditSession>& sessions) {
  std::vector<FlagRef> refs;
  for (const auto& s : sessions) {
    for (const auto& f : s.flags) refs.push_back({&s, &f});
  }
  return refs;
}

}  // namespace

ReviewService::ReviewService(SessionStore& store, ServiceOptions options)
    : store_(store), options_(std::move(options)) {
  const auto workers = std::max<std::size_t>(1, options_.max_concurrent_audits);
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ReviewService::~ReviewService() {
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

json ReviewService::list_flags(const FlagQuery& query) const {
  const auto sessions = store_.load_sessions().sessions;
  const auto labels = store_.load_labels();
  std::map<std::string, std::map<std::string, std::string>> by_flag;
  for (const auto& l : labels) by_flag[l.flag_id][l.annotator_id] = std::string(to_string(l.verdict));

  json out = json::array();
  std::size_t skipped = 0;
  for (const auto& ref : flag_refs(sessions)) {
    const auto& s = *ref.session;
    const auto& f = *ref.flag;
    if (query.instruction_id && s.instruction.id != *query.instruction_id) continue;
    const auto it = by_flag.find(f.id);
    const auto flag_labels = it == by_flag.end() ? std::map<std::string, std::string>{} : it->second;
    if (query.unlabeled_only) {
      const bool labelled = query.annotator ? flag_labels.count(*query.annotator) != 0 : flag_labels.size() >= 2;
      if (labelled) continue;
    }
    if (skipped < query.offset) {
      ++skipped;
      continue;
    }
    if (query.limit && out.size() >= *query.limit) break;

    json summary{{"flag_id", f.id},
                 {"session_id", s.id},
                 {"conversation_id", f.conversation_id},
                 {"instruction_id", s.instruction.id},
                 {"instruction_excerpt", excerpt(s.instruction.text)},
                 {"rationale", f.rationale},
                 {"labels", flag_labels}};
    if (f.message_index) summary["message_index"] = *f.message_index;
    out.push_back(std::move(summary));
  }
  return out;
}

json ReviewService::get_conversation(const std::string& session_id, const std::string& conversation_id) const {
  const auto session = store_.find_session(session_id);
  if (!session) throw Error(ErrorCode::not_found, "no session '" + session_id + "'");
  const auto* conv = session->find_conversation(conversation_id);
  if (conv == nullptr) throw Error(ErrorCode::not_found, "no conversation '" + conversation_id + "'");

  json messages = json::array();
  for (const auto& m : conv->messages) {
    json flags = json::array();
    for (const auto& f : session->flags) {
      if (f.conversation_id == conv->id && f.message_index == m.index) {
        flags.push_back({{"flag_id", f.id}, {"rationale", f.rationale}});
      }
    }
    messages.push_back({{"index", m.index}, {"role", to_string(m.role)}, {"content", m.content}, {"flags", flags}});
  }
  json flags = json::array();
  for (const auto& f : session->flags) {
    if (f.conversation_id == conv->id) flags.push_back(f);
  }
  return {{"session_id", session->id},
          {"conversation_id", conv->id},
          {"instruction", session->instruction},
          {"target_model", session->config.target_model},
          {"auditor_model", session->config.auditor_model},
          {"termination", to_string(session->termination)},
          {"messages", std::move(messages)},
          {"flags", std::move(flags)},
          {"transcript", export_transcript(*session, conversation_id)}};
}

ReviewLabel ReviewService::submit_label(const std::string& flag_id, const std::string& annotator_id,
                                        const std::string& verdict, std::optional<std::string> note) {
  const auto parsed = parse_verdict(verdict);
  if (!parsed) throw Error(ErrorCode::invalid_verdict, "verdict must be 'violation' or 'not_violation'");
  if (annotator_id.empty()) throw Error(ErrorCode::validation_error, "annotator_id is required");

  const auto sessions = store_.load_sessions().sessions;
  if (find_flag(flag_refs(sessions), flag_id) == nullptr) {
    throw Error(ErrorCode::not_found, "no flag '" + flag_id + "'");
  }

  std::lock_guard lock(label_mutex_);
  for (const auto& existing : store_.load_labels()) {
    if (existing.flag_id == flag_id && existing.annotator_id == annotator_id && existing.verdict == *parsed &&
        existing.note == note) {
      return existing;
    }
  }
  ReviewLabel label{flag_id, annotator_id, *parsed, std::move(note), now_utc()};
  store_.append_label(label);
  return label;
}

json ReviewService::get_metrics() const {
  const auto sessions = store_.load_sessions().sessions;
  const auto labels = store_.load_labels();
  return report_to_json(compute_report(sessions, labels));
}

std::string ReviewService::launch_audit(const std::string& instruction_id, const json& config_overrides,
                                        std::optional<std::string> hints) {
  const CustomInstruction* instruction = nullptr;
  for (const auto& i : options_.instructions) {
    if (i.id == instruction_id) instruction = &i;
  }
  if (instruction == nullptr) throw Error(ErrorCode::unknown_instruction, "no instruction '" + instruction_id + "'");
  if (!options_.backend_factory) throw Error(ErrorCode::backend_unconfigured, "no chat backend configured");

  AuditConfig config = options_.default_config;
  if (!config_overrides.is_null()) {
    if (!config_overrides.is_object()) throw Error(ErrorCode::validation_error, "config must be an object");
    try {
      for (const auto& [key, value] : config_overrides.items()) {
        if (key == "target_model") {
          config.target_model = value.get<std::string>();
        } else if (key == "auditor_model") {
          config.auditor_model = value.get<std::string>();
        } else if (key == "max_function_calls") {
          config.max_function_calls = value.get<int>();
        } else if (key == "auditor_temperature") {
          config.auditor_temperature = value.get<double>();
        } else if (key == "target_temperature") {
          config.target_temperature = value.get<double>();
        } else {
          throw Error(ErrorCode::validation_error, "unsupported config override '" + key + "'");
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::validation_error, std::string("bad config override: ") + e.what());
    }
  }
  config.sessions_per_instruction = 1;
  if (hints && !hints->empty()) config.steering_hints = std::move(hints);
  validate(config);

  Job job{random_session_id(), *instruction, std::move(config), options_.backend_factory(*instruction)};
  const auto id = job.id;
  {
    std::lock_guard lock(jobs_mutex_);
    jobs_[id] = JobState{instruction_id, AuditStatus::running, std::nullopt, std::nullopt};
    queue_.push_back(std::move(job));
  }
  jobs_cv_.notify_one();
  return id;
}

json ReviewService::audit_status(const std::string& audit_id) const {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(audit_id);
  if (it == jobs_.end()) throw Error(ErrorCode::not_found, "no audit '" + audit_id + "'");
  json out{{"audit_id", audit_id},
           {"session_id", audit_id},
           {"instruction_id", it->second.instruction_id},
           {"status", to_string(it->second.status)}};
  if (it->second.termination) out["termination"] = *it->second.termination;
  if (it->second.error) out["error"] = *it->second.error;
  return out;
}

void ReviewService::wait_idle() {
  std::unique_lock lock(jobs_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
}

void ReviewService::worker_loop() {
  for (;;) {
    std::unique_lock lock(jobs_mutex_);
    jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;  // stopping
    Job job = std::move(queue_.front());
    queue_.pop_front();
    ++active_;
    lock.unlock();

    run_job(job);

    lock.lock();
    --active_;
    if (queue_.empty() && active_ == 0) idle_cv_.notify_all();
  }
}

void ReviewService::run_job(Job& job) {
  JobState result{job.instruction.id, AuditStatus::complete, std::nullopt, std::nullopt};
  try {
    EngineOptions engine_options;
    engine_options.session_id = job.id;
    auto session = run_audit(job.instruction, job.config, *job.backends.auditor, *job.backends.target,
                             std::move(engine_options));
    store_.append_session(session);
    result.termination = std::string(to_string(session.termination));
    if (session.termination == Termination::backend_error) {
      result.status = AuditStatus::failed;
      result.error = session.error;
    }
  } catch (const std::exception& e) {
    result.status = AuditStatus::failed;
    result.error = e.what();
  }
  std::lock_guard lock(jobs_mutex_);
  jobs_[job.id] = std::move(result);
}

// --- HTTP binding -------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, {{"error", to_string(code)}, {"message", message}}, http_status_for(code));
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::parse_error, e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::io_error, e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("request body is not JSON: ") + e.what());
  }
}

std::size_t parse_count(const std::string& text, const char* name) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::validation_error, std::string("query parameter '") + name + "' must be a count");
}

bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

}  // namespace

void ReviewService::mount(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Annotator-Id");
    res.status = 204;
  });

  server.Get("/flags", guarded([this](const httplib::Request& req, httplib::Response& res) {
    FlagQuery q;
    if (req.has_param("instruction_id")) q.instruction_id = req.get_param_value("instruction_id");
    if (req.has_param("unlabeled")) q.unlabeled_only = truthy(req.get_param_value("unlabeled"));
    if (req.has_param("annotator")) q.annotator = req.get_param_value("annotator");
    if (req.has_param("offset")) q.offset = parse_count(req.get_param_value("offset"), "offset");
    if (req.has_param("limit")) q.limit = parse_count(req.get_param_value("limit"), "limit");
    send_json(res, list_flags(q));
  }));

  server.Get(R"(/sessions/([^/]+)/conversations/([^/]+))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, get_conversation(req.matches[1], req.matches[2]));
             }));

  server.Post(R"(/flags/([^/]+)/labels)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const auto body = parse_body(req);
                std::string annotator = body.value("annotator_id", std::string{});
                if (annotator.empty()) annotator = req.get_header_value("X-Annotator-Id");
                std::optional<std::string> note;
                if (auto it = body.find("note"); it != body.end() && it->is_string()) note = it->get<std::string>();
                const auto verdict = body.value("verdict", std::string{});
                send_json(res, submit_label(req.matches[1], annotator, verdict, std::move(note)), 201);
              }));

  server.Get("/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, get_metrics());
  }));

  server.Post("/audits", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto instruction_id = body.value("instruction_id", std::string{});
    std::optional<std::string> hints;
    if (auto it = body.find("hints"); it != body.end() && it->is_string()) hints = it->get<std::string>();
    const auto config = body.contains("config") ? body["config"] : json();
    const auto id = launch_audit(instruction_id, config, std::move(hints));
    send_json(res, audit_status(id), 202);
  }));

  server.Get(R"(/audits/([^/]+)/status)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, audit_status(req.matches[1]));
             }));

  server.Get("/instructions", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, options_.instructions);
  }));
}

}  // namespace offscript
