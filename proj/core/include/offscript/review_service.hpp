#pragma once

// HTTP+JSON review API over a session store:
//
//   GET  /flags[?instruction_id=&unlabeled=1&annotator=&limit=&offset=]
//   GET  /sessions/{sid}/conversations/{cid}
//   POST /flags/{fid}/labels   {annotator_id, verdict, note?}
//   GET  /metrics
//   POST /audits               {instruction_id, hints?, config?}
//   GET  /audits/{id}/status
//
// Errors are {"error": <code>, "message": <text>}.

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "offscript/chat_backend.hpp"
#include "offscript/domain.hpp"
#include "offscript/persistence.hpp"

namespace httplib {
class Server;
}

namespace offscript {

struct AuditBackends {
  std::unique_ptr<ChatBackend> auditor;
  std::unique_ptr<ChatBackend> target;
};

// Builds the backends for one launched audit. Throws backend_unconfigured
// when no backend is available.
using BackendFactory = std::function<AuditBackends(const CustomInstruction&)>;

struct ServiceOptions {
  std::vector<CustomInstruction> instructions;  // launchable instructions
  AuditConfig default_config;
  BackendFactory backend_factory;
  std::size_t max_concurrent_audits = 2;
};

struct FlagQuery {
  std::optional<std::string> instruction_id;
  bool unlabeled_only = false;
  std::optional<std::string> annotator;  // narrows unlabeled_only to one annotator
  std::size_t offset = 0;
  std::optional<std::size_t> limit;
};

enum class AuditStatus { running, complete, failed };
std::string_view to_string(AuditStatus s);

int http_status_for(ErrorCode code);

class ReviewService {
 public:
  ReviewService(SessionStore& store, ServiceOptions options);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  nlohmann::json list_flags(const FlagQuery& query) const;
  nlohmann::json get_conversation(const std::string& session_id, const std::string& conversation_id) const;
  ReviewLabel submit_label(const std::string& flag_id, const std::string& annotator_id, const std::string& verdict,
                           std::optional<std::string> note);
  nlohmann::json get_metrics() const;

  // Queues run_audit in the background and returns the session id, which is
  // also the id for status polling.
  std::string launch_audit(const std::string& instruction_id, const nlohmann::json& config_overrides,
                           std::optional<std::string> hints);
  nlohmann::json audit_status(const std::string& audit_id) const;

  // Blocks until no launched audit is queued or running.
  void wait_idle();

  void mount(httplib::Server& server);

 private:
  struct Job {
    std::string id;
    CustomInstruction instruction;
    AuditConfig config;
    AuditBackends backends;
  };
  struct JobState {
    std::string instruction_id;
    AuditStatus status = AuditStatus::running;
    std::optional<std::string> termination;
    std::optional<std::string> error;
  };

  void worker_loop();
  void run_job(Job& job);

  SessionStore& store_;
  ServiceOptions options_;
  std::mutex label_mutex_;

  mutable std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable idle_cv_;
  std::deque<Job> queue_;
  std::map<std::string, JobState> jobs_;
  std::size_t active_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace offscript
