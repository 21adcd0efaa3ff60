#pragma once

// `offscript` command line: audit, report, serve.
//
// Exit codes: 0 ok, 1 domain error, 2 usage or I/O error.

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace offscript::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kDefaultTarget = "openai/gpt-5-chat";
inline constexpr const char* kDefaultAuditor = "openai/gpt-5-mini";

struct AuditOptions {
  std::string instructions;
  std::string out = "offscript-store";
  std::string target = kDefaultTarget;
  std::string auditor = kDefaultAuditor;
  int max_calls = 20;
  int sessions = 1;
  bool mock = false;
  std::optional<std::string> mock_script;
  int parallel = 1;
  std::optional<std::string> hints;
};

struct ReportOptions {
  std::string store = "offscript-store";
  std::optional<std::string> out;  // defaults to the store directory
};

struct ServeOptions {
  std::string store = "offscript-store";
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::string> instructions;
  std::optional<std::string> ui_dir;
  std::string target = kDefaultTarget;
  std::string auditor = kDefaultAuditor;
  int max_calls = 20;
  bool mock = false;
  std::optional<std::string> mock_script;
  std::size_t max_concurrent_audits = 2;
  bool handle_signals = true;
  // Called once the socket is bound, with the server and its port.
  std::function<void(httplib::Server&, int)> on_listening;
};

int cmd_audit(const AuditOptions& options, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);
int cmd_serve(const ServeOptions& options, std::ostream& out, std::ostream& err);

// Parses argv-style arguments (without the program name) and dispatches.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace offscript::cli
