#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "offscript/chat_backend.hpp"
#include "offscript/dataset.hpp"
#include "offscript/engine.hpp"
#include "offscript/metrics.hpp"
#include "offscript/persistence.hpp"
#include "offscript/review_service.hpp"

namespace offscript::cli {

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::io_error:
    case ErrorCode::usage:
    case ErrorCode::backend_unconfigured:
      return kExitUsage;
    default:
      return kExitDomain;
  }
}

int report_error(std::ostream& err, const Error& e) {
  err << "offscript: " << to_string(e.code()) << ": " << e.what() << "\n";
  return exit_code_for(e);
}

std::string mock_session_id(const std::string& instruction_id, int k) {
  return instruction_id + "-s" + std::to_string(k + 1);
}

MockScriptBook load_book(const std::optional<std::string>& path) {
  return path ? MockScriptBook::load(*path) : MockScriptBook::builtin();
}

AuditBackends mock_backends(const MockScriptBook& book, const CustomInstruction& instruction) {
  const auto& script = book.for_instruction(instruction.id);
  return {std::make_unique<ScriptedChatBackend>(script.auditor),
          ScriptedChatBackend::from_replies(script.target, ScriptedChatBackend::WhenExhausted::cycle)};
}

struct SharedHttpBackend final : ChatBackend {
  explicit SharedHttpBackend(std::shared_ptr<HttpChatBackend> inner) : inner(std::move(inner)) {}
  ChatResponse complete(const ChatRequest& request) override { return inner->complete(request); }
  std::shared_ptr<HttpChatBackend> inner;
};

std::string summary_line(const AuditSession& s) {
  return s.instruction.id + "  session=" + s.id + " conversations=" + std::to_string(s.conversations.size()) +
         " flags=" + std::to_string(s.flags.size()) + " calls=" + std::to_string(s.tool_calls.size()) + "/" +
         std::to_string(s.config.max_function_calls) + " termination=" + std::string(to_string(s.termination));
}

}  // namespace

int cmd_audit(const AuditOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (options.max_calls < 1 || options.sessions < 1 || options.parallel < 1) {
      throw Error(ErrorCode::usage, "--max-calls, --sessions and --parallel must be >= 1");
    }
    const auto rows = load_instructions(options.instructions);
    const auto filtered = filter_instructions(rows);
    out << "instructions: " << rows.size() << " loaded, " << filtered.report.kept << " kept";
    for (const auto& [category, n] : filtered.report.dropped) out << ", " << n << " " << to_string(category);
    out << " dropped\n";

    AuditConfig config;
    config.target_model = options.target;
    config.auditor_model = options.auditor;
    config.max_function_calls = options.max_calls;
    config.sessions_per_instruction = options.sessions;
    config.steering_hints = options.hints;
    validate(config);

    std::optional<MockScriptBook> book;
    std::shared_ptr<HttpChatBackend> http;
    if (options.mock) {
      book = load_book(options.mock_script);
    } else {
      http = std::make_shared<HttpChatBackend>(http_config_from_environment());
    }

    SessionStore store(options.out);

    auto audit_one = [&](const CustomInstruction& instruction) {
      if (book) {
        std::vector<AuditSession> sessions;
        // Fresh scripts per session so each replays identically.
        for (int k = 0; k < config.sessions_per_instruction; ++k) {
          auto backends = mock_backends(*book, instruction);
          EngineOptions engine_options;
          engine_options.session_id = mock_session_id(instruction.id, k);
          sessions.push_back(run_audit(instruction, config, *backends.auditor, *backends.target, engine_options));
        }
        return sessions;
      }
      SharedHttpBackend backend(http);
      return run_audits(instruction, config, backend, backend);
    };

    std::vector<std::future<std::vector<AuditSession>>> pending;
    std::size_t next = 0;
    const auto& instructions = filtered.instructions;
    auto launch = [&] {
      if (next < instructions.size()) {
        pending.push_back(std::async(std::launch::async, audit_one, std::cref(instructions[next++])));
      }
    };
    for (int i = 0; i < options.parallel; ++i) launch();

    bool any_failed = false;
    for (std::size_t i = 0; i < instructions.size(); ++i) {
      auto sessions = pending[i].get();
      launch();
      for (const auto& s : sessions) {
        store.append_session(s);
        out << summary_line(s) << "\n";
        if (s.termination == Termination::backend_error) {
          any_failed = true;
          err << "offscript: session " << s.id << " failed: " << s.error.value_or("backend error") << "\n";
        }
      }
    }
    out << "store: " << store.sessions_path().string() << "\n";
    return any_failed ? kExitDomain : kExitOk;
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (!std::filesystem::is_directory(options.store)) {
      throw Error(ErrorCode::io_error, "store directory " + options.store + " does not exist");
    }
    SessionStore store(options.store);
    const auto loaded = store.load_sessions();
    if (loaded.partial_records > 0) {
      err << "offscript: warning: skipped " << loaded.partial_records << " truncated trailing record(s)\n";
    }
    if (loaded.sessions.empty()) {
      err << "offscript: no sessions in " << options.store << "\n";
      return kExitDomain;
    }
    const auto labels = store.load_labels();
    const auto metrics = compute_report(loaded.sessions, labels);

    const std::filesystem::path dir = options.out.value_or(options.store);
    std::filesystem::create_directories(dir);
    for (auto [format, name] : {std::pair{ReportFormat::json, "report.json"}, {ReportFormat::markdown, "report.md"}}) {
      const auto path = dir / name;
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      f << build_report(metrics, format);
      if (!f) throw Error(ErrorCode::io_error, "cannot write " + path.string());
      out << "wrote " << path.string() << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    return report_error(err, e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "offscript: io_error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_serve(const ServeOptions& options, std::ostream& out, std::ostream& err) {
  try {
    SessionStore store(options.store);

    ServiceOptions service_options;
    if (options.instructions) service_options.instructions = load_instructions(*options.instructions);
    service_options.default_config.target_model = options.target;
    service_options.default_config.auditor_model = options.auditor;
    service_options.default_config.max_function_calls = options.max_calls;
    service_options.max_concurrent_audits = options.max_concurrent_audits;
    if (options.mock) {
      auto book = std::make_shared<MockScriptBook>(load_book(options.mock_script));
      service_options.backend_factory = [book](const CustomInstruction& i) { return mock_backends(*book, i); };
    } else {
      service_options.backend_factory = [](const CustomInstruction&) {
        auto http = std::make_shared<HttpChatBackend>(http_config_from_environment());
        AuditBackends b;
        b.auditor = std::make_unique<SharedHttpBackend>(http);
        b.target = std::make_unique<SharedHttpBackend>(http);
        return b;
      };
    }

    // Block termination signals before any thread starts so only the
    // watcher below receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    if (options.handle_signals) pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    httplib::Server server;
    ReviewService service(store, std::move(service_options));
    service.mount(server);
    if (options.ui_dir && !server.set_mount_point("/", *options.ui_dir)) {
      throw Error(ErrorCode::io_error, "UI directory " + *options.ui_dir + " does not exist");
    }

    int port = options.port;
    if (port == 0) {
      port = server.bind_to_any_port(options.host);
    } else if (!server.bind_to_port(options.host, port)) {
      port = -1;
    }
    if (port < 0) throw Error(ErrorCode::io_error, "cannot bind " + options.host + ":" + std::to_string(options.port));

    std::thread watcher;
    std::atomic<bool> signalled{false};
    if (options.handle_signals) {
      watcher = std::thread([&server, &signalled, signals] {
        int sig = 0;
        sigwait(&signals, &sig);
        signalled = true;
        server.stop();
      });
    }

    out << "serving " << options.store << " on http://" << options.host << ":" << port << "\n" << std::flush;
    if (options.on_listening) options.on_listening(server, port);
    server.listen_after_bind();

    if (watcher.joinable()) {
      // listen returned on its own (stop() from elsewhere): wake the watcher.
      if (!signalled) pthread_kill(watcher.native_handle(), SIGTERM);
      watcher.join();
    }
    service.wait_idle();
    out << "shut down\n";
    return kExitOk;
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audit whether a chat model follows a custom instruction.", "offscript"};
  app.require_subcommand(1);

  AuditOptions audit;
  auto* audit_cmd = app.add_subcommand("audit", "Run audits over an instruction dataset");
  audit_cmd->add_option("--instructions", audit.instructions, "Instruction JSONL file")->required();
  audit_cmd->add_option("--out", audit.out, "Store directory")->capture_default_str();
  audit_cmd->add_option("--target", audit.target, "Target model id")->capture_default_str();
  audit_cmd->add_option("--auditor", audit.auditor, "Auditor model id")->capture_default_str();
  audit_cmd->add_option("--max-calls", audit.max_calls, "Function-call budget per session")->capture_default_str();
  audit_cmd->add_option("--sessions", audit.sessions, "Sessions per instruction")->capture_default_str();
  audit_cmd->add_flag("--mock", audit.mock, "Use scripted backends instead of the network");
  audit_cmd->add_option("--mock-script", audit.mock_script, "Mock script JSON (implies --mock)");
  audit_cmd->add_option("--parallel", audit.parallel, "Instructions audited concurrently")->capture_default_str();
  audit_cmd->add_option("--hints", audit.hints, "Steering hints for the auditor");

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Compute metrics and write report.json / report.md");
  report_cmd->add_option("--store", report.store, "Store directory")->capture_default_str();
  report_cmd->add_option("--out", report.out, "Output directory (default: the store)");

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the review API");
  serve_cmd->add_option("--store", serve.store, "Store directory")->capture_default_str();
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port)->capture_default_str();
  serve_cmd->add_option("--instructions", serve.instructions, "Instruction JSONL available for launching");
  serve_cmd->add_option("--ui-dir", serve.ui_dir, "Static UI bundle to serve at /");
  serve_cmd->add_option("--target", serve.target)->capture_default_str();
  serve_cmd->add_option("--auditor", serve.auditor)->capture_default_str();
  serve_cmd->add_option("--max-calls", serve.max_calls)->capture_default_str();
  serve_cmd->add_flag("--mock", serve.mock);
  serve_cmd->add_option("--mock-script", serve.mock_script);
  serve_cmd->add_option("--max-concurrent-audits", serve.max_concurrent_audits)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "offscript: " << e.what() << "\n";
    return kExitUsage;
  }

  if (audit_cmd->parsed()) {
    if (audit.mock_script) audit.mock = true;
    return cmd_audit(audit, out, err);
  }
  if (report_cmd->parsed()) return cmd_report(report, out, err);
  if (serve.mock_script) serve.mock = true;
  return cmd_serve(serve, out, err);
}

}  // namespace offscript::cli
