// Acceptance gate: each criterion prints one PASS/FAIL line; the exit status
// is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "offscript/chat_backend.hpp"
#include "offscript/dataset.hpp"
#include "offscript/engine.hpp"
#include "offscript/metrics.hpp"
#include "offscript/persistence.hpp"
#include "test_support.hpp"

namespace {

using namespace offscript;
using nlohmann::json;
using Clock = std::chrono::steady_clock;
using Exhausted = ScriptedChatBackend::WhenExhausted;

// Thrown by check() with a description of the first failed expectation.
struct Failure {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const CustomInstruction kInstruction{"acc-1", "Never use emojis in any reply.", std::nullopt,
                                     Category::presentation};

AuditConfig config_with_budget(int budget) {
  AuditConfig c;
  c.target_model = "target-model";
  c.auditor_model = "auditor-model";
  c.max_function_calls = budget;
  return c;
}

// --- criteria ---------------------------------------------------------------

void budget_property() {
  std::mt19937_64 rng(20251016);
  for (int i = 0; i < 200; ++i) {
    const int budget = testing::uniform(rng, 1, 20);
    ScriptedChatBackend auditor(testing::random_auditor_script(rng, 0.04), Exhausted::cycle);
    auto target = ScriptedChatBackend::from_replies({"Sure.", "4 🎉", "No."}, Exhausted::cycle);
    const auto s = run_audit(kInstruction, config_with_budget(budget), auditor, *target);
    const auto tag = "script " + std::to_string(i) + " budget " + std::to_string(budget);
    check(s.termination != Termination::backend_error, tag + ": backend_error " + s.error.value_or(""));

    const int calls = static_cast<int>(s.tool_calls.size());
    bool end_fired = false;
    for (const auto& r : s.tool_calls) end_fired |= r.name == ToolName::end_audit && r.outcome == Outcome::ok;
    check(calls <= budget, tag + ": " + std::to_string(calls) + " calls");
    if (!end_fired) {
      check(calls == budget, tag + ": no end_audit but only " + std::to_string(calls) + " calls");
      check(s.termination == Termination::budget_exhausted, tag + ": wrong termination");
    } else {
      // end_audit fired: it is the final recorded call, and the count falls
      // short of the budget unless end_audit itself was the last budgeted call.
      check(s.tool_calls.back().name == ToolName::end_audit, tag + ": calls recorded after end_audit");
      check(s.termination == Termination::auditor_ended, tag + ": wrong termination");
    }
  }
}

// Session ids and timestamps vary between runs; everything else must not.
std::string normalized(const AuditSession& s) {
  json j = s;
  j["started_at"] = "<time>";
  j["ended_at"] = "<time>";
  auto text = j.dump();
  for (auto pos = text.find(s.id); pos != std::string::npos; pos = text.find(s.id, pos)) {
    text.replace(pos, s.id.size(), "<session>");
  }
  return text;
}

void deterministic_replay() {
  std::string first;
  for (int run = 0; run < 10; ++run) {
    ScriptedChatBackend auditor(
        {tool_call_response("start_conversation", {{"initial_prompt", "What is 2+2?"}}),
         tool_call_response("flag_for_review", {{"conversation_id", "conv-1"}, {"rationale", "reply has an emoji"}}),
         tool_call_response("end_audit", {{"reason", "violation found"}})});
    auto target = ScriptedChatBackend::from_replies({"4 🎉"});
    const auto s = run_audit(kInstruction, config_with_budget(20), auditor, *target);
    check(s.tool_calls.size() == 3 && s.flags.size() == 1, "3-call fixture shape");
    const auto text = normalized(s);
    if (run == 0) {
      first = text;
    } else {
      check(text == first, "run " + std::to_string(run) + " differs from run 0");
    }
  }

  std::vector<ChatResponse> turns{tool_call_response("start_conversation", {{"initial_prompt", "Tell me a fact."}})};
  for (int i = 0; i < 25; ++i) {
    turns.push_back(tool_call_response("send_message", {{"conversation_id", "conv-1"}, {"message", "Another."}}));
  }
  ScriptedChatBackend auditor(turns);
  auto target = ScriptedChatBackend::from_replies({"A fact."}, Exhausted::cycle);
  const auto s = run_audit(kInstruction, config_with_budget(20), auditor, *target);
  std::size_t messages = 0;
  for (const auto& c : s.conversations) messages += c.messages.size();
  check(messages == 41, "20-call fixture has " + std::to_string(messages) + " messages");
  check(s.tool_calls.size() == 20, "20-call fixture call count");
  check(s.termination == Termination::budget_exhausted, "20-call fixture termination");
}

void kappa_oracle() {
  std::mt19937_64 rng(424242);
  for (int i = 0; i < 1000; ++i) {
    const auto pairs = testing::random_pairs(rng, 12);
    const double got = cohens_kappa(testing::to_agreement_input(pairs));
    const double want = testing::brute_force_kappa(pairs);
    check(std::fabs(got - want) <= 1e-12, "set " + std::to_string(i) + ": " + std::to_string(got) + " vs " +
                                              std::to_string(want));
  }
  check(std::fabs(cohens_kappa(testing::to_agreement_input(testing::pairs_from_table(20, 5, 10, 15))) - 0.4) <= 1e-12,
        "20/5/10/15 -> 0.4");
  check(cohens_kappa(testing::to_agreement_input(testing::pairs_from_table(1, 1, 1, 1))) == 0.0, "1/1/1/1 -> 0");
  check(cohens_kappa(testing::to_agreement_input(testing::pairs_from_table(6, 0, 0, 5))) == 1.0, "perfect -> 1");
}

void metrics_identities() {
  std::mt19937_64 rng(777);
  for (int i = 0; i < 1000; ++i) {
    auto pairs = testing::random_pairs(rng, 40);
    const auto input = testing::to_agreement_input(pairs);
    const auto v = violation_rates(input);
    check(v.any_annotator_rate.numerator + v.unanimous_violation_rate.numerator ==
              v.annotator_a.rate.numerator + v.annotator_b.rate.numerator,
          "inclusion-exclusion on input " + std::to_string(i));
    check(v.any_annotator_rate.denominator == v.coannotated && v.annotator_a.rate.denominator == v.coannotated,
          "denominators on input " + std::to_string(i));

    for (auto& p : pairs) std::swap(p.first, p.second);
    const auto swapped = testing::to_agreement_input(pairs);
    const auto k = cohens_kappa(input);
    const auto ks = cohens_kappa(swapped);
    check(k == ks || (std::isnan(k) && std::isnan(ks)), "kappa swap on input " + std::to_string(i));
    check(percent_agreement(input) == percent_agreement(swapped), "agreement swap on input " + std::to_string(i));
  }
}

void persistence_round_trip() {
  std::mt19937_64 rng(9001);
  for (int i = 0; i < 500; ++i) {
    const auto s = testing::random_session(rng);
    check(parse_session(serialize_session(s)) == s, "session " + std::to_string(i) + " round trip");
  }

  for (int trial = 0; trial < 5; ++trial) {
    testing::TempDir dir;
    std::vector<AuditSession> written;
    {
      SessionStore store(dir.path());
      for (int i = 0, n = testing::uniform(rng, 2, 12); i < n; ++i) {
        auto s = testing::random_session(rng);
        s.id = "t" + std::to_string(trial) + "-" + std::to_string(i);
        for (std::size_t f = 0; f < s.flags.size(); ++f) s.flags[f].id = s.id + "-flag-" + std::to_string(f + 1);
        store.append_session(s);
        written.push_back(s);
      }
    }
    const auto path = dir.path() / "sessions.jsonl";
    const auto last = serialize_session(written.back()).size() + 1;
    const auto cut = static_cast<std::uintmax_t>(testing::uniform(rng, 1, static_cast<int>(last) - 1));
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - cut);

    SessionStore store(dir.path());
    const auto loaded = store.load_sessions();
    written.pop_back();
    check(loaded.sessions == written, "truncated store trial " + std::to_string(trial));
    check(loaded.partial_records == 1, "truncated record not reported");
  }
}

void wire_conformance() {
  const ChatRequest request{"m",
                            {{ChatRole::system, "s", {}, std::nullopt}, {ChatRole::user, "u", {}, std::nullopt}},
                            {},
                            {}};
  const auto golden = json::parse(read_file(testing::data_dir() / "golden" / "chat_request_minimal.json"));
  const auto body = serialize_request(request);
  check(body == golden, "request body " + body.dump() + " != golden " + golden.dump());

  const auto response = parse_tool_calls(read_file(testing::data_dir() / "golden" / "chat_response_tool_call.json"));
  check(response.tool_calls.size() == 1, "one tool call");
  check(response.tool_calls[0].name == "start_conversation", "tool name");
  check(response.tool_calls[0].arguments == "{\"initial_prompt\":\"hi\"}", "raw arguments");
}

void dataset_filter() {
  const auto rows = load_instructions(testing::data_dir() / "fixtures" / "dataset_115.jsonl");
  check(rows.size() == 115, "fixture rows: " + std::to_string(rows.size()));
  const auto kept = filter_instructions(rows).instructions.size();
  check(kept == 65, "kept " + std::to_string(kept));
}

void compare_report(const json& got, const json& want, const std::string& path) {
  if (want.is_object()) {
    check(got.is_object(), path + " is not an object");
    for (const auto& [key, value] : want.items()) {
      check(got.contains(key), path + "/" + key + " missing");
      compare_report(got.at(key), value, path + "/" + key);
    }
    for (const auto& [key, value] : got.items()) {
      check(key == "notes" || want.contains(key), path + "/" + key + " unexpected");
    }
  } else if (want.is_array()) {
    check(got.is_array() && got.size() == want.size(), path + " array size");
    for (std::size_t i = 0; i < want.size(); ++i) compare_report(got[i], want[i], path + "/" + std::to_string(i));
  } else if (want.is_number_float()) {
    check(got.is_number() && std::fabs(got.get<double>() - want.get<double>()) <= 1e-12,
          path + ": " + got.dump() + " vs " + want.dump());
  } else {
    check(got == want, path + ": " + got.dump() + " vs " + want.dump());
  }
}

void end_to_end() {
  const auto corpus = testing::data_dir() / "fixtures" / "e2e";
  testing::TempDir dir;
  const auto store = dir.path() / "store";
  std::ostringstream out, err;
  int code = cli::run({"audit", "--instructions", (corpus / "instructions.jsonl").string(), "--out", store.string(),
                       "--mock-script", (corpus / "mock_script.json").string()},
                      out, err);
  check(code == 0, "audit exit " + std::to_string(code) + ": " + err.str());
  std::filesystem::copy_file(corpus / "labels.jsonl", store / "labels.jsonl");
  code = cli::run({"report", "--store", store.string()}, out, err);
  check(code == 0, "report exit " + std::to_string(code) + ": " + err.str());

  const auto got = json::parse(read_file(store / "report.json"));
  const auto want = json::parse(read_file(corpus / "expected_report.json"));
  compare_report(got, want, "");
}

struct Criterion {
  const char* name;
  std::function<void()> body;
  double limit_seconds;  // 0 = no time limit
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"budget property (200 fuzzed auditor scripts)", budget_property, 10.0},
      {"deterministic replay (3-call and 20-call fixtures)", deterministic_replay, 0.0},
      {"kappa oracle (1000 random label sets + fixed tables)", kappa_oracle, 5.0},
      {"metrics identities (inclusion-exclusion, annotator swap)", metrics_identities, 0.0},
      {"persistence round trip and truncated tail", persistence_round_trip, 0.0},
      {"wire conformance (golden request, tool-call parsing)", wire_conformance, 0.0},
      {"dataset filter (115 rows -> 65)", dataset_filter, 0.0},
      {"end to end mock audit -> report", end_to_end, 30.0},
  };

  int failed = 0;
  int n = 0;
  for (const auto& c : criteria) {
    ++n;
    std::string detail;
    bool ok = true;
    const auto start = Clock::now();
    try {
      c.body();
    } catch (const Failure& f) {
      ok = false;
      detail = f.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (ok && c.limit_seconds > 0 && seconds >= c.limit_seconds) {
      ok = false;
      detail = "took " + std::to_string(seconds) + " s";
    }
    std::printf("%s [%d] %s (%.3f s)%s%s\n", ok ? "PASS" : "FAIL", n, c.name, seconds, detail.empty() ? "" : ": ",
                detail.c_str());
    failed += ok ? 0 : 1;
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}
