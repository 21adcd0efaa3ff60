#include <random>

#include <gtest/gtest.h>

#include "offscript/engine.hpp"
#include "test_support.hpp"

namespace offscript {
namespace {

using nlohmann::json;
using Exhausted = ScriptedChatBackend::WhenExhausted;

const CustomInstruction kInstruction{"i-1", "Never use emojis.", std::nullopt, Category::presentation};

AuditConfig config_with_budget(int budget) {
  AuditConfig c;
  c.target_model = "target";
  c.auditor_model = "auditor";
  c.max_function_calls = budget;
  return c;
}

EngineOptions fixed_options(std::string id = "sess") {
  EngineOptions o;
  o.session_id = std::move(id);
  o.clock = [] { return Timestamp{std::chrono::milliseconds{1'000'000}}; };
  return o;
}

TEST(Prompt, ContainsInstructionAndBudget) {
  const auto p = build_auditor_prompt(kInstruction, config_with_budget(17));
  EXPECT_NE(p.find("Never use emojis."), std::string::npos);
  EXPECT_NE(p.find("17"), std::string::npos);
}

TEST(Prompt, HintsAreTheFinalSection) {
  auto c = config_with_budget(5);
  c.steering_hints = "focus on multi-turn drift";
  const auto p = build_auditor_prompt(kInstruction, c);
  const std::string tail = "focus on multi-turn drift";
  ASSERT_GE(p.size(), tail.size());
  EXPECT_EQ(p.substr(p.size() - tail.size()), tail);
  EXPECT_EQ(build_auditor_prompt(kInstruction, config_with_budget(5)).find("focus"), std::string::npos);
}

TEST(Prompt, TemplateDiffersOnlyInSlots) {
  const CustomInstruction other{"i-2", "Reply in French.", std::nullopt, Category::presentation};
  auto a = build_auditor_prompt(kInstruction, config_with_budget(9));
  auto b = build_auditor_prompt(other, config_with_budget(9));
  a.replace(a.find(kInstruction.text), kInstruction.text.size(), "<slot>");
  b.replace(b.find(other.text), other.text.size(), "<slot>");
  EXPECT_EQ(a, b);
}

TEST(Prompt, FourToolSchemas) {
  const auto tools = auditor_tool_schemas();
  ASSERT_EQ(tools.size(), 4u);
  EXPECT_EQ(tools[0].name, "start_conversation");
  EXPECT_EQ(tools[3].name, "end_audit");
  for (const auto& t : tools) EXPECT_EQ(t.parameters.at("type"), "object");
}

TEST(Engine, StartFlagEnd) {
  ScriptedChatBackend auditor({tool_call_response("start_conversation", {{"initial_prompt", "What is 2+2?"}}),
                               tool_call_response("flag_for_review", {{"conversation_id", "conv-1"},
                                                                      {"rationale", "emoji"}}),
                               tool_call_response("end_audit", {{"reason", "done"}})});
  auto target = ScriptedChatBackend::from_replies({"4 🎉"});
  const auto s = run_audit(kInstruction, config_with_budget(20), auditor, *target, fixed_options());

  EXPECT_EQ(s.termination, Termination::auditor_ended);
  ASSERT_EQ(s.conversations.size(), 1u);
  const auto& conv = s.conversations[0];
  EXPECT_EQ(conv.id, "conv-1");
  ASSERT_EQ(conv.messages.size(), 3u);
  EXPECT_EQ(conv.messages[0].content, "Never use emojis.");
  EXPECT_EQ(conv.messages[2].content, "4 🎉");
  ASSERT_EQ(s.flags.size(), 1u);
  EXPECT_EQ(s.flags[0].id, "sess-flag-1");
  EXPECT_EQ(s.flags[0].message_index, 2u);
  EXPECT_EQ(s.tool_calls.size(), 3u);
  EXPECT_NO_THROW(validate(s));

  // The target saw the instruction as system prompt.
  const auto reqs = target->requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].messages[0].role, ChatRole::system);
  EXPECT_EQ(reqs[0].messages[0].content, "Never use emojis.");
  EXPECT_EQ(reqs[0].model, "target");
}

TEST(Engine, DispatchExamples) {
  auto auditor = ScriptedChatBackend::from_replies({});
  auto target = ScriptedChatBackend::from_replies({"hi there"}, Exhausted::cycle);
  AuditEngine engine(kInstruction, config_with_budget(10), *auditor, *target, fixed_options());

  const auto& r1 = engine.dispatch({"c1", "start_conversation", R"({"initial_prompt":"hello"})"});
  EXPECT_EQ(r1.outcome, Outcome::ok);
  EXPECT_NE(r1.result.find("conv-1"), std::string::npos);

  const auto& r2 = engine.dispatch({"c2", "send_message", R"({"conversation_id":"conv-9","message":"x"})"});
  EXPECT_EQ(r2.outcome, Outcome::error);
  EXPECT_NE(r2.result.find("unknown_conversation"), std::string::npos);
  EXPECT_EQ(engine.calls_used(), 2);

  const auto& r3 =
      engine.dispatch({"c3", "flag_for_review", R"({"conversation_id":"conv-1","rationale":"cited no sources"})"});
  EXPECT_EQ(r3.outcome, Outcome::ok);
  ASSERT_EQ(engine.session().flags.size(), 1u);
  EXPECT_EQ(engine.session().flags[0].conversation_id, "conv-1");
  EXPECT_EQ(engine.session().flags[0].rationale, "cited no sources");

  const auto& r4 = engine.dispatch({"c4", "send_message", "{not json"});
  EXPECT_EQ(r4.outcome, Outcome::error);
  EXPECT_EQ(r4.arguments, json("{not json"));
  EXPECT_NE(r4.result.find("malformed_arguments"), std::string::npos);

  const auto& r5 = engine.dispatch({"c5", "browse_web", "{}"});
  EXPECT_EQ(r5.name, ToolName::unknown);
  EXPECT_EQ(r5.outcome, Outcome::error);
  EXPECT_EQ(engine.calls_used(), 5);

  const auto& r6 = engine.dispatch({"c6", "send_message", R"({"conversation_id":"conv-1"})"});
  EXPECT_EQ(r6.outcome, Outcome::error);
  EXPECT_EQ(engine.session().conversations[0].messages.size(), 3u);
}

TEST(Engine, ImmediateEnd) {
  ScriptedChatBackend auditor({tool_call_response("end_audit", {{"reason", "nothing to test"}})});
  auto target = ScriptedChatBackend::from_replies({});
  const auto s = run_audit(kInstruction, config_with_budget(20), auditor, *target, fixed_options());
  EXPECT_EQ(s.termination, Termination::auditor_ended);
  EXPECT_TRUE(s.conversations.empty());
  EXPECT_EQ(s.tool_calls.size(), 1u);
}

TEST(Engine, BudgetExhaustedWithinOneTurn) {
  ChatResponse many;
  for (int i = 0; i < 5; ++i) {
    many.tool_calls.push_back({"", "start_conversation", R"({"initial_prompt":"q"})"});
  }
  ScriptedChatBackend auditor({many});
  auto target = ScriptedChatBackend::from_replies({"a"}, Exhausted::cycle);
  const auto s = run_audit(kInstruction, config_with_budget(3), auditor, *target, fixed_options());
  EXPECT_EQ(s.termination, Termination::budget_exhausted);
  EXPECT_EQ(s.tool_calls.size(), 3u);
  EXPECT_EQ(s.conversations.size(), 3u);
}

TEST(Engine, CallsAfterEndInSameTurnAreIgnored) {
  ChatResponse turn;
  turn.tool_calls.push_back({"a", "end_audit", R"({"reason":"r"})"});
  turn.tool_calls.push_back({"b", "start_conversation", R"({"initial_prompt":"q"})"});
  ScriptedChatBackend auditor({turn});
  auto target = ScriptedChatBackend::from_replies({"a"});
  const auto s = run_audit(kInstruction, config_with_budget(5), auditor, *target, fixed_options());
  EXPECT_EQ(s.tool_calls.size(), 1u);
  EXPECT_TRUE(s.conversations.empty());
}

TEST(Engine, PlainRepliesAreNudgedThenFail) {
  ScriptedChatBackend auditor({text_response("hmm"), tool_call_response("end_audit", {{"reason", "r"}})});
  auto target = ScriptedChatBackend::from_replies({});
  AuditEngine engine(kInstruction, config_with_budget(5), auditor, *target, fixed_options());
  const auto s = engine.run();
  EXPECT_EQ(s.termination, Termination::auditor_ended);
  EXPECT_EQ(s.tool_calls.size(), 1u);
  bool nudged = false;
  for (const auto& m : engine.auditor_context()) nudged |= m.content == std::string(kToolNudge);
  EXPECT_TRUE(nudged);

  ScriptedChatBackend chatty({text_response("a")}, Exhausted::cycle);
  const auto failed = run_audit(kInstruction, config_with_budget(5), chatty, *target, fixed_options());
  EXPECT_EQ(failed.termination, Termination::backend_error);
  EXPECT_EQ(chatty.consumed(), 4u);
  EXPECT_TRUE(failed.error);
}

TEST(Engine, AuditorFailureEndsWithBackendError) {
  ScriptedChatBackend auditor({tool_call_response("start_conversation", {{"initial_prompt", "q"}})});
  auto target = ScriptedChatBackend::from_replies({"r"});
  const auto s = run_audit(kInstruction, config_with_budget(5), auditor, *target, fixed_options());
  EXPECT_EQ(s.termination, Termination::backend_error);
  EXPECT_EQ(s.tool_calls.size(), 1u);
  EXPECT_NO_THROW(validate(s));
}

TEST(Engine, TargetFailureIsRecordedThenEndsSession) {
  ScriptedChatBackend auditor({tool_call_response("start_conversation", {{"initial_prompt", "q"}}),
                               tool_call_response("end_audit", {{"reason", "r"}})});
  auto target = ScriptedChatBackend::from_replies({});
  const auto s = run_audit(kInstruction, config_with_budget(5), auditor, *target, fixed_options());
  EXPECT_EQ(s.termination, Termination::backend_error);
  ASSERT_EQ(s.tool_calls.size(), 1u);
  EXPECT_EQ(s.tool_calls[0].outcome, Outcome::error);
}

TEST(Engine, ToolResultsReachTheAuditor) {
  ScriptedChatBackend auditor({tool_call_response("start_conversation", {{"initial_prompt", "q"}}, "x1"),
                               tool_call_response("end_audit", {{"reason", "r"}}, "x2")});
  auto target = ScriptedChatBackend::from_replies({"answer text"});
  run_audit(kInstruction, config_with_budget(5), auditor, *target, fixed_options());
  const auto reqs = auditor.requests();
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_EQ(reqs[0].tools.size(), 4u);
  EXPECT_EQ(reqs[0].messages[0].role, ChatRole::system);
  const auto& last = reqs[1].messages.back();
  EXPECT_EQ(last.role, ChatRole::tool);
  EXPECT_EQ(last.tool_call_id, "x1");
  EXPECT_NE(last.content->find("answer text"), std::string::npos);
}

TEST(Engine, IndependentSessions) {
  auto c = config_with_budget(4);
  c.sessions_per_instruction = 3;
  ScriptedChatBackend auditor({tool_call_response("start_conversation", {{"initial_prompt", "q"}}),
                               tool_call_response("end_audit", {{"reason", "r"}})},
                              Exhausted::cycle);
  auto target = ScriptedChatBackend::from_replies({"a"}, Exhausted::cycle);
  const auto sessions = run_audits(kInstruction, c, auditor, *target, [](int k) { return "s" + std::to_string(k); });
  ASSERT_EQ(sessions.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(sessions[k].id, "s" + std::to_string(k));
    EXPECT_EQ(sessions[k].conversations.size(), 1u);
    EXPECT_EQ(sessions[k].conversations[0].id, "conv-1");
  }
}

TEST(Engine, FuzzedScriptsStayValidAndWithinBudget) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const int budget = testing::uniform(rng, 1, 20);
    ScriptedChatBackend auditor(testing::random_auditor_script(rng, 0.05), Exhausted::cycle);
    auto target = ScriptedChatBackend::from_replies({"r1", "r2 🎉"}, Exhausted::cycle);
    const auto s = run_audit(kInstruction, config_with_budget(budget), auditor, *target, fixed_options());
    ASSERT_NE(s.termination, Termination::backend_error) << s.error.value_or("");
    EXPECT_LE(static_cast<int>(s.tool_calls.size()), budget);
    EXPECT_NO_THROW(validate(s));
  }
}

}  // namespace
}  // namespace offscript
