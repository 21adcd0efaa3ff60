#include <random>

#include <benchmark/benchmark.h>

#include "offscript/engine.hpp"
#include "offscript/metrics.hpp"
#include "offscript/persistence.hpp"

namespace {

using namespace offscript;

AgreementInput random_input(std::size_t n) {
  std::mt19937_64 rng(1);
  AgreementInput input{"A", "B", {}};
  for (std::size_t i = 0; i < n; ++i) {
    input.items.push_back({"f" + std::to_string(i), rng() % 2 ? Verdict::violation : Verdict::not_violation,
                           rng() % 3 ? Verdict::violation : Verdict::not_violation});
  }
  return input;
}

void BM_CohensKappa(benchmark::State& state) {
  const auto input = random_input(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cohens_kappa(input));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CohensKappa)->Range(8, 8 << 10);

std::vector<ChatResponse> long_script(int calls) {
  std::vector<ChatResponse> turns{tool_call_response("start_conversation", {{"initial_prompt", "hello"}})};
  for (int i = 1; i < calls; ++i) {
    turns.push_back(tool_call_response("send_message", {{"conversation_id", "conv-1"}, {"message", "more"}}));
  }
  return turns;
}

void BM_ScriptedAudit(benchmark::State& state) {
  const int budget = static_cast<int>(state.range(0));
  const CustomInstruction instruction{"b-1", "Answer tersely.", std::nullopt, Category::presentation};
  AuditConfig config{"t", "a", budget, 1, {}, {}, {}};
  const auto script = long_script(budget);
  for (auto _ : state) {
    ScriptedChatBackend auditor(script);
    auto target = ScriptedChatBackend::from_replies({"ok"}, ScriptedChatBackend::WhenExhausted::cycle);
    benchmark::DoNotOptimize(run_audit(instruction, config, auditor, *target));
  }
}
BENCHMARK(BM_ScriptedAudit)->Arg(5)->Arg(20)->Arg(80);

void BM_SessionRoundTrip(benchmark::State& state) {
  const CustomInstruction instruction{"b-1", "Answer tersely.", std::nullopt, Category::presentation};
  ScriptedChatBackend auditor(long_script(20));
  auto target = ScriptedChatBackend::from_replies({"a reply of moderate length 🎉"},
                                                  ScriptedChatBackend::WhenExhausted::cycle);
  const auto session = run_audit(instruction, {"t", "a", 20, 1, {}, {}, {}}, auditor, *target);
  for (auto _ : state) benchmark::DoNotOptimize(parse_session(serialize_session(session)));
}
BENCHMARK(BM_SessionRoundTrip);

}  // namespace

BENCHMARK_MAIN();
