#include "offscript/metrics.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <unordered_set>

namespace offscript {

ContingencyTable ContingencyTable::from(const AgreementInput& input) {
  ContingencyTable t;
  for (const auto& item : input.items) {
    const bool a = item.a == Verdict::violation;
    const bool b = item.b == Verdict::violation;
    if (a && b) {
      ++t.both;
    } else if (a) {
      ++t.a_only;
    } else if (b) {
      ++t.b_only;
    } else {
      ++t.neither;
    }
  }
  return t;
}

double percent_agreement(const AgreementInput& input) {
  if (input.items.empty()) throw Error(ErrorCode::empty_input, "no co-annotated items");
  const auto t = ContingencyTable::from(input);
  return static_cast<double>(t.both + t.neither) / static_cast<double>(t.total());
}

double cohens_kappa(const ContingencyTable& t) {
  const auto n = static_cast<std::int64_t>(t.total());
  if (n == 0) throw Error(ErrorCode::empty_input, "no co-annotated items");
  const auto agree = static_cast<std::int64_t>(t.both + t.neither);
  const auto a_pos = static_cast<std::int64_t>(t.both + t.a_only);
  const auto b_pos = static_cast<std::int64_t>(t.both + t.b_only);
  // n^2 * p_e, kept in integers so the statistic is symmetric bit-for-bit.
  const auto chance = a_pos * b_pos + (n - a_pos) * (n - b_pos);
  if (chance == n * n) {
    if (agree == n) return 1.0;
    throw Error(ErrorCode::degenerate_marginals, "expected agreement is 1 but observed agreement is not");
  }
  return static_cast<double>(agree * n - chance) / static_cast<double>(n * n - chance);
}

double cohens_kappa(const AgreementInput& input) { return cohens_kappa(ContingencyTable::from(input)); }

VolumeStats flag_and_volume_stats(std::span<const AuditSession> sessions) {
  if (sessions.empty()) throw Error(ErrorCode::empty_input, "no sessions");
  VolumeStats s;
  std::set<std::string> instructions;
  std::set<std::string> flagged_instructions;
  std::size_t flagged_conversations = 0;
  for (const auto& session : sessions) {
    instructions.insert(session.instruction.id);
    if (!session.flags.empty()) flagged_instructions.insert(session.instruction.id);
    s.conversations += session.conversations.size();
    s.flags += session.flags.size();
    std::unordered_set<std::string> flagged;
    for (const auto& f : session.flags) flagged.insert(f.conversation_id);
    flagged_conversations += flagged.size();
  }
  s.sessions = sessions.size();
  s.instructions = instructions.size();
  s.flag_rate_instructions = {flagged_instructions.size(), instructions.size()};
  s.flag_rate_conversations = {flagged_conversations, s.conversations};
  s.mean_conversations_per_instruction =
      static_cast<double>(s.conversations) / static_cast<double>(s.instructions);
  return s;
}

AgreementInput build_agreement_input(std::span<const std::string> flag_ids, std::span<const ReviewLabel> labels) {
  const std::unordered_set<std::string> wanted(flag_ids.begin(), flag_ids.end());
  std::set<std::string> annotators;
  std::map<std::string, std::map<std::string, Verdict>> by_flag;
  for (const auto& label : labels) {
    if (wanted.count(label.flag_id) == 0) continue;
    annotators.insert(label.annotator_id);
    by_flag[label.flag_id][label.annotator_id] = label.verdict;  // later labels win
  }
  if (annotators.size() > 2) {
    throw Error(ErrorCode::too_many_annotators,
                std::to_string(annotators.size()) + " annotators found; Cohen's kappa needs exactly two");
  }

  AgreementInput input;
  if (annotators.size() < 2) return input;
  input.annotator_a = *annotators.begin();
  input.annotator_b = *annotators.rbegin();
  std::unordered_set<std::string> seen;
  for (const auto& id : flag_ids) {
    if (!seen.insert(id).second) continue;
    auto it = by_flag.find(id);
    if (it == by_flag.end()) continue;
    auto a = it->second.find(input.annotator_a);
    auto b = it->second.find(input.annotator_b);
    if (a == it->second.end() || b == it->second.end()) continue;
    input.items.push_back({id, a->second, b->second});
  }
  return input;
}

ViolationStats violation_rates(const AgreementInput& input) {
  if (input.items.empty()) throw Error(ErrorCode::no_coannotated_items, "no flag is labelled by both annotators");
  const auto t = ContingencyTable::from(input);
  const auto n = t.total();
  ViolationStats s;
  s.coannotated = n;
  s.unanimous_violation_rate = {t.both, n};
  s.any_annotator_rate = {t.both + t.a_only + t.b_only, n};
  s.annotator_a = {input.annotator_a, {t.both + t.a_only, n}};
  s.annotator_b = {input.annotator_b, {t.both + t.b_only, n}};
  return s;
}

ViolationStats violation_rates(std::span<const std::string> flag_ids, std::span<const ReviewLabel> labels) {
  return violation_rates(build_agreement_input(flag_ids, labels));
}

std::vector<std::string> all_flag_ids(std::span<const AuditSession> sessions) {
  std::vector<std::string> ids;
  for (const auto& s : sessions) {
    for (const auto& f : s.flags) ids.push_back(f.id);
  }
  return ids;
}

ReportMetrics compute_report(std::span<const AuditSession> sessions, std::span<const ReviewLabel> labels) {
  ReportMetrics m;
  if (sessions.empty()) {
    m.notes.push_back("No audit sessions in the store.");
    return m;
  }

  const auto volume = flag_and_volume_stats(sessions);
  m.instructions = volume.instructions;
  m.sessions = volume.sessions;
  m.conversations = volume.conversations;
  m.flags = volume.flags;
  m.flag_rate_instructions = volume.flag_rate_instructions;
  m.flag_rate_conversations = volume.flag_rate_conversations;
  m.mean_conversations_per_instruction = volume.mean_conversations_per_instruction;

  const auto flag_ids = all_flag_ids(sessions);
  AgreementInput input;
  try {
    input = build_agreement_input(flag_ids, labels);
  } catch (const Error& e) {
    m.notes.push_back(std::string("Agreement statistics unavailable: ") + e.what() + ".");
    return m;
  }
  if (input.items.empty()) {
    m.notes.push_back("Agreement statistics unavailable: no flag is labelled by both annotators yet.");
    return m;
  }

  const auto v = violation_rates(input);
  m.coannotated_flags = v.coannotated;
  m.unanimous_violation_rate = v.unanimous_violation_rate;
  m.any_annotator_rate = v.any_annotator_rate;
  m.annotator_rates = {v.annotator_a, v.annotator_b};
  m.percent_agreement = percent_agreement(input);
  try {
    m.kappa = cohens_kappa(input);
  } catch (const Error& e) {
    m.notes.push_back(std::string("Cohen's kappa undefined: ") + e.what() + ".");
  }
  m.notes.push_back("Violation rates, per-annotator rates, percent agreement and kappa use the " +
                    std::to_string(v.coannotated) + " flags labelled by both annotators as denominator.");
  return m;
}

}  // namespace offscript
