#pragma once

// Audit volume, flag rates and two-annotator agreement statistics.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offscript/domain.hpp"

namespace offscript {

// Exact fraction; value() is the only floating-point step.
struct Rate {
  std::size_t numerator = 0;
  std::size_t denominator = 0;

  double value() const {
    return denominator == 0 ? 0.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  bool operator==(const Rate&) const = default;
};

struct CoLabel {
  std::string flag_id;
  Verdict a = Verdict::not_violation;
  Verdict b = Verdict::not_violation;
};

// Flags labelled by both annotators.
struct AgreementInput {
  std::string annotator_a;
  std::string annotator_b;
  std::vector<CoLabel> items;
};

// 2x2 table of (annotator A, annotator B) verdicts.
struct ContingencyTable {
  std::size_t both = 0;     // violation / violation
  std::size_t a_only = 0;   // violation / not_violation
  std::size_t b_only = 0;   // not_violation / violation
  std::size_t neither = 0;  // not_violation / not_violation

  static ContingencyTable from(const AgreementInput& input);
  std::size_t total() const { return both + a_only + b_only + neither; }
};

// Fraction of items with equal verdicts. Throws empty_input.
double percent_agreement(const AgreementInput& input);

// Cohen's kappa: (p_o - p_e) / (1 - p_e) with p_e from the two annotators'
// marginals. When p_e == 1 the result is 1 if p_o == 1; otherwise
// degenerate_marginals. Throws empty_input.
double cohens_kappa(const AgreementInput& input);
double cohens_kappa(const ContingencyTable& table);

struct VolumeStats {
  std::size_t instructions = 0;
  std::size_t sessions = 0;
  std::size_t conversations = 0;
  std::size_t flags = 0;
  Rate flag_rate_instructions;   // instructions with >= 1 flag
  Rate flag_rate_conversations;  // conversations with >= 1 flag
  double mean_conversations_per_instruction = 0.0;
};

// Throws empty_input for no sessions.
VolumeStats flag_and_volume_stats(std::span<const AuditSession> sessions);

struct AnnotatorRate {
  std::string annotator_id;
  Rate rate;
  bool operator==(const AnnotatorRate&) const = default;
};

struct ViolationStats {
  std::size_t coannotated = 0;
  Rate unanimous_violation_rate;
  Rate any_annotator_rate;
  AnnotatorRate annotator_a;
  AnnotatorRate annotator_b;
};

// Pairs up labels on the given flags. Labels on other flags are ignored.
// Throws too_many_annotators if more than two annotator ids appear.
AgreementInput build_agreement_input(std::span<const std::string> flag_ids, std::span<const ReviewLabel> labels);

// Rates over the co-annotated subset. Throws no_coannotated_items.
ViolationStats violation_rates(std::span<const std::string> flag_ids, std::span<const ReviewLabel> labels);
ViolationStats violation_rates(const AgreementInput& input);

struct ReportMetrics {
  std::optional<std::size_t> instructions;
  std::optional<std::size_t> sessions;
  std::optional<std::size_t> conversations;
  std::optional<std::size_t> flags;
  std::optional<Rate> flag_rate_instructions;
  std::optional<Rate> flag_rate_conversations;
  std::optional<double> mean_conversations_per_instruction;

  std::optional<std::size_t> coannotated_flags;
  std::optional<Rate> unanimous_violation_rate;
  std::optional<Rate> any_annotator_rate;
  std::vector<AnnotatorRate> annotator_rates;
  std::optional<double> percent_agreement;
  std::optional<double> kappa;

  std::vector<std::string> notes;

  bool operator==(const ReportMetrics&) const = default;
};

std::vector<std::string> all_flag_ids(std::span<const AuditSession> sessions);

// Everything computable from the current data; missing pieces are left empty
// and explained in `notes`.
ReportMetrics compute_report(std::span<const AuditSession> sessions, std::span<const ReviewLabel> labels);

enum class ReportFormat { json, markdown };

std::string build_report(const ReportMetrics& metrics, ReportFormat format);
nlohmann::json report_to_json(const ReportMetrics& metrics);
ReportMetrics report_from_json(const nlohmann::json& document);

}  // namespace offscript
