#pragma once

#include "probekit/dataset.hpp"
#include "probekit/detectors.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probekit {

enum class MessageKind { suspicious, neutral, specific, stronger, detailed };

inline constexpr std::array<MessageKind, 5> kAllMessageKinds = {
    MessageKind::suspicious, MessageKind::neutral, MessageKind::specific,
    MessageKind::stronger, MessageKind::detailed};

std::string_view to_string(MessageKind kind);
MessageKind parse_message_kind(std::string_view text);
/// The corrective sentence appended after a flagged step.
std::string_view message_text(MessageKind kind);

struct ParsedStep {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t c = 0;
  std::string prefix;  // "<<a+b=" exactly as written
};

/// Parses `<<a+b=c>>`; spaces around the numbers and symbols are allowed.
/// Throws ParseError on anything else.
ParsedStep parse_step(std::string_view text);

struct CotStep {
  std::int64_t record_id = 0;
  std::string step_text;
  std::array<std::int64_t, 2> operands{};
  std::int64_t model_result = 0;
  std::int64_t gt_result = 0;
  bool correct_full = true;
};

CotStep make_step(std::int64_t record_id, std::string step_text, std::int64_t gt_result);

/// Index of the first incorrect step, or 0 when all are correct.
/// Throws ArgumentError on an empty list.
std::size_t select_probe_step(std::span<const CotStep> steps);

/// Message text, a newline, then the step up to and including "=".
std::string continuation_prompt(MessageKind message, const CotStep& step);

using StepMap = std::map<std::int64_t, CotStep>;

struct FlaggedStep {
  std::int64_t record_id = 0;
  std::string prompt;

  friend bool operator==(const FlaggedStep&, const FlaggedStep&) = default;
};

struct CorrectionPlan {
  std::vector<FlaggedStep> flagged;
  MessageKind message = MessageKind::suspicious;
  DetectorKind detector_kind = DetectorKind::mlp_single;
  int layer = 0;
};

/// Plan for an explicit set of flagged record ids, kept in the given order.
/// Throws PlanError when an id has no step.
CorrectionPlan build_plan(std::span<const std::int64_t> flagged_ids, const StepMap& steps,
                          MessageKind message);

/// Flags every record the detector predicts incorrect. Requires the
/// full_number correctness basis; throws PlanError otherwise or when a
/// flagged record has no step.
CorrectionPlan plan_corrections(const ActivationDataset& ds, const StepMap& steps,
                                const ErrorDetector& detector, int layer,
                                MessageKind message);

struct CorrectionOutcome {
  std::int64_t tp_flagged = 0;
  std::int64_t fp_flagged = 0;
  std::int64_t tp_corrected = 0;
  std::int64_t fp_preserved = 0;
  double tp_correction_rate = 0.0;    // 0 when tp_flagged is 0
  double fp_preservation_rate = 0.0;  // 0 when fp_flagged is 0
};

/// A null rerun result counts as neither corrected nor preserved.
using RerunMap = std::map<std::int64_t, std::optional<std::int64_t>>;

/// TP = flagged and originally wrong, corrected iff rerun == gt_result.
/// FP = flagged and originally right, preserved iff rerun == model_result.
/// Throws ScoreError when a flagged id has no rerun row or no step.
CorrectionOutcome score_corrections(const CorrectionPlan& plan, const RerunMap& reruns,
                                    const StepMap& steps);

/// "11.80%": a rate as a percentage with two decimals.
std::string format_percent(double rate);

// ---- JSONL ----------------------------------------------------------------
//
// plan rows   {"record_id", "prompt"}
// rerun rows  {"record_id", "result"}            result may be null
// step rows   {"record_id", "step_text", "gt_result"}
//
// Readers throw FormatError on malformed rows or duplicate ids.

void write_plan_jsonl(const CorrectionPlan& plan, const std::filesystem::path& path);
std::vector<FlaggedStep> read_plan_jsonl(const std::filesystem::path& path);

void write_reruns_jsonl(const RerunMap& reruns, const std::filesystem::path& path);
RerunMap read_reruns_jsonl(const std::filesystem::path& path);

void write_steps_jsonl(const StepMap& steps, const std::filesystem::path& path);
StepMap read_steps_jsonl(const std::filesystem::path& path);

}  // namespace probekit
