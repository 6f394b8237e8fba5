#include "probekit/correction.hpp"

#include "probekit/errors.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>

namespace probekit {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

class StepScanner {
 public:
  explicit StepScanner(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) != token) {
      fail("expected '" + std::string(token) + "'");
    }
    pos_ += token.size();
  }

  std::int64_t number() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected a nonnegative integer");
    std::int64_t value = 0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (res.ec != std::errc{}) fail("integer out of range");
    return value;
  }

  void expect_end() {
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters");
  }

  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("malformed step '" + std::string(text_) + "': " + what + " at offset " +
                     std::to_string(pos_));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::vector<ojson> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file " + path.string());
  std::vector<ojson> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(ojson::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!rows.back().is_object()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected an object");
    }
  }
  return rows;
}

void write_lines(const fs::path& path, const std::vector<ojson>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& row : rows) out << row.dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename F>
auto field(const fs::path& path, std::size_t row, F&& read) {
  try {
    return read();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + " row " + std::to_string(row + 1) + ": " + e.what());
  }
}

double rate(std::int64_t num, std::int64_t den) {
  return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::suspicious: return "suspicious";
    case MessageKind::neutral: return "neutral";
    case MessageKind::specific: return "specific";
    case MessageKind::stronger: return "stronger";
    case MessageKind::detailed: return "detailed";
  }
  return "unknown";
}

MessageKind parse_message_kind(std::string_view text) {
  for (MessageKind kind : kAllMessageKinds) {
    if (text == to_string(kind)) return kind;
  }
  throw ArgumentError("unknown message kind '" + std::string(text) + "'");
}

std::string_view message_text(MessageKind kind) {
  switch (kind) {
    case MessageKind::suspicious:
      return "That step looks suspicious. Let's re-do just this step:";
    case MessageKind::neutral:
      return "That step looks incorrect. Let's re-do just this step:";
    case MessageKind::specific:
      return "The calculation in this step is incorrect. Let's recalculate:";
    case MessageKind::stronger:
      return "That's definitely wrong. The correct calculation should be:";
    case MessageKind::detailed:
      return "I made an error in adding these numbers. Let me compute the sum correctly "
             "step by step:";
  }
  return "";
}

ParsedStep parse_step(std::string_view text) {
  StepScanner scan(text);
  scan.skip_space();
  const std::size_t start = scan.pos();
  scan.expect("<<");
  ParsedStep step;
  step.a = scan.number();
  scan.expect("+");
  step.b = scan.number();
  scan.expect("=");
  step.prefix = std::string(text.substr(start, scan.pos() - start));
  step.c = scan.number();
  scan.expect(">>");
  scan.expect_end();
  return step;
}

CotStep make_step(std::int64_t record_id, std::string step_text, std::int64_t gt_result) {
  const ParsedStep parsed = parse_step(step_text);
  CotStep step;
  step.record_id = record_id;
  step.step_text = std::move(step_text);
  step.operands = {parsed.a, parsed.b};
  step.model_result = parsed.c;
  step.gt_result = gt_result;
  step.correct_full = parsed.c == gt_result;
  return step;
}

std::size_t select_probe_step(std::span<const CotStep> steps) {
  if (steps.empty()) throw ArgumentError("select_probe_step needs at least one step");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!steps[i].correct_full) return i;
  }
  return 0;
}

std::string continuation_prompt(MessageKind message, const CotStep& step) {
  return std::string(message_text(message)) + "\n" + parse_step(step.step_text).prefix;
}

CorrectionPlan build_plan(std::span<const std::int64_t> flagged_ids, const StepMap& steps,
                          MessageKind message) {
  CorrectionPlan plan;
  plan.message = message;
  plan.flagged.reserve(flagged_ids.size());
  for (std::int64_t id : flagged_ids) {
    const auto it = steps.find(id);
    if (it == steps.end()) throw PlanError("record " + std::to_string(id) + " has no step");
    plan.flagged.push_back({id, continuation_prompt(message, it->second)});
  }
  return plan;
}

CorrectionPlan plan_corrections(const ActivationDataset& ds, const StepMap& steps,
                                const ErrorDetector& detector, int layer,
                                MessageKind message) {
  if (ds.manifest.correctness_basis != CorrectnessBasis::full_number) {
    throw PlanError("correction planning needs a full_number correctness basis, dataset has " +
                    std::string(to_string(ds.manifest.correctness_basis)));
  }
  std::vector<std::int64_t> flagged;
  if (!ds.empty()) {
    const std::vector<int> predicted = detect_batch(detector, ds.layer_matrix(layer));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i] == 0) flagged.push_back(ds.records[i].record_id);
    }
  }
  CorrectionPlan plan = build_plan(flagged, steps, message);
  plan.detector_kind = detector.kind;
  plan.layer = layer;
  return plan;
}

CorrectionOutcome score_corrections(const CorrectionPlan& plan, const RerunMap& reruns,
                                    const StepMap& steps) {
  CorrectionOutcome out;
  for (const auto& flagged : plan.flagged) {
    const auto step_it = steps.find(flagged.record_id);
    if (step_it == steps.end()) {
      throw ScoreError("flagged record " + std::to_string(flagged.record_id) + " has no step");
    }
    const auto rerun_it = reruns.find(flagged.record_id);
    if (rerun_it == reruns.end()) {
      throw ScoreError("flagged record " + std::to_string(flagged.record_id) +
                       " has no rerun result");
    }
    const CotStep& step = step_it->second;
    const std::optional<std::int64_t>& result = rerun_it->second;
    if (step.correct_full) {
      ++out.fp_flagged;
      if (result && *result == step.model_result) ++out.fp_preserved;
    } else {
      ++out.tp_flagged;
      if (result && *result == step.gt_result) ++out.tp_corrected;
    }
  }
  out.tp_correction_rate = rate(out.tp_corrected, out.tp_flagged);
  out.fp_preservation_rate = rate(out.fp_preserved, out.fp_flagged);
  return out;
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", value * 100.0);
  return buf;
}

// ---- JSONL ----------------------------------------------------------------

void write_plan_jsonl(const CorrectionPlan& plan, const fs::path& path) {
  std::vector<ojson> rows;
  rows.reserve(plan.flagged.size());
  for (const auto& f : plan.flagged) rows.push_back({{"record_id", f.record_id}, {"prompt", f.prompt}});
  write_lines(path, rows);
}

std::vector<FlaggedStep> read_plan_jsonl(const fs::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<FlaggedStep> out;
  std::set<std::int64_t> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    FlaggedStep f = field(path, i, [&] {
      return FlaggedStep{rows[i].at("record_id").get<std::int64_t>(),
                         rows[i].at("prompt").get<std::string>()};
    });
    if (!seen.insert(f.record_id).second) {
      throw FormatError(path.string() + ": duplicate record_id " + std::to_string(f.record_id));
    }
    out.push_back(std::move(f));
  }
  return out;
}

void write_reruns_jsonl(const RerunMap& reruns, const fs::path& path) {
  std::vector<ojson> rows;
  for (const auto& [id, result] : reruns) {
    rows.push_back({{"record_id", id}, {"result", result ? ojson(*result) : ojson(nullptr)}});
  }
  write_lines(path, rows);
}

RerunMap read_reruns_jsonl(const fs::path& path) {
  const auto rows = read_jsonl(path);
  RerunMap out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [id, result] = field(path, i, [&] {
      const auto& r = rows[i].at("result");
      std::optional<std::int64_t> value;
      if (!r.is_null()) value = r.get<std::int64_t>();
      return std::pair{rows[i].at("record_id").get<std::int64_t>(), value};
    });
    if (!out.emplace(id, result).second) {
      throw FormatError(path.string() + ": duplicate record_id " + std::to_string(id));
    }
  }
  return out;
}

void write_steps_jsonl(const StepMap& steps, const fs::path& path) {
  std::vector<ojson> rows;
  for (const auto& [id, step] : steps) {
    rows.push_back({{"record_id", id}, {"step_text", step.step_text}, {"gt_result", step.gt_result}});
  }
  write_lines(path, rows);
}

StepMap read_steps_jsonl(const fs::path& path) {
  const auto rows = read_jsonl(path);
  StepMap out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CotStep step = field(path, i, [&] {
      return make_step(rows[i].at("record_id").get<std::int64_t>(),
                       rows[i].at("step_text").get<std::string>(),
                       rows[i].at("gt_result").get<std::int64_t>());
    });
    const std::int64_t id = step.record_id;
    if (!out.emplace(id, std::move(step)).second) {
      throw FormatError(path.string() + ": duplicate record_id " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace probekit
