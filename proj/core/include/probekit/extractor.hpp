#pragma once

// Interface to the model-running extractor. The extractor lives outside this
// library; it writes dataset directories and rerun files in the formats read
// by dataset.hpp and correction.hpp. Nothing here runs a model.

#include "probekit/correction.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace probekit {

inline constexpr std::string_view kPureArithSystemMessage =
    "You are a helpful assistant that calculates the sum of two numbers. Always provide your "
    "answer in the format <<x+y=z>> where x is the first number, y is the second number, and z "
    "is their sum. Do not provide any additional explanation.";

struct PromptTemplate {
  std::string system_message{kPureArithSystemMessage};
  std::vector<std::pair<std::string, std::string>> few_shot_pairs;  // user, assistant
  std::string target_format = "<<x+y=z>>";
};

struct ExtractionConfig {
  std::string model_id;
  int n_shots = 2;  // 0 to 2
  int operand_min = 100;
  int operand_max = 999;
  std::string digit_position = "hundreds";
  std::string token_rule = "equals_sign";
  std::uint64_t seed = 0;
};

/// True when both operands are in range and, for three-digit operands, the sum
/// stays below 1000.
inline bool operand_pair_allowed(const ExtractionConfig& cfg, std::int64_t a, std::int64_t b) {
  const auto in_range = [&](std::int64_t v) { return v >= cfg.operand_min && v <= cfg.operand_max; };
  if (!in_range(a) || !in_range(b)) return false;
  return cfg.operand_max != 999 || a + b < 1000;
}

/// Hand-authored CoT template with operand slots x1..xk.
struct CotTemplate {
  std::string name;
  std::string question;
  std::vector<std::string> operand_slots;
};

class Extractor {
 public:
  virtual ~Extractor() = default;

  /// Writes a balanced pure-arithmetic dataset directory.
  virtual void generate_pure_dataset(const ExtractionConfig& cfg,
                                     const std::filesystem::path& out) = 0;
  /// Writes a structured-CoT dataset directory and its steps file.
  virtual void generate_cot_dataset(const std::vector<CotTemplate>& templates,
                                    const ExtractionConfig& cfg,
                                    const std::filesystem::path& out) = 0;
  /// One rerun per flagged step; unparseable continuations give no result.
  virtual RerunMap run_reruns(const CorrectionPlan& plan, const ExtractionConfig& cfg) = 0;
};

}  // namespace probekit
