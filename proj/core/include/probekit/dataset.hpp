#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probekit {

enum class Setting { pure_arith, structured_cot };
enum class Split { train, test };
enum class CorrectnessBasis { digit, full_number };

/// Which digit label a probe, sampler or splitter keys on.
enum class DigitTarget { model_digit, gt_digit };

std::string_view to_string(Setting value);
std::string_view to_string(Split value);
std::string_view to_string(CorrectnessBasis value);
std::string_view to_string(DigitTarget value);

Setting parse_setting(std::string_view text);
Split parse_split(std::string_view text);
CorrectnessBasis parse_correctness_basis(std::string_view text);
/// Accepts "model_digit"/"gt_digit" and the short CLI forms "model"/"gt".
DigitTarget parse_digit_target(std::string_view text);

struct RecordLabel {
  std::int64_t record_id = 0;
  int model_digit = 0;
  int gt_digit = 0;
  bool correct = true;
  Setting setting = Setting::pure_arith;
  std::vector<std::int64_t> operands;
  std::optional<int> step_index;
  Split split = Split::train;

  int digit(DigitTarget target) const {
    return target == DigitTarget::model_digit ? model_digit : gt_digit;
  }

  friend bool operator==(const RecordLabel&, const RecordLabel&) = default;
};

struct LayerFile {
  int index = 0;
  std::string file;

  friend bool operator==(const LayerFile&, const LayerFile&) = default;
};

struct Manifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  int d_model = 0;
  int n_layers = 0;
  std::int64_t n_records = 0;
  std::string model_name;
  std::string digit_position = "hundreds";
  CorrectnessBasis correctness_basis = CorrectnessBasis::digit;
  std::string token_rule = "equals_sign";
  std::vector<LayerFile> layers;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

using ActivationMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-layer activations at one token position plus one label per row.
///
/// Row i of every layer matrix belongs to records[i]. The dataset is treated
/// as immutable once loaded or built; every transformation returns a copy.
struct ActivationDataset {
  Manifest manifest;
  std::vector<RecordLabel> records;
  std::vector<ActivationMatrix> activations;  // aligned with manifest.layers

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  int d_model() const { return manifest.d_model; }
  int n_layers() const { return manifest.n_layers; }

  bool has_layer(int layer_index) const;
  const ActivationMatrix& layer(int layer_index) const;
  /// Copy of one layer widened to double, the precision probes compute in.
  Eigen::MatrixXd layer_matrix(int layer_index) const;

  std::vector<int> digits(DigitTarget target) const;
  std::vector<int> correctness() const;

  /// New dataset holding the given rows in the given order.
  ActivationDataset select(std::span<const std::size_t> rows) const;

  /// Checks every invariant; throws ShapeError, DataError or FormatError.
  void validate() const;
};

/// Builds a manifest with default file names for layers 0..n_layers-1.
Manifest make_manifest(int d_model, int n_layers, std::int64_t n_records,
                       std::string model_name = "synthetic");

ActivationDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const ActivationDataset& ds, const std::filesystem::path& dir);

std::string layer_file_name(int layer_index);

struct SamplingConfig {
  int per_class_cap = 100;
  DigitTarget class_key = DigitTarget::model_digit;
  int digit_min = 2;
  int digit_max = 9;
  bool require_error_mix = true;
  std::uint64_t seed = 0;
};

/// Groups records by `class_key` digit and keeps at most `per_class_cap`
/// per class inside [digit_min, digit_max]; records outside the range are
/// dropped. With `require_error_mix`, each capped class draws up to half of
/// the cap from its incorrect records and fills the rest with correct ones
/// (or vice versa when one side runs short). Output keeps input row order.
ActivationDataset balanced_sample(const ActivationDataset& ds,
                                  const SamplingConfig& cfg);

struct DatasetSplit {
  ActivationDataset train;
  ActivationDataset test;
};

/// Stratified split on the joint (digit, correct) key. Each stratum sends
/// round-half-up(train_fraction * size) records to train; a stratum of one
/// record always goes to train. Records carry the split they landed in.
DatasetSplit split_dataset(const ActivationDataset& ds, double train_fraction,
                           std::uint64_t seed,
                           DigitTarget stratify_key = DigitTarget::model_digit);

}  // namespace probekit
