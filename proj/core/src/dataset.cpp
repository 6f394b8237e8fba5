#include "probekit/dataset.hpp"

#include "probekit/errors.hpp"
#include "probekit/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace probekit {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Setting value) {
  return value == Setting::pure_arith ? "pure_arith" : "structured_cot";
}

std::string_view to_string(Split value) {
  return value == Split::train ? "train" : "test";
}

std::string_view to_string(CorrectnessBasis value) {
  return value == CorrectnessBasis::digit ? "digit" : "full_number";
}

std::string_view to_string(DigitTarget value) {
  return value == DigitTarget::model_digit ? "model_digit" : "gt_digit";
}

Setting parse_setting(std::string_view text) {
  if (text == "pure_arith") return Setting::pure_arith;
  if (text == "structured_cot") return Setting::structured_cot;
  throw FormatError("unknown setting '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

CorrectnessBasis parse_correctness_basis(std::string_view text) {
  if (text == "digit") return CorrectnessBasis::digit;
  if (text == "full_number") return CorrectnessBasis::full_number;
  throw FormatError("unknown correctness_basis '" + std::string(text) + "'");
}

DigitTarget parse_digit_target(std::string_view text) {
  if (text == "model_digit" || text == "model") return DigitTarget::model_digit;
  if (text == "gt_digit" || text == "gt") return DigitTarget::gt_digit;
  throw ArgumentError("unknown digit target '" + std::string(text) + "'");
}

std::string layer_file_name(int layer_index) {
  return "act_layer" + std::to_string(layer_index) + ".f32";
}

Manifest make_manifest(int d_model, int n_layers, std::int64_t n_records,
                       std::string model_name) {
  Manifest m;
  m.d_model = d_model;
  m.n_layers = n_layers;
  m.n_records = n_records;
  m.model_name = std::move(model_name);
  for (int l = 0; l < n_layers; ++l) m.layers.push_back({l, layer_file_name(l)});
  return m;
}

// ---------------------------------------------------------------------------
// ActivationDataset

bool ActivationDataset::has_layer(int layer_index) const {
  return std::any_of(manifest.layers.begin(), manifest.layers.end(),
                     [&](const LayerFile& f) { return f.index == layer_index; });
}

const ActivationMatrix& ActivationDataset::layer(int layer_index) const {
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    if (manifest.layers[i].index == layer_index) return activations.at(i);
  }
  throw ArgumentError("dataset has no layer " + std::to_string(layer_index));
}

Eigen::MatrixXd ActivationDataset::layer_matrix(int layer_index) const {
  return layer(layer_index).cast<double>();
}

std::vector<int> ActivationDataset::digits(DigitTarget target) const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.digit(target));
  return out;
}

std::vector<int> ActivationDataset::correctness() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.correct ? 1 : 0);
  return out;
}

ActivationDataset ActivationDataset::select(
    std::span<const std::size_t> rows) const {
  ActivationDataset out;
  out.manifest = manifest;
  out.manifest.n_records = static_cast<std::int64_t>(rows.size());
  out.records.reserve(rows.size());
  for (std::size_t r : rows) out.records.push_back(records.at(r));
  out.activations.reserve(activations.size());
  for (const auto& m : activations) {
    ActivationMatrix sub(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sub.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    out.activations.push_back(std::move(sub));
  }
  return out;
}

namespace {

// Label-level violations surface as DataError when reading a file and as
// ValidationError when refusing to write one.
template <typename LabelError>
void check_dataset(const ActivationDataset& ds) {
  const Manifest& m = ds.manifest;
  if (m.format_version != Manifest::kFormatVersion) {
    throw FormatError("unsupported format_version " + std::to_string(m.format_version));
  }
  if (m.d_model <= 0) throw FormatError("d_model must be positive");
  if (m.n_layers <= 0) throw FormatError("n_layers must be positive");
  if (m.n_records < 0) throw FormatError("n_records must be nonnegative");
  if (static_cast<int>(m.layers.size()) != m.n_layers) {
    throw ShapeError("manifest lists " + std::to_string(m.layers.size()) +
                     " layers but n_layers is " + std::to_string(m.n_layers));
  }
  std::set<int> layer_ids;
  for (const auto& f : m.layers) {
    if (!layer_ids.insert(f.index).second) {
      throw FormatError("duplicate layer index " + std::to_string(f.index));
    }
  }
  if (static_cast<std::int64_t>(ds.records.size()) != m.n_records) {
    throw ShapeError("expected " + std::to_string(m.n_records) + " records, found " +
                     std::to_string(ds.records.size()));
  }
  if (ds.activations.size() != m.layers.size()) {
    throw ShapeError("expected " + std::to_string(m.layers.size()) +
                     " activation matrices, found " + std::to_string(ds.activations.size()));
  }
  for (std::size_t i = 0; i < ds.activations.size(); ++i) {
    const auto& a = ds.activations[i];
    if (a.rows() != m.n_records || a.cols() != m.d_model) {
      throw ShapeError("layer " + std::to_string(m.layers[i].index) + " has shape " +
                       std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                       ", manifest says " + std::to_string(m.n_records) + "x" +
                       std::to_string(m.d_model));
    }
    if (!a.allFinite()) {
      throw DataError("layer " + std::to_string(m.layers[i].index) +
                      " contains NaN or Inf");
    }
  }
  std::set<std::int64_t> ids;
  for (const auto& r : ds.records) {
    const std::string where = "record " + std::to_string(r.record_id);
    if (r.model_digit < 0 || r.model_digit > 9) {
      throw LabelError(where + ": model_digit " + std::to_string(r.model_digit) +
                       " outside [0,9]");
    }
    if (r.gt_digit < 0 || r.gt_digit > 9) {
      throw LabelError(where + ": gt_digit " + std::to_string(r.gt_digit) +
                       " outside [0,9]");
    }
    if (m.correctness_basis == CorrectnessBasis::digit &&
        r.correct != (r.model_digit == r.gt_digit)) {
      throw LabelError(where + ": correct flag disagrees with digits under digit basis");
    }
    if (!ids.insert(r.record_id).second) throw LabelError("duplicate " + where);
  }
}

// ---- binary ---------------------------------------------------------------

void write_f32_le(std::ostream& out, const ActivationMatrix& m) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(m.size()) * 4);
  const float* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    const auto o = static_cast<std::size_t>(i) * 4;
    bytes[o] = static_cast<unsigned char>(bits);
    bytes[o + 1] = static_cast<unsigned char>(bits >> 8);
    bytes[o + 2] = static_cast<unsigned char>(bits >> 16);
    bytes[o + 3] = static_cast<unsigned char>(bits >> 24);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

ActivationMatrix read_f32_le(const fs::path& path, std::int64_t rows, int cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing activation file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::uint64_t expected = static_cast<std::uint64_t>(rows) *
                                 static_cast<std::uint64_t>(cols) * 4;
  if (bytes.size() != expected) {
    throw ShapeError(path.filename().string() + " holds " + std::to_string(bytes.size()) +
                     " bytes, manifest implies " + std::to_string(expected));
  }
  ActivationMatrix m(rows, cols);
  float* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto o = static_cast<std::size_t>(i) * 4;
    const std::uint32_t bits = std::uint32_t{bytes[o]} | (std::uint32_t{bytes[o + 1]} << 8) |
                               (std::uint32_t{bytes[o + 2]} << 16) |
                               (std::uint32_t{bytes[o + 3]} << 24);
    data[i] = std::bit_cast<float>(bits);
  }
  return m;
}

// ---- json -----------------------------------------------------------------

ojson manifest_to_json(const Manifest& m) {
  ojson layers = ojson::array();
  for (const auto& f : m.layers) layers.push_back({{"index", f.index}, {"file", f.file}});
  return ojson{{"format_version", m.format_version},
               {"d_model", m.d_model},
               {"n_layers", m.n_layers},
               {"n_records", m.n_records},
               {"model_name", m.model_name},
               {"digit_position", m.digit_position},
               {"correctness_basis", to_string(m.correctness_basis)},
               {"token_rule", m.token_rule},
               {"layers", layers}};
}

template <typename T>
T required(const ojson& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": bad value for '" + key + "': " + e.what());
  }
}

Manifest manifest_from_json(const ojson& j) {
  const std::string where = "manifest.json";
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  Manifest m;
  m.format_version = required<int>(j, "format_version", where);
  m.d_model = required<int>(j, "d_model", where);
  m.n_layers = required<int>(j, "n_layers", where);
  m.n_records = required<std::int64_t>(j, "n_records", where);
  m.model_name = required<std::string>(j, "model_name", where);
  m.digit_position = required<std::string>(j, "digit_position", where);
  m.correctness_basis =
      parse_correctness_basis(required<std::string>(j, "correctness_basis", where));
  m.token_rule = required<std::string>(j, "token_rule", where);
  if (!j.contains("layers") || !j.at("layers").is_array()) {
    throw FormatError(where + ": 'layers' must be an array");
  }
  for (const auto& entry : j.at("layers")) {
    m.layers.push_back({required<int>(entry, "index", where + " layers[]"),
                        required<std::string>(entry, "file", where + " layers[]")});
  }
  return m;
}

ojson label_to_json(const RecordLabel& r) {
  ojson j{{"record_id", r.record_id},
          {"model_digit", r.model_digit},
          {"gt_digit", r.gt_digit},
          {"correct", r.correct},
          {"setting", to_string(r.setting)},
          {"operands", r.operands}};
  j["step_index"] = r.step_index ? ojson(*r.step_index) : ojson(nullptr);
  j["split"] = to_string(r.split);
  return j;
}

RecordLabel label_from_json(const ojson& j, std::size_t line) {
  const std::string where = "labels.jsonl line " + std::to_string(line + 1);
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  RecordLabel r;
  r.record_id = required<std::int64_t>(j, "record_id", where);
  r.model_digit = required<int>(j, "model_digit", where);
  r.gt_digit = required<int>(j, "gt_digit", where);
  r.correct = required<bool>(j, "correct", where);
  r.setting = parse_setting(required<std::string>(j, "setting", where));
  r.operands = required<std::vector<std::int64_t>>(j, "operands", where);
  if (j.contains("step_index") && !j.at("step_index").is_null()) {
    r.step_index = required<int>(j, "step_index", where);
  }
  r.split = parse_split(required<std::string>(j, "split", where));
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void ActivationDataset::validate() const { check_dataset<DataError>(*this); }

ActivationDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw FormatError("missing " + manifest_path.string());
  ActivationDataset ds;
  try {
    ds.manifest = manifest_from_json(ojson::parse(manifest_in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest.json is not valid JSON: " + std::string(e.what()));
  }

  const fs::path labels_path = dir / "labels.jsonl";
  std::ifstream labels_in(labels_path);
  if (!labels_in) throw FormatError("missing " + labels_path.string());
  std::string line;
  while (std::getline(labels_in, line)) {
    if (line.empty()) continue;
    try {
      ds.records.push_back(label_from_json(ojson::parse(line), ds.records.size()));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("labels.jsonl line " + std::to_string(ds.records.size() + 1) +
                        ": " + e.what());
    }
  }

  if (ds.manifest.d_model <= 0) throw FormatError("d_model must be positive");
  if (static_cast<std::int64_t>(ds.records.size()) != ds.manifest.n_records) {
    throw ShapeError("labels.jsonl has " + std::to_string(ds.records.size()) +
                     " rows, manifest says " + std::to_string(ds.manifest.n_records));
  }
  for (const auto& f : ds.manifest.layers) {
    ds.activations.push_back(
        read_f32_le(dir / f.file, ds.manifest.n_records, ds.manifest.d_model));
  }
  ds.validate();
  return ds;
}

void save_dataset(const ActivationDataset& ds, const fs::path& dir) {
  check_dataset<ValidationError>(ds);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  Manifest manifest = ds.manifest;
  for (auto& f : manifest.layers) f.file = layer_file_name(f.index);
  write_text(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");

  std::string labels;
  for (const auto& r : ds.records) labels += label_to_json(r).dump() + "\n";
  write_text(dir / "labels.jsonl", labels);

  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const fs::path path = dir / manifest.layers[i].file;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_f32_le(out, ds.activations[i]);
    if (!out) throw IoError("write failed for " + path.string());
  }
}

// ---------------------------------------------------------------------------
// Sampling and splitting

ActivationDataset balanced_sample(const ActivationDataset& ds,
                                  const SamplingConfig& cfg) {
  if (cfg.per_class_cap < 1) throw ArgumentError("per_class_cap must be >= 1");
  if (cfg.digit_min < 0 || cfg.digit_max > 9 || cfg.digit_min > cfg.digit_max) {
    throw ArgumentError("digit range must lie inside [0,9]");
  }
  if (ds.empty()) throw ArgumentError("cannot sample from an empty dataset");

  Rng rng(cfg.seed);
  const auto cap = static_cast<std::size_t>(cfg.per_class_cap);
  std::vector<std::size_t> keep;
  for (int digit = cfg.digit_min; digit <= cfg.digit_max; ++digit) {
    std::vector<std::size_t> correct_rows, error_rows;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const auto& r = ds.records[i];
      if (r.digit(cfg.class_key) != digit) continue;
      (r.correct ? correct_rows : error_rows).push_back(i);
    }
    rng.shuffle(correct_rows);
    rng.shuffle(error_rows);

    const std::size_t available = correct_rows.size() + error_rows.size();
    std::size_t take_correct = 0, take_error = 0;
    if (available <= cap) {
      take_correct = correct_rows.size();
      take_error = error_rows.size();
    } else if (cfg.require_error_mix) {
      take_error = std::min(error_rows.size(), cap / 2);
      take_correct = std::min(correct_rows.size(), cap - take_error);
      take_error = std::min(error_rows.size(), cap - take_correct);
    } else {
      std::vector<std::size_t> pooled = correct_rows;
      pooled.insert(pooled.end(), error_rows.begin(), error_rows.end());
      std::sort(pooled.begin(), pooled.end());
      rng.shuffle(pooled);
      keep.insert(keep.end(), pooled.begin(),
                  pooled.begin() + static_cast<std::ptrdiff_t>(cap));
      continue;
    }
    keep.insert(keep.end(), correct_rows.begin(),
                correct_rows.begin() + static_cast<std::ptrdiff_t>(take_correct));
    keep.insert(keep.end(), error_rows.begin(),
                error_rows.begin() + static_cast<std::ptrdiff_t>(take_error));
  }
  std::sort(keep.begin(), keep.end());
  return ds.select(keep);
}

DatasetSplit split_dataset(const ActivationDataset& ds, double train_fraction,
                           std::uint64_t seed, DigitTarget stratify_key) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ArgumentError("train_fraction must lie in (0,1)");
  }
  if (ds.empty()) throw ArgumentError("cannot split an empty dataset");

  std::map<std::pair<int, bool>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    strata[{r.digit(stratify_key), r.correct}].push_back(i);
  }

  Rng rng(seed);
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& [key, rows] : strata) {
    rng.shuffle(rows);
    std::size_t n_train = rows.size() == 1
                              ? 1
                              : static_cast<std::size_t>(std::floor(
                                    train_fraction * static_cast<double>(rows.size()) + 0.5));
    n_train = std::min(n_train, rows.size());
    train_rows.insert(train_rows.end(), rows.begin(),
                      rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                     rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  DatasetSplit out{ds.select(train_rows), ds.select(test_rows)};
  for (auto& r : out.train.records) r.split = Split::train;
  for (auto& r : out.test.records) r.split = Split::test;
  return out;
}

}  // namespace probekit
