#pragma once

// Corrupted dataset directories for loader tests. Each corruption is applied
// to a freshly saved, valid dataset and names the error the loader must raise.

#include "probekit/dataset.hpp"
#include "probekit/errors.hpp"
#include "support.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace probekit::testing {

struct Corruption {
  std::string name;
  std::string expected_error;
  std::function<void(const std::filesystem::path&)> apply;
  std::function<bool(const std::exception&)> matches;
};

template <typename E>
bool is_a(const std::exception& e) {
  return dynamic_cast<const E*>(&e) != nullptr;
}

inline std::string replace_first(std::string text, const std::string& from,
                                 const std::string& to) {
  const auto pos = text.find(from);
  if (pos != std::string::npos) text.replace(pos, from.size(), to);
  return text;
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

inline std::vector<Corruption> corruption_classes() {
  namespace fs = std::filesystem;
  std::vector<Corruption> out;
  out.push_back({"missing activation file", "FormatError",
                 [](const fs::path& dir) { fs::remove(dir / "act_layer0.f32"); },
                 is_a<FormatError>});
  out.push_back({"activation byte size off by one row width", "ShapeError",
                 [](const fs::path& dir) {
                   std::ofstream f(dir / "act_layer0.f32", std::ios::binary | std::ios::app);
                   const float extra = 1.0f;
                   f.write(reinterpret_cast<const char*>(&extra), sizeof extra);
                 },
                 is_a<ShapeError>});
  out.push_back({"NaN in activations", "DataError",
                 [](const fs::path& dir) {
                   std::fstream f(dir / "act_layer0.f32",
                                  std::ios::binary | std::ios::in | std::ios::out);
                   f.seekp(8);
                   const float nan = std::numeric_limits<float>::quiet_NaN();
                   f.write(reinterpret_cast<const char*>(&nan), sizeof nan);
                 },
                 is_a<DataError>});
  out.push_back({"manifest is not JSON", "FormatError",
                 [](const fs::path& dir) { write_text(dir / "manifest.json", "{\"d_model\": 4,"); },
                 is_a<FormatError>});
  out.push_back({"manifest missing d_model", "FormatError",
                 [](const fs::path& dir) {
                   const auto text = read_text(dir / "manifest.json");
                   write_text(dir / "manifest.json",
                              replace_first(text, "\"d_model\"", "\"width\""));
                 },
                 is_a<FormatError>});
  out.push_back({"model_digit outside 0-9", "DataError",
                 [](const fs::path& dir) {
                   const auto text = read_text(dir / "labels.jsonl");
                   write_text(dir / "labels.jsonl",
                              replace_first(text, "\"model_digit\":", "\"model_digit\":1"));
                 },
                 is_a<DataError>});
  out.push_back({"label count differs from manifest", "ShapeError",
                 [](const fs::path& dir) {
                   auto text = read_text(dir / "labels.jsonl");
                   text.erase(text.find('\n') + 1);
                   write_text(dir / "labels.jsonl", text);
                 },
                 is_a<ShapeError>});
  return out;
}

/// Small valid dataset: every model_digit is a single character, so prefixing
/// a "1" pushes it out of range.
inline ActivationDataset corruption_base() {
  Rng rng(1);
  const Eigen::MatrixXd x = gaussian_matrix(6, 4, rng);
  return make_dataset(x, {0, 1, 2, 3, 4, 5}, {0, 1, 2, 3, 9, 9});
}

}  // namespace probekit::testing
