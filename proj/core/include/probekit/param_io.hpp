#pragma once

#include "probekit/dataset.hpp"
#include "probekit/detectors.hpp"
#include "probekit/optim.hpp"
#include "probekit/probes.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace probekit {

// Parameter files hold one JSON header line (kind, d_model, hyperparameters,
// seed, tensor names and shapes) followed by the tensors as one raw
// little-endian float32 blob in header order, each tensor row-major.

struct ProbeFile {
  Probe probe;
  int layer = 0;
  DigitTarget target = DigitTarget::model_digit;
  OptimizerConfig optimizer;
  ProbeTrainingOptions options;
};

struct DetectorFile {
  ErrorDetector detector;
  OptimizerConfig optimizer;
  DetectorTrainingOptions options;
};

void save_probe(const ProbeFile& file, const std::filesystem::path& path);
/// Throws FormatError on a malformed header, short blob or checksum mismatch.
ProbeFile load_probe(const std::filesystem::path& path);

void save_detector(const DetectorFile& file, const std::filesystem::path& path);
DetectorFile load_detector(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);

/// FNV-1a over the float32 parameter blob exactly as it is written to disk.
std::uint64_t parameter_checksum(const Probe& probe);
std::uint64_t parameter_checksum(const ErrorDetector& detector);

/// 16 lowercase hex digits.
std::string checksum_hex(std::uint64_t checksum);

}  // namespace probekit
