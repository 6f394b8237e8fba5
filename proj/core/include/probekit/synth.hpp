#pragma once

#include "probekit/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string_view>

namespace probekit {

enum class Geometry { circular, linear, random };

std::string_view to_string(Geometry geometry);
Geometry parse_geometry(std::string_view text);

/// Planted-geometry generator settings.
///
/// Plane directions come from `plane_seed` (defaults to `seed`), so two specs
/// that share a plane seed share the planted planes while drawing different
/// records. Context directions are extra structured noise: `context_rank`
/// orthonormal directions, orthogonal to the planted ones, each carrying an
/// N(0, context_scale^2) coefficient per record.
struct SyntheticSpec {
  Geometry geometry = Geometry::circular;
  int d_model = 64;
  std::int64_t n_records = 800;
  double noise_sigma = 0.1;
  double signal_scale = 1.0;
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> plane_seed;

  int context_rank = 0;
  double context_scale = 0.0;
  std::uint64_t context_seed = 0;

  /// Throws ArgumentError when a field is out of range.
  void validate() const;
};

/// Orthonormal planted directions as columns: circular uses four (model
/// plane cos/sin, then GT plane cos/sin), linear uses two (model, GT),
/// random uses none.
Eigen::MatrixXd planted_directions(const SyntheticSpec& spec);

/// Context directions as columns, orthogonal to planted_directions(spec).
Eigen::MatrixXd context_directions(const SyntheticSpec& spec);

/// Draws gt_digit uniformly, flips model_digit to a different uniform digit
/// with probability error_rate, and embeds both digits. Single layer (0),
/// digit correctness basis, byte-identical for identical specs.
ActivationDataset generate(const SyntheticSpec& spec);

}  // namespace probekit
