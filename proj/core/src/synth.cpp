#include "probekit/synth.hpp"

#include "probekit/errors.hpp"
#include "probekit/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

namespace probekit {

namespace {

int planted_count(Geometry geometry) {
  switch (geometry) {
    case Geometry::circular: return 4;
    case Geometry::linear: return 2;
    case Geometry::random: return 0;
  }
  return 0;
}

// Gaussian columns orthonormalized by modified Gram-Schmidt against `basis`
// and each other. A column that collapses is redrawn.
Eigen::MatrixXd orthonormal_columns(int d, int count, Rng& rng, const Eigen::MatrixXd& basis) {
  Eigen::MatrixXd out(d, count);
  for (int k = 0; k < count; ++k) {
    for (;;) {
      Eigen::VectorXd v(d);
      for (int i = 0; i < d; ++i) v[i] = rng.normal();
      for (Eigen::Index j = 0; j < basis.cols(); ++j) v -= basis.col(j).dot(v) * basis.col(j);
      for (int j = 0; j < k; ++j) v -= out.col(j).dot(v) * out.col(j);
      const double norm = v.norm();
      if (norm > 1e-6) {
        out.col(k) = v / norm;
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Geometry geometry) {
  switch (geometry) {
    case Geometry::circular: return "circular";
    case Geometry::linear: return "linear";
    case Geometry::random: return "random";
  }
  return "unknown";
}

Geometry parse_geometry(std::string_view text) {
  if (text == "circular") return Geometry::circular;
  if (text == "linear") return Geometry::linear;
  if (text == "random") return Geometry::random;
  throw ArgumentError("unknown geometry '" + std::string(text) + "'");
}

void SyntheticSpec::validate() const {
  if (d_model < 4) throw ArgumentError("d_model must be at least 4");
  if (n_records < 0) throw ArgumentError("n_records must be nonnegative");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ArgumentError("noise_sigma must be a nonnegative number");
  }
  if (!(signal_scale > 0.0) || !std::isfinite(signal_scale)) {
    throw ArgumentError("signal_scale must be positive");
  }
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
    throw ArgumentError("error_rate must lie in [0,1]");
  }
  if (context_rank < 0 || context_rank + planted_count(geometry) > d_model) {
    throw ArgumentError("context_rank does not fit in d_model");
  }
  if (!(context_scale >= 0.0) || !std::isfinite(context_scale)) {
    throw ArgumentError("context_scale must be nonnegative");
  }
}

Eigen::MatrixXd planted_directions(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.plane_seed.value_or(spec.seed));
  return orthonormal_columns(spec.d_model, planted_count(spec.geometry), rng,
                             Eigen::MatrixXd(spec.d_model, 0));
}

Eigen::MatrixXd context_directions(const SyntheticSpec& spec) {
  const Eigen::MatrixXd planted = planted_directions(spec);
  Rng rng(spec.context_seed);
  return orthonormal_columns(spec.d_model, spec.context_rank, rng, planted);
}

ActivationDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::MatrixXd planted = planted_directions(spec);
  const Eigen::MatrixXd context = context_directions(spec);
  const int d = spec.d_model;
  const auto n = spec.n_records;

  ActivationDataset ds;
  ds.manifest = make_manifest(d, 1, n, "synthetic-" + std::string(to_string(spec.geometry)));
  ds.records.reserve(static_cast<std::size_t>(n));
  ActivationMatrix acts(n, d);

  Rng rng(spec.seed);
  constexpr double kStep = 2.0 * std::numbers::pi / 10.0;
  Eigen::VectorXd x(d);
  for (std::int64_t i = 0; i < n; ++i) {
    RecordLabel r;
    r.record_id = i;
    r.gt_digit = static_cast<int>(rng.uniform_index(10));
    r.model_digit = r.gt_digit;
    if (rng.uniform() < spec.error_rate) {
      // Uniform over the nine other digits.
      r.model_digit = (r.gt_digit + 1 + static_cast<int>(rng.uniform_index(9))) % 10;
    }
    r.correct = r.model_digit == r.gt_digit;

    x.setZero();
    const double s = spec.signal_scale;
    if (spec.geometry == Geometry::circular) {
      const double am = kStep * r.model_digit, ag = kStep * r.gt_digit;
      x += s * (std::cos(am) * planted.col(0) + std::sin(am) * planted.col(1));
      x += s * (std::cos(ag) * planted.col(2) + std::sin(ag) * planted.col(3));
    } else if (spec.geometry == Geometry::linear) {
      x += s * (r.model_digit / 9.0) * planted.col(0);
      x += s * (r.gt_digit / 9.0) * planted.col(1);
    }
    for (int j = 0; j < d; ++j) x[j] += spec.noise_sigma * rng.normal();
    for (Eigen::Index k = 0; k < context.cols(); ++k) {
      x += spec.context_scale * rng.normal() * context.col(k);
    }
    acts.row(i) = x.cast<float>().transpose();
    ds.records.push_back(std::move(r));
  }
  ds.activations.push_back(std::move(acts));
  return ds;
}

}  // namespace probekit
