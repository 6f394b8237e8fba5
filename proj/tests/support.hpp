#pragma once

#include "probekit/dataset.hpp"
#include "probekit/random.hpp"

#include <Eigen/Core>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace probekit::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("probekit_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                                       double stddev = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal(0.0, stddev);
  }
  return m;
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, Rng& rng, double stddev = 1.0) {
  return gaussian_matrix(n, 1, rng, stddev);
}

/// Single-layer dataset with digit correctness from the given rows.
inline ActivationDataset make_dataset(const Eigen::MatrixXd& x, const std::vector<int>& model,
                                      const std::vector<int>& gt) {
  ActivationDataset ds;
  ds.manifest = make_manifest(static_cast<int>(x.cols()), 1, x.rows());
  ds.activations.push_back(x.cast<float>());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    RecordLabel r;
    r.record_id = i;
    r.model_digit = model[static_cast<std::size_t>(i)];
    r.gt_digit = gt[static_cast<std::size_t>(i)];
    r.correct = r.model_digit == r.gt_digit;
    ds.records.push_back(r);
  }
  return ds;
}

struct GradCheck {
  double relative_error = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central difference of `loss` along a random unit direction compared with
/// the analytic directional derivative `grad . u`.
template <typename Loss>
GradCheck directional_check(Loss&& loss, const Eigen::VectorXd& params,
                            const Eigen::VectorXd& grad, const Eigen::VectorXd& direction,
                            double h = 1e-5) {
  const double up = loss(Eigen::VectorXd(params + h * direction));
  const double down = loss(Eigen::VectorXd(params - h * direction));
  GradCheck out;
  out.numeric = (up - down) / (2.0 * h);
  out.analytic = grad.dot(direction);
  out.relative_error = std::abs(out.analytic - out.numeric) /
                       std::max({std::abs(out.analytic), std::abs(out.numeric), 1e-8});
  return out;
}

inline Eigen::VectorXd random_direction(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd u = gaussian_vector(n, rng);
  return u / u.norm();
}

}  // namespace probekit::testing
