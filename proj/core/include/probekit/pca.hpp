#pragma once

#include "probekit/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace probekit {

struct PcaResult {
  int layer = 0;
  Eigen::MatrixXd components;          // k x d_model, orthonormal rows
  Eigen::VectorXd explained_variance;  // k, nonincreasing
  Eigen::VectorXd mean;                // d_model
  Eigen::MatrixXd projections;         // n x k
  std::vector<int> labels;
  std::vector<std::int64_t> record_ids;

  int k() const { return static_cast<int>(components.rows()); }
};

/// Covariance is d x d up to this width; wider inputs use the n x n Gram matrix.
inline constexpr int kPcaCovarianceMaxDim = 4096;

/// Mean-centred PCA of the rows of `x` (variance divides by n - 1). Each
/// component is flipped so its largest-magnitude entry is positive. Leaves
/// `layer`, `labels` and `record_ids` empty. Throws ArgumentError unless
/// 1 <= k <= min(n, d) and n >= 2.
PcaResult pca_fit_matrix(const Eigen::MatrixXd& x, int k,
                         int covariance_max_dim = kPcaCovarianceMaxDim);

PcaResult pca_fit(const ActivationDataset& ds, int layer, int k,
                  DigitTarget label = DigitTarget::model_digit);

/// CSV `record_id,pc1,...,pck,digit`, rows ordered by record_id. Throws
/// IoError when the file cannot be written.
void export_projection(const PcaResult& result, const std::filesystem::path& path);

}  // namespace probekit
