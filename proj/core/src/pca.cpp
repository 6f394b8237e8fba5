#include "probekit/pca.hpp"

#include "probekit/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

namespace probekit {

namespace {

// Largest-magnitude entry made positive; ties resolve to the first index.
void fix_sign(Eigen::MatrixXd& components, Eigen::Index row) {
  auto c = components.row(row);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < c.size(); ++i) {
    if (std::abs(c[i]) > std::abs(c[best])) best = i;
  }
  if (c[best] < 0.0) c = -c;
}

void append_number(std::string& out, double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, res.ptr);
}

}  // namespace

PcaResult pca_fit_matrix(const Eigen::MatrixXd& x, int k, int covariance_max_dim) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw ArgumentError("PCA needs at least two rows");
  if (k < 1 || k > std::min(n, d)) {
    throw ArgumentError("k = " + std::to_string(k) + " outside [1, min(n, d) = " +
                        std::to_string(std::min(n, d)) + "]");
  }
  PcaResult result;
  result.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - result.mean.transpose();
  const double denom = static_cast<double>(n - 1);

  result.components.resize(k, d);
  result.explained_variance.resize(k);
  if (d <= covariance_max_dim) {
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw ArgumentError("eigendecomposition failed");
    // Eigenvalues come back ascending.
    for (int i = 0; i < k; ++i) {
      const Eigen::Index src = d - 1 - i;
      result.explained_variance[i] = std::max(0.0, eig.eigenvalues()[src]);
      result.components.row(i) = eig.eigenvectors().col(src).transpose();
    }
  } else {
    const Eigen::MatrixXd gram = (centered * centered.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw ArgumentError("eigendecomposition failed");
    for (int i = 0; i < k; ++i) {
      const Eigen::Index src = n - 1 - i;
      const double lambda = std::max(0.0, eig.eigenvalues()[src]);
      result.explained_variance[i] = lambda;
      Eigen::VectorXd v = centered.transpose() * eig.eigenvectors().col(src);
      const double norm = v.norm();
      if (norm > 0.0) v /= norm;
      result.components.row(i) = v.transpose();
    }
  }
  for (int i = 0; i < k; ++i) fix_sign(result.components, i);
  result.projections = centered * result.components.transpose();
  return result;
}

PcaResult pca_fit(const ActivationDataset& ds, int layer, int k, DigitTarget label) {
  PcaResult result = pca_fit_matrix(ds.layer_matrix(layer), k);
  result.layer = layer;
  result.labels = ds.digits(label);
  result.record_ids.reserve(ds.size());
  for (const auto& r : ds.records) result.record_ids.push_back(r.record_id);
  return result;
}

void export_projection(const PcaResult& result, const std::filesystem::path& path) {
  if (result.k() < 1) throw ArgumentError("projection has no components");
  const auto n = static_cast<std::size_t>(result.projections.rows());
  if (result.record_ids.size() != n || result.labels.size() != n) {
    throw ShapeError("projection rows, record ids and labels differ in count");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.record_ids[a] < result.record_ids[b];
  });

  std::string text = "record_id";
  for (int c = 1; c <= result.k(); ++c) text += ",pc" + std::to_string(c);
  text += ",digit\n";
  for (std::size_t row : order) {
    text += std::to_string(result.record_ids[row]);
    for (int c = 0; c < result.k(); ++c) {
      text += ',';
      append_number(text, result.projections(static_cast<Eigen::Index>(row), c));
    }
    text += ',' + std::to_string(result.labels[row]) + '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace probekit
