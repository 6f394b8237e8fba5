#include "probekit/optim.hpp"

#include "probekit/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace probekit {

double smooth_l1(double prediction, double target, double beta) {
  const double diff = std::abs(prediction - target);
  return diff < beta ? 0.5 * diff * diff / beta : diff - 0.5 * beta;
}

double smooth_l1_grad(double prediction, double target, double beta) {
  const double diff = prediction - target;
  if (std::abs(diff) < beta) return diff / beta;
  return diff > 0.0 ? 1.0 : -1.0;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

void check_class(std::span<const double> logits, int cls) {
  if (logits.size() < 2) throw ArgumentError("cross_entropy needs at least two logits");
  if (cls < 0 || static_cast<std::size_t>(cls) >= logits.size()) {
    throw ArgumentError("class " + std::to_string(cls) + " outside [0," +
                        std::to_string(logits.size()) + ")");
  }
}

}  // namespace

double cross_entropy(std::span<const double> logits, int cls) {
  check_class(logits, cls);
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - top);
  return std::log(total) - (logits[static_cast<std::size_t>(cls)] - top);
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, int cls) {
  check_class(logits, cls);
  auto grad = softmax(logits);
  grad[static_cast<std::size_t>(cls)] -= 1.0;
  return grad;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double binary_cross_entropy(double p, int label) {
  const double q = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
  return label != 0 ? -std::log(q) : -std::log(1.0 - q);
}

RidgeSolution ridge_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          double lambda) {
  if (x.rows() < 1) throw ArgumentError("ridge_solve needs at least one row");
  if (x.rows() != y.size()) {
    throw ShapeError("ridge_solve: X has " + std::to_string(x.rows()) + " rows, y has " +
                     std::to_string(y.size()));
  }
  if (!(lambda >= 0.0)) throw ArgumentError("ridge lambda must be nonnegative");

  const Eigen::Index d = x.cols();
  const auto n = static_cast<double>(x.rows());
  // Normal equations over [w; b]:
  //   [X'X + lambda I   X'1] [w]   [X'y]
  //   [1'X              n  ] [b] = [1'y]
  Eigen::MatrixXd normal(d + 1, d + 1);
  normal.topLeftCorner(d, d).noalias() = x.transpose() * x;
  normal.topLeftCorner(d, d).diagonal().array() += lambda;
  const Eigen::VectorXd col_sums = x.colwise().sum().transpose();
  normal.topRightCorner(d, 1) = col_sums;
  normal.bottomLeftCorner(1, d) = col_sums.transpose();
  normal(d, d) = n;

  Eigen::VectorXd rhs(d + 1);
  rhs.head(d).noalias() = x.transpose() * y;
  rhs(d) = y.sum();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
  qr.setThreshold(1e-12);
  if (qr.rank() < d + 1) {
    throw SingularError("ridge normal equations are singular (rank " +
                        std::to_string(qr.rank()) + " of " + std::to_string(d + 1) + ")");
  }
  const Eigen::VectorXd solution = qr.solve(rhs);
  return {solution.head(d), solution(d)};
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ArgumentError("beta1 must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ArgumentError("beta2 must lie in (0,1)");
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
  if (!(effective_weight_decay() >= 0.0)) {
    throw ArgumentError("weight_decay must be nonnegative");
  }
  if (epochs < 1) throw ArgumentError("epochs must be positive");
}

void optimizer_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
                    const Eigen::Ref<const Eigen::VectorXd>& grads,
                    const OptimizerConfig& cfg) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("optimizer_step: params " + std::to_string(params.size()) +
                     ", grads " + std::to_string(grads.size()) + ", state " +
                     std::to_string(state.first_moment.size()));
  }
  const double lr = cfg.learning_rate;
  const double wd = cfg.effective_weight_decay();
  ++state.step;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (Eigen::Index i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (cfg.kind == OptimizerKind::adam) {
      g += wd * params[i];
    } else {
      params[i] -= lr * wd * params[i];
    }
    state.first_moment[i] = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * g;
    state.second_moment[i] = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace probekit
