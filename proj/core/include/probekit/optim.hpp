#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace probekit {

// ---- losses ---------------------------------------------------------------

/// Huber-style smooth L1 on the residual `prediction - target`.
double smooth_l1(double prediction, double target, double beta = 1.0);
/// d smooth_l1 / d prediction.
double smooth_l1_grad(double prediction, double target, double beta = 1.0);

/// -log softmax(logits)[cls], max-subtracted. Requires at least two logits.
double cross_entropy(std::span<const double> logits, int cls);
/// Gradient w.r.t. the logits: softmax(logits) - onehot(cls).
std::vector<double> cross_entropy_grad(std::span<const double> logits, int cls);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

inline constexpr double kBceEpsilon = 1e-7;

/// Binary cross-entropy with `p` clamped to [1e-7, 1 - 1e-7].
double binary_cross_entropy(double p, int label);

double sigmoid(double z);

// ---- ridge ----------------------------------------------------------------

struct RidgeSolution {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

/// Minimizes sum_i (w.x_i + b - y_i)^2 + lambda * |w|^2 through the
/// regularized normal equations; the bias column is not penalized.
/// Throws SingularError when the system is rank deficient.
RidgeSolution ridge_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          double lambda);

// ---- first-order optimizers -----------------------------------------------

enum class OptimizerKind { adam, adamw };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Unset means the kind's default: 0.01 for AdamW, 0 for Adam.
  std::optional<double> weight_decay;
  /// One epoch is one full-batch gradient step.
  int epochs = 10000;
  std::uint64_t seed = 0;

  double effective_weight_decay() const {
    if (weight_decay) return *weight_decay;
    return kind == OptimizerKind::adamw ? 0.01 : 0.0;
  }

  /// Throws ArgumentError when a hyperparameter is out of range.
  void validate() const;

  static OptimizerConfig with_kind(OptimizerKind k) {
    OptimizerConfig cfg;
    cfg.kind = k;
    return cfg;
  }
  static OptimizerConfig adam() { return with_kind(OptimizerKind::adam); }
  static OptimizerConfig adamw() { return with_kind(OptimizerKind::adamw); }
};

/// Moment estimates for one flat parameter vector.
struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;

  explicit AdamState(Eigen::Index n = 0)
      : first_moment(Eigen::VectorXd::Zero(n)),
        second_moment(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam update. AdamW first shrinks the parameters by
/// lr * weight_decay (decoupled); Adam with a nonzero weight decay adds the
/// classic L2 term wd * p to the gradient instead.
void optimizer_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
                    const Eigen::Ref<const Eigen::VectorXd>& grads,
                    const OptimizerConfig& cfg);

/// Runs `cfg.epochs` full-batch steps from `params`. The objective is called
/// as `objective(params, grad)`; it returns the loss and writes the gradient
/// into `grad`. Returns the loss seen at the last step.
template <typename Objective>
double minimize(Eigen::VectorXd& params, const OptimizerConfig& cfg, Objective&& objective) {
  cfg.validate();
  AdamState state(params.size());
  Eigen::VectorXd grad(params.size());
  double loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    grad.setZero();
    loss = objective(static_cast<const Eigen::VectorXd&>(params), grad);
    optimizer_step(state, params, grad, cfg);
  }
  return loss;
}

}  // namespace probekit
