#pragma once

#include "probekit/dataset.hpp"
#include "probekit/optim.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace probekit {

enum class ProbeKind { circular, linear, logistic, mlp };

std::string_view to_string(ProbeKind kind);
ProbeKind parse_probe_kind(std::string_view text);

inline constexpr int kDigitClasses = 10;
inline constexpr int kMlpHiddenWidth = 512;

// ---- circular -------------------------------------------------------------

/// Projects onto the plane spanned by (w1, w2) and reads the digit from the
/// angle of the projected point.
struct CircularProbe {
  Eigen::VectorXd w1;
  Eigen::VectorXd w2;
};

struct CircularOutput {
  double theta = 0.0;  // [0, 2pi)
  double y_hat = 0.0;  // [0, 10)
};

/// theta = atan2(u, v) shifted into [0, 2pi); both zero gives theta = 0.
CircularOutput circular_from_projections(double u, double v);
CircularOutput circular_forward(const CircularProbe& probe,
                                const Eigen::Ref<const Eigen::VectorXd>& x);
/// floor(y_hat + 0.5) mod 10, so 9.6 wraps to 0 and 4.5 rounds up to 5.
int circular_digit(double y_hat);
int circular_predict(const CircularProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x);

// ---- linear ---------------------------------------------------------------

struct LinearProbe {
  Eigen::VectorXd w;
  double b = 0.0;
};

/// Round half up, then clamp to [0, 9].
int linear_digit(double value);
int linear_predict(const LinearProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x);

// ---- logistic -------------------------------------------------------------

/// One weight row per digit, no bias.
struct LogisticProbe {
  Eigen::MatrixXd weights;  // classes x d_model
};

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(std::span<const double> values);
int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values);

int logistic_predict(const LogisticProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x);

// ---- mlp ------------------------------------------------------------------

/// argmax(W2' ReLU(W1' x + b1) + b2).
struct MlpProbe {
  Eigen::MatrixXd w1;  // d_model x hidden
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // hidden x classes
  Eigen::VectorXd b2;  // classes

  int classes() const { return static_cast<int>(b2.size()); }
  int hidden() const { return static_cast<int>(b1.size()); }

  static MlpProbe zeros(int d_model, int classes, int hidden = kMlpHiddenWidth);
};

Eigen::VectorXd mlp_logits(const MlpProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x);
/// One row of logits per row of x.
Eigen::MatrixXd mlp_logits_batch(const MlpProbe& probe, const Eigen::MatrixXd& x);
int mlp_predict(const MlpProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x);

// ---- any probe ------------------------------------------------------------

using Probe = std::variant<CircularProbe, LinearProbe, LogisticProbe, MlpProbe>;

ProbeKind kind_of(const Probe& probe);
int d_model_of(const Probe& probe);
/// Checks shapes and finiteness; throws ShapeError or DataError.
void validate_probe(const Probe& probe);

int predict(const Probe& probe, const Eigen::Ref<const Eigen::VectorXd>& x);
/// Discrete prediction for every row of x.
std::vector<int> predict_batch(const Probe& probe, const Eigen::MatrixXd& x);

// ---- objectives -----------------------------------------------------------
//
// Full-batch mean losses. When `grad` is non-null it receives the analytic
// gradient in the same layout as the probe.

enum class CircularLoss {
  wrapped,    // smooth-l1 on the label distance wrapped into [-5, 5]
  unwrapped,  // smooth-l1 on y_hat - y as is
};

double circular_objective(const CircularProbe& probe, const Eigen::MatrixXd& x,
                          std::span<const int> labels, CircularLoss loss,
                          CircularProbe* grad = nullptr);

/// sum_i (w.x_i + b - y_i)^2 + lambda |w|^2, the quantity ridge_solve minimizes.
double linear_objective(const LinearProbe& probe, const Eigen::MatrixXd& x,
                        std::span<const int> labels, double lambda,
                        LinearProbe* grad = nullptr);

double logistic_objective(const LogisticProbe& probe, const Eigen::MatrixXd& x,
                          std::span<const int> labels, LogisticProbe* grad = nullptr);

double mlp_objective(const MlpProbe& probe, const Eigen::MatrixXd& x,
                     std::span<const int> labels, MlpProbe* grad = nullptr);

// ---- flat parameter views (optimizer plumbing) ----------------------------

Eigen::VectorXd flatten(const CircularProbe& probe);
Eigen::VectorXd flatten(const LinearProbe& probe);
Eigen::VectorXd flatten(const LogisticProbe& probe);
Eigen::VectorXd flatten(const MlpProbe& probe);
void unflatten(const Eigen::VectorXd& flat, CircularProbe& probe);
void unflatten(const Eigen::VectorXd& flat, LinearProbe& probe);
void unflatten(const Eigen::VectorXd& flat, LogisticProbe& probe);
void unflatten(const Eigen::VectorXd& flat, MlpProbe& probe);

// ---- training -------------------------------------------------------------

struct ProbeTrainingOptions {
  CircularLoss circular_loss = CircularLoss::wrapped;
  double ridge_lambda = 0.1;
  double init_std = 0.02;
};

/// Fixed optimizer pairing per probe kind: circular uses AdamW, logistic and
/// MLP use Adam, linear is closed-form ridge and ignores the optimizer.
OptimizerKind optimizer_for(ProbeKind kind);

CircularProbe train_circular(const Eigen::MatrixXd& x, std::span<const int> labels,
                             const OptimizerConfig& cfg,
                             const ProbeTrainingOptions& options = {});
LinearProbe train_linear(const Eigen::MatrixXd& x, std::span<const int> labels,
                         double lambda);
LogisticProbe train_logistic(const Eigen::MatrixXd& x, std::span<const int> labels,
                             const OptimizerConfig& cfg,
                             const ProbeTrainingOptions& options = {});
MlpProbe train_mlp(const Eigen::MatrixXd& x, std::span<const int> labels, int classes,
                   const OptimizerConfig& cfg, const ProbeTrainingOptions& options = {});

/// Trains one probe on one layer. `cfg.kind` is replaced by the kind's
/// paired optimizer. Throws TrainError on an empty training set.
Probe train_probe(ProbeKind kind, const ActivationDataset& train, int layer,
                  DigitTarget target, const OptimizerConfig& cfg,
                  const ProbeTrainingOptions& options = {});

struct ProbeReport {
  int layer = 0;
  ProbeKind kind = ProbeKind::circular;
  DigitTarget target = DigitTarget::model_digit;
  double accuracy = 0.0;
  std::int64_t n_correct = 0;
  std::int64_t n_eval = 0;
};

/// Exact-match accuracy of discrete predictions. Throws EvalError when empty.
ProbeReport evaluate_probe(const Probe& probe, const ActivationDataset& eval, int layer,
                           DigitTarget target);

}  // namespace probekit
