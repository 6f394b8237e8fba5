#include "probekit/probes.hpp"

#include "overloaded.hpp"
#include "probekit/errors.hpp"
#include "probekit/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace probekit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDigitsPerRadian = 10.0 / kTwoPi;

void fill_gaussian(Eigen::Ref<Eigen::MatrixXd> m, Rng& rng, double stddev) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.normal(0.0, stddev);
  }
}

void check_labels(const Eigen::MatrixXd& x, std::span<const int> labels, int classes) {
  if (x.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ShapeError("activation rows (" + std::to_string(x.rows()) +
                     ") and labels (" + std::to_string(labels.size()) + ") differ");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ArgumentError("label " + std::to_string(y) + " outside [0," +
                          std::to_string(classes) + ")");
    }
  }
}

// Softmax over each row, in place.
void softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// Mean cross-entropy of row-wise logits; turns `logits` into dL/dlogits.
double cross_entropy_rows(Eigen::MatrixXd& logits, std::span<const int> labels) {
  const auto n = static_cast<double>(logits.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    auto row = logits.row(i);
    const double top = row.maxCoeff();
    const double log_sum = std::log((row.array() - top).exp().sum()) + top;
    total += log_sum - row(y);
  }
  softmax_rows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    logits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  logits /= n;
  return total / n;
}

}  // namespace

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::circular: return "circular";
    case ProbeKind::linear: return "linear";
    case ProbeKind::logistic: return "logistic";
    case ProbeKind::mlp: return "mlp";
  }
  return "unknown";
}

ProbeKind parse_probe_kind(std::string_view text) {
  if (text == "circular") return ProbeKind::circular;
  if (text == "linear") return ProbeKind::linear;
  if (text == "logistic") return ProbeKind::logistic;
  if (text == "mlp") return ProbeKind::mlp;
  throw ArgumentError("unknown probe kind '" + std::string(text) + "'");
}

// ---- forward passes -------------------------------------------------------

CircularOutput circular_from_projections(double u, double v) {
  if (u == 0.0 && v == 0.0) return {0.0, 0.0};
  double theta = std::atan2(u, v);
  if (theta < 0.0) theta += kTwoPi;
  // atan2 of a tiny negative u can round to exactly -0 + 2pi == 2pi.
  if (theta >= kTwoPi) theta = 0.0;
  double y_hat = theta * kDigitsPerRadian;
  if (y_hat >= 10.0) y_hat = std::nextafter(10.0, 0.0);
  return {theta, y_hat};
}

CircularOutput circular_forward(const CircularProbe& probe,
                                const Eigen::Ref<const Eigen::VectorXd>& x) {
  return circular_from_projections(probe.w1.dot(x), probe.w2.dot(x));
}

int circular_digit(double y_hat) {
  const auto rounded = static_cast<int>(std::floor(y_hat + 0.5));
  return ((rounded % 10) + 10) % 10;
}

int circular_predict(const CircularProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return circular_digit(circular_forward(probe, x).y_hat);
}

int linear_digit(double value) {
  const double rounded = std::floor(value + 0.5);
  return static_cast<int>(std::clamp(rounded, 0.0, 9.0));
}

int linear_predict(const LinearProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return linear_digit(probe.w.dot(x) + probe.b);
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values) {
  int best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

int logistic_predict(const LogisticProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd logits = probe.weights * x;
  return argmax_lowest(logits);
}

MlpProbe MlpProbe::zeros(int d_model, int classes, int hidden) {
  return {Eigen::MatrixXd::Zero(d_model, hidden), Eigen::VectorXd::Zero(hidden),
          Eigen::MatrixXd::Zero(hidden, classes), Eigen::VectorXd::Zero(classes)};
}

Eigen::VectorXd mlp_logits(const MlpProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd hidden =
      (probe.w1.transpose() * x + probe.b1).cwiseMax(0.0);
  return probe.w2.transpose() * hidden + probe.b2;
}

Eigen::MatrixXd mlp_logits_batch(const MlpProbe& probe, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd hidden = x * probe.w1;
  hidden.rowwise() += probe.b1.transpose();
  hidden = hidden.cwiseMax(0.0);
  Eigen::MatrixXd logits = hidden * probe.w2;
  logits.rowwise() += probe.b2.transpose();
  return logits;
}

int mlp_predict(const MlpProbe& probe, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return argmax_lowest(mlp_logits(probe, x));
}

// ---- variant helpers ------------------------------------------------------

using detail::overloaded;

ProbeKind kind_of(const Probe& probe) {
  return std::visit(overloaded{[](const CircularProbe&) { return ProbeKind::circular; },
                               [](const LinearProbe&) { return ProbeKind::linear; },
                               [](const LogisticProbe&) { return ProbeKind::logistic; },
                               [](const MlpProbe&) { return ProbeKind::mlp; }},
                    probe);
}

int d_model_of(const Probe& probe) {
  return std::visit(
      overloaded{[](const CircularProbe& p) { return static_cast<int>(p.w1.size()); },
                 [](const LinearProbe& p) { return static_cast<int>(p.w.size()); },
                 [](const LogisticProbe& p) { return static_cast<int>(p.weights.cols()); },
                 [](const MlpProbe& p) { return static_cast<int>(p.w1.rows()); }},
      probe);
}

void validate_probe(const Probe& probe) {
  const bool finite = std::visit(
      overloaded{[](const CircularProbe& p) {
                   if (p.w1.size() != p.w2.size() || p.w1.size() == 0) {
                     throw ShapeError("circular probe w1/w2 sizes differ or are empty");
                   }
                   return p.w1.allFinite() && p.w2.allFinite();
                 },
                 [](const LinearProbe& p) {
                   if (p.w.size() == 0) throw ShapeError("linear probe has no weights");
                   return p.w.allFinite() && std::isfinite(p.b);
                 },
                 [](const LogisticProbe& p) {
                   if (p.weights.rows() != kDigitClasses || p.weights.cols() == 0) {
                     throw ShapeError("logistic probe must have 10 weight rows");
                   }
                   return p.weights.allFinite();
                 },
                 [](const MlpProbe& p) {
                   if (p.hidden() < 1 || p.w1.cols() != p.hidden() ||
                       p.w2.rows() != p.hidden() || p.w2.cols() != p.classes() ||
                       p.classes() < 2 || p.w1.rows() == 0) {
                     throw ShapeError("mlp probe shapes are inconsistent");
                   }
                   return p.w1.allFinite() && p.b1.allFinite() && p.w2.allFinite() &&
                          p.b2.allFinite();
                 }},
      probe);
  if (!finite) throw DataError("probe parameters contain NaN or Inf");
}

int predict(const Probe& probe, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != d_model_of(probe)) {
    throw ShapeError("probe expects d_model " + std::to_string(d_model_of(probe)) +
                     ", input has " + std::to_string(x.size()));
  }
  return std::visit(
      overloaded{[&](const CircularProbe& p) { return circular_predict(p, x); },
                 [&](const LinearProbe& p) { return linear_predict(p, x); },
                 [&](const LogisticProbe& p) { return logistic_predict(p, x); },
                 [&](const MlpProbe& p) { return mlp_predict(p, x); }},
      probe);
}

std::vector<int> predict_batch(const Probe& probe, const Eigen::MatrixXd& x) {
  if (x.cols() != d_model_of(probe)) {
    throw ShapeError("probe expects d_model " + std::to_string(d_model_of(probe)) +
                     ", activations have " + std::to_string(x.cols()));
  }
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  std::visit(overloaded{[&](const CircularProbe& p) {
                          const Eigen::VectorXd u = x * p.w1, v = x * p.w2;
                          for (Eigen::Index i = 0; i < x.rows(); ++i) {
                            out[static_cast<std::size_t>(i)] =
                                circular_digit(circular_from_projections(u[i], v[i]).y_hat);
                          }
                        },
                        [&](const LinearProbe& p) {
                          const Eigen::VectorXd values = x * p.w;
                          for (Eigen::Index i = 0; i < x.rows(); ++i) {
                            out[static_cast<std::size_t>(i)] = linear_digit(values[i] + p.b);
                          }
                        },
                        [&](const LogisticProbe& p) {
                          const Eigen::MatrixXd logits = x * p.weights.transpose();
                          for (Eigen::Index i = 0; i < x.rows(); ++i) {
                            out[static_cast<std::size_t>(i)] =
                                argmax_lowest(logits.row(i).transpose());
                          }
                        },
                        [&](const MlpProbe& p) {
                          const Eigen::MatrixXd logits = mlp_logits_batch(p, x);
                          for (Eigen::Index i = 0; i < x.rows(); ++i) {
                            out[static_cast<std::size_t>(i)] =
                                argmax_lowest(logits.row(i).transpose());
                          }
                        }},
             probe);
  return out;
}

// ---- objectives -----------------------------------------------------------

double circular_objective(const CircularProbe& probe, const Eigen::MatrixXd& x,
                          std::span<const int> labels, CircularLoss loss,
                          CircularProbe* grad) {
  check_labels(x, labels, kDigitClasses);
  const Eigen::Index n = x.rows();
  if (n == 0) return 0.0;
  const Eigen::VectorXd u = x * probe.w1;
  const Eigen::VectorXd v = x * probe.w2;
  Eigen::VectorXd du(n), dv(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y_hat = circular_from_projections(u[i], v[i]).y_hat;
    double residual = y_hat - labels[static_cast<std::size_t>(i)];
    if (loss == CircularLoss::wrapped) residual -= 10.0 * std::nearbyint(residual / 10.0);
    total += smooth_l1(residual, 0.0);
    const double r2 = u[i] * u[i] + v[i] * v[i];
    if (r2 == 0.0) {
      du[i] = dv[i] = 0.0;
      continue;
    }
    const double g = smooth_l1_grad(residual, 0.0) * kDigitsPerRadian;
    du[i] = g * v[i] / r2;
    dv[i] = -g * u[i] / r2;
  }
  const auto scale = 1.0 / static_cast<double>(n);
  if (grad) {
    grad->w1.noalias() = x.transpose() * du * scale;
    grad->w2.noalias() = x.transpose() * dv * scale;
  }
  return total * scale;
}

double linear_objective(const LinearProbe& probe, const Eigen::MatrixXd& x,
                        std::span<const int> labels, double lambda, LinearProbe* grad) {
  check_labels(x, labels, kDigitClasses);
  Eigen::VectorXd residual = x * probe.w;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    residual[i] += probe.b - labels[static_cast<std::size_t>(i)];
  }
  if (grad) {
    grad->w.noalias() = 2.0 * x.transpose() * residual + 2.0 * lambda * probe.w;
    grad->b = 2.0 * residual.sum();
  }
  return residual.squaredNorm() + lambda * probe.w.squaredNorm();
}

double logistic_objective(const LogisticProbe& probe, const Eigen::MatrixXd& x,
                          std::span<const int> labels, LogisticProbe* grad) {
  check_labels(x, labels, static_cast<int>(probe.weights.rows()));
  if (x.rows() == 0) return 0.0;
  Eigen::MatrixXd logits = x * probe.weights.transpose();
  const double loss = cross_entropy_rows(logits, labels);
  if (grad) grad->weights.noalias() = logits.transpose() * x;
  return loss;
}

double mlp_objective(const MlpProbe& probe, const Eigen::MatrixXd& x,
                     std::span<const int> labels, MlpProbe* grad) {
  check_labels(x, labels, probe.classes());
  if (x.rows() == 0) return 0.0;
  Eigen::MatrixXd pre = x * probe.w1;
  pre.rowwise() += probe.b1.transpose();
  const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
  Eigen::MatrixXd logits = hidden * probe.w2;
  logits.rowwise() += probe.b2.transpose();
  const double loss = cross_entropy_rows(logits, labels);
  if (grad) {
    grad->w2.noalias() = hidden.transpose() * logits;
    grad->b2 = logits.colwise().sum().transpose();
    Eigen::MatrixXd d_pre = logits * probe.w2.transpose();
    d_pre = (pre.array() > 0.0).select(d_pre, 0.0);
    grad->w1.noalias() = x.transpose() * d_pre;
    grad->b1 = d_pre.colwise().sum().transpose();
  }
  return loss;
}

// ---- flatten --------------------------------------------------------------

Eigen::VectorXd flatten(const CircularProbe& probe) {
  Eigen::VectorXd flat(probe.w1.size() + probe.w2.size());
  flat << probe.w1, probe.w2;
  return flat;
}

Eigen::VectorXd flatten(const LinearProbe& probe) {
  Eigen::VectorXd flat(probe.w.size() + 1);
  flat << probe.w, probe.b;
  return flat;
}

Eigen::VectorXd flatten(const LogisticProbe& probe) {
  return Eigen::Map<const Eigen::VectorXd>(probe.weights.data(), probe.weights.size());
}

Eigen::VectorXd flatten(const MlpProbe& probe) {
  Eigen::VectorXd flat(probe.w1.size() + probe.b1.size() + probe.w2.size() +
                       probe.b2.size());
  flat << Eigen::Map<const Eigen::VectorXd>(probe.w1.data(), probe.w1.size()), probe.b1,
      Eigen::Map<const Eigen::VectorXd>(probe.w2.data(), probe.w2.size()), probe.b2;
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, CircularProbe& probe) {
  const Eigen::Index d = probe.w1.size();
  probe.w1 = flat.head(d);
  probe.w2 = flat.segment(d, d);
}

void unflatten(const Eigen::VectorXd& flat, LinearProbe& probe) {
  const Eigen::Index d = probe.w.size();
  probe.w = flat.head(d);
  probe.b = flat[d];
}

void unflatten(const Eigen::VectorXd& flat, LogisticProbe& probe) {
  Eigen::Map<Eigen::VectorXd>(probe.weights.data(), probe.weights.size()) = flat;
}

void unflatten(const Eigen::VectorXd& flat, MlpProbe& probe) {
  Eigen::Index offset = 0;
  auto take = [&](Eigen::Index count) {
    auto seg = flat.segment(offset, count);
    offset += count;
    return seg;
  };
  Eigen::Map<Eigen::VectorXd>(probe.w1.data(), probe.w1.size()) = take(probe.w1.size());
  probe.b1 = take(probe.b1.size());
  Eigen::Map<Eigen::VectorXd>(probe.w2.data(), probe.w2.size()) = take(probe.w2.size());
  probe.b2 = take(probe.b2.size());
}

// ---- training -------------------------------------------------------------

OptimizerKind optimizer_for(ProbeKind kind) {
  return kind == ProbeKind::circular ? OptimizerKind::adamw : OptimizerKind::adam;
}

namespace {

OptimizerConfig paired(const OptimizerConfig& cfg, OptimizerKind kind) {
  OptimizerConfig out = cfg;
  if (out.kind != kind) {
    out.kind = kind;
    out.weight_decay.reset();
  }
  return out;
}

template <typename P, typename Objective>
P fit(P probe, const OptimizerConfig& cfg, Objective objective) {
  Eigen::VectorXd params = flatten(probe);
  P scratch = probe;
  minimize(params, cfg, [&](const Eigen::VectorXd& flat, Eigen::VectorXd& grad) {
    unflatten(flat, probe);
    const double loss = objective(probe, &scratch);
    grad = flatten(scratch);
    return loss;
  });
  unflatten(params, probe);
  return probe;
}

}  // namespace

CircularProbe train_circular(const Eigen::MatrixXd& x, std::span<const int> labels,
                             const OptimizerConfig& cfg,
                             const ProbeTrainingOptions& options) {
  check_labels(x, labels, kDigitClasses);
  if (x.rows() == 0) throw TrainError("empty training set");
  Rng rng(cfg.seed);
  CircularProbe probe{Eigen::VectorXd(x.cols()), Eigen::VectorXd(x.cols())};
  fill_gaussian(probe.w1, rng, options.init_std);
  fill_gaussian(probe.w2, rng, options.init_std);
  return fit(probe, paired(cfg, OptimizerKind::adamw),
             [&](const CircularProbe& p, CircularProbe* g) {
               return circular_objective(p, x, labels, options.circular_loss, g);
             });
}

LinearProbe train_linear(const Eigen::MatrixXd& x, std::span<const int> labels,
                         double lambda) {
  check_labels(x, labels, kDigitClasses);
  if (x.rows() == 0) throw TrainError("empty training set");
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = labels[static_cast<std::size_t>(i)];
  auto solution = ridge_solve(x, y, lambda);
  return {std::move(solution.weights), solution.bias};
}

LogisticProbe train_logistic(const Eigen::MatrixXd& x, std::span<const int> labels,
                             const OptimizerConfig& cfg,
                             const ProbeTrainingOptions& options) {
  check_labels(x, labels, kDigitClasses);
  if (x.rows() == 0) throw TrainError("empty training set");
  Rng rng(cfg.seed);
  LogisticProbe probe{Eigen::MatrixXd(kDigitClasses, x.cols())};
  fill_gaussian(probe.weights, rng, options.init_std);
  return fit(probe, paired(cfg, OptimizerKind::adam),
             [&](const LogisticProbe& p, LogisticProbe* g) {
               return logistic_objective(p, x, labels, g);
             });
}

MlpProbe train_mlp(const Eigen::MatrixXd& x, std::span<const int> labels, int classes,
                   const OptimizerConfig& cfg, const ProbeTrainingOptions& options) {
  if (classes < 2) throw ArgumentError("mlp needs at least two classes");
  check_labels(x, labels, classes);
  if (x.rows() == 0) throw TrainError("empty training set");
  Rng rng(cfg.seed);
  MlpProbe probe = MlpProbe::zeros(static_cast<int>(x.cols()), classes);
  fill_gaussian(probe.w1, rng, options.init_std);
  fill_gaussian(probe.b1, rng, options.init_std);
  fill_gaussian(probe.w2, rng, options.init_std);
  fill_gaussian(probe.b2, rng, options.init_std);
  return fit(probe, paired(cfg, OptimizerKind::adam),
             [&](const MlpProbe& p, MlpProbe* g) { return mlp_objective(p, x, labels, g); });
}

Probe train_probe(ProbeKind kind, const ActivationDataset& train, int layer,
                  DigitTarget target, const OptimizerConfig& cfg,
                  const ProbeTrainingOptions& options) {
  if (train.empty()) throw TrainError("empty training set");
  const Eigen::MatrixXd x = train.layer_matrix(layer);
  const std::vector<int> labels = train.digits(target);
  switch (kind) {
    case ProbeKind::circular: return train_circular(x, labels, cfg, options);
    case ProbeKind::linear: return train_linear(x, labels, options.ridge_lambda);
    case ProbeKind::logistic: return train_logistic(x, labels, cfg, options);
    case ProbeKind::mlp: return train_mlp(x, labels, kDigitClasses, cfg, options);
  }
  throw ArgumentError("unknown probe kind");
}

ProbeReport evaluate_probe(const Probe& probe, const ActivationDataset& eval, int layer,
                           DigitTarget target) {
  if (eval.empty()) throw EvalError("empty evaluation set");
  const std::vector<int> predicted = predict_batch(probe, eval.layer_matrix(layer));
  ProbeReport report{layer, kind_of(probe), target, 0.0, 0,
                     static_cast<std::int64_t>(eval.size())};
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == eval.records[i].digit(target)) ++report.n_correct;
  }
  report.accuracy =
      static_cast<double>(report.n_correct) / static_cast<double>(report.n_eval);
  return report;
}

}  // namespace probekit
