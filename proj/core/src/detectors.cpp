#include "probekit/detectors.hpp"

#include "overloaded.hpp"
#include "probekit/errors.hpp"
#include "probekit/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace probekit {

using detail::overloaded;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double delta) { return delta - kTwoPi * std::nearbyint(delta / kTwoPi); }

double theta_of(double u, double v) { return circular_from_projections(u, v).theta; }

// d theta / d(u, v) for theta = atan2(u, v); zero at the origin.
void theta_grad(double u, double v, double& du, double& dv) {
  const double r2 = u * u + v * v;
  if (r2 == 0.0) {
    du = dv = 0.0;
    return;
  }
  du = v / r2;
  dv = -u / r2;
}

// z such that p_correct = sigmoid(z), plus dz/d(theta1 - theta2) and the
// partials with respect to scale and bias.
struct JointLogit {
  double z = 0.0;
  double dz_ddiff = 0.0;
  double dz_dscale = 0.0;
  double dz_dbias = 0.0;
};

JointLogit joint_logit(const JointCircular& joint, double theta1, double theta2) {
  const double diff = theta1 - theta2;
  if (joint.form == JointForm::signed_difference) return {diff, 1.0, 0.0, 0.0};
  const double wrapped = wrap_angle(diff);
  const double dist = std::abs(wrapped);
  const double sign = wrapped > 0.0 ? 1.0 : (wrapped < 0.0 ? -1.0 : 0.0);
  return {joint.scale * (joint.bias - dist), -joint.scale * sign, joint.bias - dist,
          joint.scale};
}

void require_both_classes(std::span<const int> labels) {
  bool seen[2] = {false, false};
  for (int y : labels) seen[y != 0 ? 1 : 0] = true;
  if (!seen[0] || !seen[1]) {
    throw TrainError("training labels contain a single correctness class");
  }
}

void fill_gaussian(Eigen::Ref<Eigen::VectorXd> v, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0, stddev);
}

}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::circular_separate: return "circular_separate";
    case DetectorKind::circular_joint: return "circular_joint";
    case DetectorKind::mlp_separate: return "mlp_separate";
    case DetectorKind::mlp_single: return "mlp_single";
    case DetectorKind::logistic_separate: return "logistic_separate";
  }
  return "unknown";
}

DetectorKind parse_detector_kind(std::string_view text) {
  for (DetectorKind kind : kAllDetectorKinds) {
    if (text == to_string(kind)) return kind;
  }
  throw ArgumentError("unknown detector kind '" + std::string(text) + "'");
}

std::string_view to_string(JointForm form) {
  return form == JointForm::circular_distance ? "circular_distance" : "signed_difference";
}

JointForm parse_joint_form(std::string_view text) {
  if (text == "circular_distance") return JointForm::circular_distance;
  if (text == "signed_difference") return JointForm::signed_difference;
  throw ArgumentError("unknown joint form '" + std::string(text) + "'");
}

bool is_separate(DetectorKind kind) {
  return kind == DetectorKind::circular_separate || kind == DetectorKind::mlp_separate ||
         kind == DetectorKind::logistic_separate;
}

ProbeKind separate_probe_kind(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::circular_separate: return ProbeKind::circular;
    case DetectorKind::mlp_separate: return ProbeKind::mlp;
    case DetectorKind::logistic_separate: return ProbeKind::logistic;
    default: break;
  }
  throw ArgumentError(std::string(to_string(kind)) + " is not a separate detector");
}

void validate_detector(const ErrorDetector& detector) {
  std::visit(
      overloaded{
          [&](const SeparateProbes& s) {
            if (!is_separate(detector.kind)) {
              throw ShapeError("separate probes given for " +
                               std::string(to_string(detector.kind)));
            }
            const ProbeKind want = separate_probe_kind(detector.kind);
            if (kind_of(s.model) != want || kind_of(s.gt) != want) {
              throw ShapeError("probe kinds do not match " +
                               std::string(to_string(detector.kind)));
            }
            validate_probe(s.model);
            validate_probe(s.gt);
            if (d_model_of(s.model) != d_model_of(s.gt)) {
              throw ShapeError("model and gt probes differ in d_model");
            }
          },
          [&](const JointCircular& j) {
            if (detector.kind != DetectorKind::circular_joint) {
              throw ShapeError("joint components given for " +
                               std::string(to_string(detector.kind)));
            }
            validate_probe(j.first);
            validate_probe(j.second);
            if (j.first.w1.size() != j.second.w1.size()) {
              throw ShapeError("joint weight pairs differ in d_model");
            }
            if (!std::isfinite(j.scale) || !std::isfinite(j.bias)) {
              throw DataError("joint scale or bias is not finite");
            }
          },
          [&](const MlpProbe& m) {
            if (detector.kind != DetectorKind::mlp_single) {
              throw ShapeError("single mlp given for " + std::string(to_string(detector.kind)));
            }
            validate_probe(m);
            if (m.classes() != 2) throw ShapeError("mlp_single needs exactly two logits");
          }},
      detector.components);
  if (!(detector.threshold > 0.0 && detector.threshold < 1.0)) {
    throw ArgumentError("detector threshold must lie in (0,1)");
  }
}

int d_model_of(const ErrorDetector& detector) {
  return std::visit(
      overloaded{[](const SeparateProbes& s) { return d_model_of(s.model); },
                 [](const JointCircular& j) { return static_cast<int>(j.first.w1.size()); },
                 [](const MlpProbe& m) { return static_cast<int>(m.w1.rows()); }},
      detector.components);
}

int detect_separate(const Probe& probe_model, const Probe& probe_gt,
                    const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predict(probe_model, x) == predict(probe_gt, x) ? 1 : 0;
}

double joint_probability(const JointCircular& joint, double theta1, double theta2) {
  return sigmoid(joint_logit(joint, theta1, theta2).z);
}

JointOutput detect_circular_joint(const ErrorDetector& detector,
                                  const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto* joint = std::get_if<JointCircular>(&detector.components);
  if (detector.kind != DetectorKind::circular_joint || joint == nullptr) {
    throw ArgumentError("detect_circular_joint needs a circular_joint detector");
  }
  const double p = joint_probability(*joint, circular_forward(joint->first, x).theta,
                                     circular_forward(joint->second, x).theta);
  return {p, p >= detector.threshold ? 1 : 0};
}

int detect_mlp_single(const ErrorDetector& detector,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto* mlp = std::get_if<MlpProbe>(&detector.components);
  if (detector.kind != DetectorKind::mlp_single || mlp == nullptr) {
    throw ArgumentError("detect_mlp_single needs an mlp_single detector");
  }
  return mlp_predict(*mlp, x);
}

int detect(const ErrorDetector& detector, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return std::visit(
      overloaded{[&](const SeparateProbes& s) { return detect_separate(s.model, s.gt, x); },
                 [&](const JointCircular&) { return detect_circular_joint(detector, x).correct; },
                 [&](const MlpProbe&) { return detect_mlp_single(detector, x); }},
      detector.components);
}

std::vector<int> detect_batch(const ErrorDetector& detector, const Eigen::MatrixXd& x) {
  if (x.cols() != d_model_of(detector)) {
    throw ShapeError("detector expects d_model " + std::to_string(d_model_of(detector)) +
                     ", activations have " + std::to_string(x.cols()));
  }
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  std::visit(
      overloaded{[&](const SeparateProbes& s) {
                   const auto a = predict_batch(s.model, x);
                   const auto b = predict_batch(s.gt, x);
                   for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] == b[i] ? 1 : 0;
                 },
                 [&](const JointCircular& j) {
                   const Eigen::VectorXd u1 = x * j.first.w1, v1 = x * j.first.w2;
                   const Eigen::VectorXd u2 = x * j.second.w1, v2 = x * j.second.w2;
                   for (Eigen::Index i = 0; i < x.rows(); ++i) {
                     const double p =
                         joint_probability(j, theta_of(u1[i], v1[i]), theta_of(u2[i], v2[i]));
                     out[static_cast<std::size_t>(i)] = p >= detector.threshold ? 1 : 0;
                   }
                 },
                 [&](const MlpProbe& m) {
                   const Eigen::MatrixXd logits = mlp_logits_batch(m, x);
                   for (Eigen::Index i = 0; i < x.rows(); ++i) {
                     out[static_cast<std::size_t>(i)] = argmax_lowest(logits.row(i).transpose());
                   }
                 }},
      detector.components);
  return out;
}

// ---- joint objective ------------------------------------------------------

double joint_objective(const JointCircular& joint, const Eigen::MatrixXd& x,
                       std::span<const int> correct, JointCircular* grad) {
  if (x.rows() != static_cast<Eigen::Index>(correct.size())) {
    throw ShapeError("activation rows and correctness labels differ");
  }
  const Eigen::Index n = x.rows();
  if (n == 0) return 0.0;
  const Eigen::VectorXd u1 = x * joint.first.w1, v1 = x * joint.first.w2;
  const Eigen::VectorXd u2 = x * joint.second.w1, v2 = x * joint.second.w2;
  Eigen::VectorXd du1(n), dv1(n), du2(n), dv2(n);
  double total = 0.0, d_scale = 0.0, d_bias = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = correct[static_cast<std::size_t>(i)] != 0 ? 1 : 0;
    const JointLogit logit =
        joint_logit(joint, theta_of(u1[i], v1[i]), theta_of(u2[i], v2[i]));
    const double p = sigmoid(logit.z);
    total += binary_cross_entropy(p, y);
    // Inside the clamp, d BCE / dz = p - y; the clamp flattens the loss.
    const bool clamped = p < kBceEpsilon || p > 1.0 - kBceEpsilon;
    const double dz = clamped ? 0.0 : p - static_cast<double>(y);
    const double dd = dz * logit.dz_ddiff;
    d_scale += dz * logit.dz_dscale;
    d_bias += dz * logit.dz_dbias;
    double gu = 0.0, gv = 0.0;
    theta_grad(u1[i], v1[i], gu, gv);
    du1[i] = dd * gu;
    dv1[i] = dd * gv;
    theta_grad(u2[i], v2[i], gu, gv);
    du2[i] = -dd * gu;
    dv2[i] = -dd * gv;
  }
  const double scale = 1.0 / static_cast<double>(n);
  if (grad) {
    grad->first.w1.noalias() = x.transpose() * du1 * scale;
    grad->first.w2.noalias() = x.transpose() * dv1 * scale;
    grad->second.w1.noalias() = x.transpose() * du2 * scale;
    grad->second.w2.noalias() = x.transpose() * dv2 * scale;
    grad->scale = d_scale * scale;
    grad->bias = d_bias * scale;
    grad->form = joint.form;
  }
  return total * scale;
}

Eigen::VectorXd flatten(const JointCircular& joint) {
  const Eigen::Index d = joint.first.w1.size();
  Eigen::VectorXd flat(4 * d + 2);
  flat << joint.first.w1, joint.first.w2, joint.second.w1, joint.second.w2, joint.scale,
      joint.bias;
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, JointCircular& joint) {
  const Eigen::Index d = joint.first.w1.size();
  joint.first.w1 = flat.segment(0, d);
  joint.first.w2 = flat.segment(d, d);
  joint.second.w1 = flat.segment(2 * d, d);
  joint.second.w2 = flat.segment(3 * d, d);
  joint.scale = flat[4 * d];
  joint.bias = flat[4 * d + 1];
}

// ---- training -------------------------------------------------------------

ErrorDetector train_detector(DetectorKind kind, const ActivationDataset& train, int layer,
                             const OptimizerConfig& cfg,
                             const DetectorTrainingOptions& options) {
  if (train.empty()) throw TrainError("empty training set");
  ErrorDetector detector;
  detector.kind = kind;
  detector.layer = layer;

  if (is_separate(kind)) {
    const ProbeKind probe_kind = separate_probe_kind(kind);
    Probe model = train_probe(probe_kind, train, layer, DigitTarget::model_digit, cfg,
                              options.probe);
    Probe gt = train_probe(probe_kind, train, layer, DigitTarget::gt_digit, cfg,
                           options.probe);
    detector.components = SeparateProbes{std::move(model), std::move(gt)};
    return detector;
  }

  const std::vector<int> correct = train.correctness();
  require_both_classes(correct);
  const Eigen::MatrixXd x = train.layer_matrix(layer);

  if (kind == DetectorKind::mlp_single) {
    OptimizerConfig adam = cfg;
    if (adam.kind != OptimizerKind::adam) {
      adam.kind = OptimizerKind::adam;
      adam.weight_decay.reset();
    }
    detector.components = train_mlp(x, correct, 2, adam, options.probe);
    return detector;
  }

  OptimizerConfig adamw = cfg;
  if (adamw.kind != OptimizerKind::adamw) {
    adamw.kind = OptimizerKind::adamw;
    adamw.weight_decay.reset();
  }
  const Eigen::Index d = x.cols();
  Rng rng(cfg.seed);
  JointCircular joint;
  joint.form = options.joint_form;
  for (CircularProbe* pair : {&joint.first, &joint.second}) {
    pair->w1.resize(d);
    pair->w2.resize(d);
    fill_gaussian(pair->w1, rng, options.probe.init_std);
    fill_gaussian(pair->w2, rng, options.probe.init_std);
  }
  Eigen::VectorXd params = flatten(joint);
  JointCircular scratch = joint;
  minimize(params, adamw, [&](const Eigen::VectorXd& flat, Eigen::VectorXd& g) {
    unflatten(flat, joint);
    const double loss = joint_objective(joint, x, correct, &scratch);
    g = flatten(scratch);
    return loss;
  });
  unflatten(params, joint);
  detector.components = std::move(joint);
  return detector;
}

// ---- evaluation -----------------------------------------------------------

DetectorReport make_report(std::span<const int> actual, std::span<const int> predicted) {
  if (actual.size() != predicted.size()) {
    throw ShapeError("actual and predicted correctness differ in length");
  }
  if (actual.empty()) throw EvalError("empty evaluation set");
  DetectorReport report;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ++report.confusion[actual[i] != 0 ? 1 : 0][predicted[i] != 0 ? 1 : 0];
  }
  report.n_eval = static_cast<std::int64_t>(actual.size());
  const auto n = static_cast<double>(report.n_eval);
  const std::int64_t tp = report.true_positives(), fp = report.false_positives();
  const std::int64_t fn = report.false_negatives(), tn = report.true_negatives();
  report.accuracy = static_cast<double>(tp + tn) / n;
  report.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  report.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const std::int64_t n_errors = tp + fn;
  report.majority_baseline =
      static_cast<double>(std::max(n_errors, report.n_eval - n_errors)) / n;
  return report;
}

DetectorReport evaluate_detector(const ErrorDetector& detector,
                                 const ActivationDataset& eval, int layer) {
  if (eval.empty()) throw EvalError("empty evaluation set");
  const std::vector<int> predicted = detect_batch(detector, eval.layer_matrix(layer));
  const std::vector<int> actual = eval.correctness();
  DetectorReport report = make_report(actual, predicted);
  report.layer = layer;
  report.kind = detector.kind;
  return report;
}

}  // namespace probekit
