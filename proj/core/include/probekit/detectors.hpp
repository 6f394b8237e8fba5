#pragma once

#include "probekit/dataset.hpp"
#include "probekit/optim.hpp"
#include "probekit/probes.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace probekit {

enum class DetectorKind {
  circular_separate,
  circular_joint,
  mlp_separate,
  mlp_single,
  logistic_separate,
};

std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view text);

inline constexpr std::array<DetectorKind, 5> kAllDetectorKinds = {
    DetectorKind::circular_separate, DetectorKind::circular_joint,
    DetectorKind::mlp_separate, DetectorKind::mlp_single,
    DetectorKind::logistic_separate};

/// Probe kind used by a separate detector; throws ArgumentError otherwise.
ProbeKind separate_probe_kind(DetectorKind kind);
bool is_separate(DetectorKind kind);

/// A model-digit probe and a GT-digit probe; correct iff they agree.
struct SeparateProbes {
  Probe model;
  Probe gt;
};

enum class JointForm {
  /// p = sigmoid(scale * (bias - |wrap(theta1 - theta2)|)), wrap into [-pi, pi].
  circular_distance,
  /// p = sigmoid(theta1 - theta2); scale and bias are unused.
  signed_difference,
};

std::string_view to_string(JointForm form);
JointForm parse_joint_form(std::string_view text);

/// Two circular weight pairs trained jointly on the correctness bit.
struct JointCircular {
  CircularProbe first;
  CircularProbe second;
  double scale = 1.0;
  double bias = std::numbers::pi / 10.0;
  JointForm form = JointForm::circular_distance;
};

using DetectorComponents = std::variant<SeparateProbes, JointCircular, MlpProbe>;

/// Maps one activation vector to a correctness prediction (1 = correct).
struct ErrorDetector {
  DetectorKind kind = DetectorKind::circular_separate;
  int layer = 0;
  DetectorComponents components;
  double threshold = 0.5;  // joint kind only, p >= threshold means correct
};

/// Checks that the components match the kind and have one d_model.
void validate_detector(const ErrorDetector& detector);
int d_model_of(const ErrorDetector& detector);

/// 1 iff the two discrete predictions agree.
int detect_separate(const Probe& probe_model, const Probe& probe_gt,
                    const Eigen::Ref<const Eigen::VectorXd>& x);

struct JointOutput {
  double p_correct = 0.5;
  int correct = 1;
};

double joint_probability(const JointCircular& joint, double theta1, double theta2);
JointOutput detect_circular_joint(const ErrorDetector& detector,
                                  const Eigen::Ref<const Eigen::VectorXd>& x);

/// argmax over two logits, index 1 = correct; ties go to 0.
int detect_mlp_single(const ErrorDetector& detector,
                      const Eigen::Ref<const Eigen::VectorXd>& x);

int detect(const ErrorDetector& detector, const Eigen::Ref<const Eigen::VectorXd>& x);
std::vector<int> detect_batch(const ErrorDetector& detector, const Eigen::MatrixXd& x);

// ---- training -------------------------------------------------------------

struct DetectorTrainingOptions {
  ProbeTrainingOptions probe;
  JointForm joint_form = JointForm::circular_distance;
};

/// Mean binary cross-entropy of the joint detector; label 1 = correct.
/// `grad` receives the gradient in the same layout when non-null.
double joint_objective(const JointCircular& joint, const Eigen::MatrixXd& x,
                       std::span<const int> correct, JointCircular* grad = nullptr);

Eigen::VectorXd flatten(const JointCircular& joint);
void unflatten(const Eigen::VectorXd& flat, JointCircular& joint);

/// Separate kinds train two probes through train_probe; the joint kind runs
/// AdamW on binary cross-entropy; mlp_single trains a two-class MLP with Adam.
/// Throws TrainError on empty data or single-class data for supervised kinds.
ErrorDetector train_detector(DetectorKind kind, const ActivationDataset& train, int layer,
                             const OptimizerConfig& cfg,
                             const DetectorTrainingOptions& options = {});

// ---- evaluation -----------------------------------------------------------

/// Counts indexed [actual][predicted], 1 = correct. Precision and recall
/// treat an error (0) as the positive class.
struct DetectorReport {
  int layer = 0;
  DetectorKind kind = DetectorKind::circular_separate;
  std::array<std::array<std::int64_t, 2>, 2> confusion{};
  std::int64_t n_eval = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is flagged
  double recall = 0.0;     // 0 when there are no errors
  double majority_baseline = 0.0;

  std::int64_t true_positives() const { return confusion[0][0]; }
  std::int64_t false_positives() const { return confusion[1][0]; }
  std::int64_t false_negatives() const { return confusion[0][1]; }
  std::int64_t true_negatives() const { return confusion[1][1]; }
};

DetectorReport make_report(std::span<const int> actual, std::span<const int> predicted);

/// Throws EvalError on an empty dataset.
DetectorReport evaluate_detector(const ErrorDetector& detector,
                                 const ActivationDataset& eval, int layer);

}  // namespace probekit
