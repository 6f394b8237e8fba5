#include "probekit/detectors.hpp"
#include "probekit/errors.hpp"
#include "probekit/synth.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace probekit {
namespace {

constexpr double kPi = std::numbers::pi;

// Linear probe reading coordinate `axis` of a 2-d input as the digit.
LinearProbe axis_probe(int axis) {
  LinearProbe p{Eigen::VectorXd::Zero(2), 0.0};
  p.w[axis] = 1.0;
  return p;
}

ErrorDetector stub_separate() {
  ErrorDetector detector;
  detector.kind = DetectorKind::circular_separate;
  detector.components = SeparateProbes{axis_probe(0), axis_probe(1)};
  return detector;
}

TEST(Separate, AgreementOverAllDigitPairs) {
  int checked = 0;
  for (int m = 0; m < 10; ++m) {
    for (int g = 0; g < 10; ++g) {
      const Eigen::Vector2d x(m, g);
      EXPECT_EQ(detect_separate(axis_probe(0), axis_probe(1), x), m == g ? 1 : 0);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 100);
}

TEST(Separate, BatchMatchesSingle) {
  const ErrorDetector detector = stub_separate();
  Eigen::MatrixXd x(3, 2);
  x << 3, 3, 4, 5, 9, 9;
  EXPECT_EQ(detect_batch(detector, x), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(detect(detector, Eigen::Vector2d(1, 2)), 0);
}

JointCircular joint_with(JointForm form) {
  JointCircular j;
  j.form = form;
  j.first = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  j.second = j.first;
  return j;
}

TEST(Joint, DistanceFormProperties) {
  const JointCircular j = joint_with(JointForm::circular_distance);
  // At distance b the probability is exactly 1/2.
  EXPECT_NEAR(joint_probability(j, 1.0, 1.0 + kPi / 10), 0.5, 1e-12);
  EXPECT_GT(joint_probability(j, 2.0, 2.0), 0.5);
  EXPECT_LT(joint_probability(j, 0.0, kPi), 0.5);
  // Symmetric and periodic across the seam.
  EXPECT_NEAR(joint_probability(j, 0.1, 0.4), joint_probability(j, 0.4, 0.1), 1e-15);
  EXPECT_NEAR(joint_probability(j, 0.05, 2 * kPi - 0.05), joint_probability(j, 1.0, 1.1), 1e-12);
  // Monotone decreasing in the wrapped distance.
  double previous = 1.0;
  for (double gap = 0.0; gap <= kPi; gap += 0.1) {
    const double p = joint_probability(j, 3.0, 3.0 + gap);
    EXPECT_LT(p, previous);
    previous = p;
  }
}

TEST(Joint, SignedFormIsSigmoidOfDifference) {
  const JointCircular j = joint_with(JointForm::signed_difference);
  EXPECT_DOUBLE_EQ(joint_probability(j, 1.0, 1.0), 0.5);
  EXPECT_NEAR(joint_probability(j, 2.0, 1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  double previous = 0.0;
  for (double t1 = 0.0; t1 < 2 * kPi; t1 += 0.25) {
    const double p = joint_probability(j, t1, 0.5);
    EXPECT_GT(p, previous);
    previous = p;
  }
}

TEST(Joint, ThresholdDecides) {
  ErrorDetector detector;
  detector.kind = DetectorKind::circular_joint;
  JointCircular j = joint_with(JointForm::circular_distance);
  j.first.w1[0] = 1.0;
  j.first.w2[1] = 1.0;
  j.second = j.first;
  detector.components = j;
  // Identical pairs give distance 0 and p = sigmoid(pi/10).
  const JointOutput out = detect_circular_joint(detector, Eigen::Vector2d(0.3, 0.8));
  EXPECT_NEAR(out.p_correct, 1.0 / (1.0 + std::exp(-kPi / 10)), 1e-12);
  EXPECT_EQ(out.correct, 1);
  detector.threshold = 0.6;
  EXPECT_EQ(detect_circular_joint(detector, Eigen::Vector2d(0.3, 0.8)).correct, 0);
}

TEST(MlpSingle, TieGoesToError) {
  ErrorDetector detector;
  detector.kind = DetectorKind::mlp_single;
  MlpProbe net = MlpProbe::zeros(2, 2, 3);
  detector.components = net;
  EXPECT_EQ(detect_mlp_single(detector, Eigen::Vector2d(1, 1)), 0);
  net.b2[1] = 0.5;
  detector.components = net;
  EXPECT_EQ(detect_mlp_single(detector, Eigen::Vector2d(1, 1)), 1);
}

TEST(Detector, ValidationCatchesMismatch) {
  ErrorDetector detector = stub_separate();
  detector.kind = DetectorKind::circular_joint;
  EXPECT_THROW(validate_detector(detector), ShapeError);
  ErrorDetector mixed = stub_separate();
  std::get<SeparateProbes>(mixed.components).gt = LinearProbe{Eigen::VectorXd::Zero(3), 0.0};
  EXPECT_THROW(validate_detector(mixed), ShapeError);
  EXPECT_EQ(parse_detector_kind("mlp_single"), DetectorKind::mlp_single);
  EXPECT_THROW(parse_detector_kind("svm"), ArgumentError);
  EXPECT_EQ(separate_probe_kind(DetectorKind::logistic_separate), ProbeKind::logistic);
  EXPECT_THROW(separate_probe_kind(DetectorKind::mlp_single), ArgumentError);
}

TEST(Report, Arithmetic) {
  // actual: 3 errors, 5 correct. predicted flags two of the errors and one correct.
  const std::vector<int> actual{0, 0, 0, 1, 1, 1, 1, 1};
  const std::vector<int> predicted{0, 0, 1, 0, 1, 1, 1, 1};
  const DetectorReport r = make_report(actual, predicted);
  EXPECT_EQ(r.true_positives(), 2);
  EXPECT_EQ(r.false_negatives(), 1);
  EXPECT_EQ(r.false_positives(), 1);
  EXPECT_EQ(r.true_negatives(), 4);
  EXPECT_DOUBLE_EQ(r.accuracy, 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.majority_baseline, 5.0 / 8.0);
}

TEST(Report, UndefinedRatesAreZero) {
  const std::vector<int> all_correct{1, 1, 1};
  const DetectorReport r = make_report(all_correct, all_correct);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_THROW(make_report(std::vector<int>{}, std::vector<int>{}), EvalError);
  EXPECT_THROW(make_report(std::vector<int>{1}, std::vector<int>{1, 0}), ShapeError);
}

ActivationDataset noisy_errors(std::uint64_t seed, double error_rate) {
  SyntheticSpec spec;
  spec.d_model = 16;
  spec.n_records = 400;
  spec.error_rate = error_rate;
  spec.seed = seed;
  spec.plane_seed = 77;
  return generate(spec);
}

TEST(Training, SingleClassRejected) {
  const ActivationDataset ds = noisy_errors(1, 0.0);
  OptimizerConfig cfg;
  cfg.epochs = 5;
  EXPECT_THROW(train_detector(DetectorKind::circular_joint, ds, 0, cfg), TrainError);
  EXPECT_THROW(train_detector(DetectorKind::mlp_single, ds, 0, cfg), TrainError);
  // Separate kinds train on digits, so single-class correctness is fine.
  EXPECT_NO_THROW(train_detector(DetectorKind::logistic_separate, ds, 0, cfg));
}

TEST(Training, SeparateAndJointDetectErrors) {
  const ActivationDataset train = noisy_errors(2, 0.5), test = noisy_errors(3, 0.5);
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 2000;
  const ErrorDetector separate = train_detector(DetectorKind::circular_separate, train, 0, cfg);
  EXPECT_GE(evaluate_detector(separate, test, 0).accuracy, 0.9);

  cfg.weight_decay = 0.1;
  const ErrorDetector joint = train_detector(DetectorKind::circular_joint, train, 0, cfg);
  EXPECT_EQ(std::get<JointCircular>(joint.components).form, JointForm::circular_distance);
  const DetectorReport report = evaluate_detector(joint, test, 0);
  EXPECT_GE(report.accuracy, 0.85);
  EXPECT_GT(report.accuracy, report.majority_baseline);
}

}  // namespace
}  // namespace probekit
