#pragma once

// 178 wrong steps and 22 right steps that a stub detector flags, plus 300
// right steps it leaves alone. Reruns are built to a chosen number of fixed
// errors and changed right answers.

#include "probekit/correction.hpp"
#include "probekit/detectors.hpp"
#include "probekit/probes.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace probekit::testing {

struct CorrectionFixture {
  static constexpr int kWrong = 178;
  static constexpr int kFlaggedRight = 22;
  static constexpr int kUnflaggedRight = 300;

  ActivationDataset ds;
  StepMap steps;
  ErrorDetector detector;
  std::vector<std::int64_t> wrong_ids;
  std::vector<std::int64_t> flagged_right_ids;
};

/// Two-class MLP that predicts correct iff x[0] > 0.5.
inline ErrorDetector threshold_stub(int d_model) {
  MlpProbe net = MlpProbe::zeros(d_model, 2, 1);
  net.w1(0, 0) = 1.0;
  net.w2(0, 1) = 2.0;
  net.b2[0] = 1.0;
  ErrorDetector detector;
  detector.kind = DetectorKind::mlp_single;
  detector.components = net;
  return detector;
}

inline CorrectionFixture make_correction_fixture() {
  CorrectionFixture f;
  const int n = CorrectionFixture::kWrong + CorrectionFixture::kFlaggedRight +
                CorrectionFixture::kUnflaggedRight;
  const int d = 3;
  f.ds.manifest = make_manifest(d, 1, n);
  f.ds.manifest.correctness_basis = CorrectnessBasis::full_number;
  ActivationMatrix x = ActivationMatrix::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    const std::int64_t id = 1000 + i;
    const std::int64_t a = 100 + i, b = 250 + 2 * i, gt = a + b;
    const bool wrong = i < CorrectionFixture::kWrong;
    const bool flagged = i < CorrectionFixture::kWrong + CorrectionFixture::kFlaggedRight;
    const std::int64_t said = wrong ? gt + 100 : gt;
    const std::string text =
        "<<" + std::to_string(a) + "+" + std::to_string(b) + "=" + std::to_string(said) + ">>";
    f.steps[id] = make_step(id, text, gt);

    RecordLabel r;
    r.record_id = id;
    r.setting = Setting::structured_cot;
    r.step_index = 0;
    r.operands = {a, b};
    r.gt_digit = static_cast<int>((gt / 100) % 10);
    r.model_digit = static_cast<int>((said / 100) % 10);
    r.correct = !wrong;
    f.ds.records.push_back(r);
    x(i, 0) = flagged ? 0.0f : 1.0f;
    x(i, 1) = static_cast<float>(i % 7);
    if (wrong) f.wrong_ids.push_back(id);
    else if (flagged) f.flagged_right_ids.push_back(id);
  }
  f.ds.activations.push_back(x);
  f.detector = threshold_stub(d);
  return f;
}

/// First `fixed` wrong steps rerun to the ground truth, the rest repeat
/// their wrong answer; the first `changed` right steps rerun to a new value.
inline RerunMap make_reruns(const CorrectionFixture& f, int fixed, int changed) {
  RerunMap reruns;
  for (std::size_t i = 0; i < f.wrong_ids.size(); ++i) {
    const CotStep& s = f.steps.at(f.wrong_ids[i]);
    reruns[s.record_id] = static_cast<int>(i) < fixed ? s.gt_result : s.model_result;
  }
  for (std::size_t i = 0; i < f.flagged_right_ids.size(); ++i) {
    const CotStep& s = f.steps.at(f.flagged_right_ids[i]);
    reruns[s.record_id] = static_cast<int>(i) < changed ? s.model_result + 1 : s.model_result;
  }
  return reruns;
}

}  // namespace probekit::testing
