#include "probekit/errors.hpp"
#include "probekit/probes.hpp"
#include "probekit/synth.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace probekit {
namespace {

SyntheticSpec base_spec() {
  SyntheticSpec spec;
  spec.d_model = 24;
  spec.n_records = 500;
  spec.seed = 3;
  return spec;
}

TEST(Synth, IdenticalSpecsGiveIdenticalBytes) {
  SyntheticSpec spec = base_spec();
  spec.error_rate = 0.2;
  spec.context_rank = 3;
  spec.context_scale = 0.5;
  testing::TempDir a("synth_a"), b("synth_b");
  save_dataset(generate(spec), a.path());
  save_dataset(generate(spec), b.path());
  for (const char* name : {"manifest.json", "labels.jsonl", "act_layer0.f32"}) {
    EXPECT_EQ(testing::read_bytes(a / name), testing::read_bytes(b / name)) << name;
  }
  spec.seed = 4;
  EXPECT_NE(generate(spec).records, generate(base_spec()).records);
}

TEST(Synth, LabelsAndManifest) {
  SyntheticSpec spec = base_spec();
  spec.error_rate = 0.3;
  spec.n_records = 2000;
  const ActivationDataset ds = generate(spec);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_EQ(ds.manifest.model_name, "synthetic-circular");
  EXPECT_EQ(ds.manifest.correctness_basis, CorrectnessBasis::digit);
  EXPECT_EQ(ds.n_layers(), 1);
  int errors = 0;
  for (const auto& r : ds.records) {
    errors += !r.correct;
    EXPECT_EQ(r.correct, r.model_digit == r.gt_digit);
  }
  // Binomial(2000, 0.3): mean 600, sd about 20.5.
  EXPECT_GT(errors, 520);
  EXPECT_LT(errors, 680);
}

TEST(Synth, PlantedDirectionsOrthonormal) {
  SyntheticSpec spec = base_spec();
  spec.context_rank = 5;
  const Eigen::MatrixXd planes = planted_directions(spec);
  const Eigen::MatrixXd context = context_directions(spec);
  ASSERT_EQ(planes.cols(), 4);
  ASSERT_EQ(context.cols(), 5);
  Eigen::MatrixXd all(spec.d_model, 9);
  all << planes, context;
  EXPECT_LT((all.transpose() * all - Eigen::MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff(),
            1e-12);
  spec.geometry = Geometry::linear;
  EXPECT_EQ(planted_directions(spec).cols(), 2);
  spec.geometry = Geometry::random;
  EXPECT_EQ(planted_directions(spec).cols(), 0);
}

TEST(Synth, SharedPlaneSeedSharesPlanes) {
  SyntheticSpec a = base_spec(), b = base_spec();
  a.seed = 1;
  b.seed = 2;
  a.plane_seed = 50;
  b.plane_seed = 50;
  EXPECT_TRUE(planted_directions(a) == planted_directions(b));
  b.plane_seed = 51;
  EXPECT_FALSE(planted_directions(a) == planted_directions(b));
}

TEST(Synth, AnalyticProbeIsExactWithoutNoise) {
  SyntheticSpec spec = base_spec();
  spec.noise_sigma = 0.0;
  spec.error_rate = 0.4;
  const ActivationDataset ds = generate(spec);
  const Eigen::MatrixXd planes = planted_directions(spec);
  const CircularProbe model{planes.col(1), planes.col(0)};
  const CircularProbe gt{planes.col(3), planes.col(2)};
  EXPECT_DOUBLE_EQ(evaluate_probe(model, ds, 0, DigitTarget::model_digit).accuracy, 1.0);
  EXPECT_DOUBLE_EQ(evaluate_probe(gt, ds, 0, DigitTarget::gt_digit).accuracy, 1.0);
}

TEST(Synth, RandomGeometryIsAtChance) {
  SyntheticSpec spec = base_spec();
  spec.geometry = Geometry::random;
  spec.n_records = 1000;
  const ActivationDataset train = generate(spec);
  spec.seed = 9;
  const ActivationDataset test = generate(spec);
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 300;
  const Probe probe = train_probe(ProbeKind::logistic, train, 0, DigitTarget::model_digit, cfg);
  const double accuracy = evaluate_probe(probe, test, 0, DigitTarget::model_digit).accuracy;
  EXPECT_GT(accuracy, 0.04);
  EXPECT_LT(accuracy, 0.18);
}

TEST(Synth, SpecValidation) {
  SyntheticSpec spec = base_spec();
  spec.error_rate = 1.5;
  EXPECT_THROW(generate(spec), ArgumentError);
  spec = base_spec();
  spec.d_model = 3;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec = base_spec();
  spec.context_rank = 21;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec = base_spec();
  spec.noise_sigma = -1.0;
  EXPECT_THROW(spec.validate(), ArgumentError);
  EXPECT_EQ(parse_geometry("linear"), Geometry::linear);
  EXPECT_THROW(parse_geometry("spiral"), ArgumentError);
}

}  // namespace
}  // namespace probekit
