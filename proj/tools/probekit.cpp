// probekit: command line front end for the probing toolkit.

#include "probekit/correction.hpp"
#include "probekit/dataset.hpp"
#include "probekit/detectors.hpp"
#include "probekit/errors.hpp"
#include "probekit/param_io.hpp"
#include "probekit/pca.hpp"
#include "probekit/probes.hpp"
#include "probekit/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace probekit;

namespace {

struct TrainFlags {
  std::uint64_t seed = 0;
  int epochs = 10000;
  double lr = 1e-3;
  std::optional<double> weight_decay;
  std::string circular_loss = "wrapped";
  double ridge_lambda = 0.1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Initialization seed");
    cmd->add_option("--epochs", epochs, "Full-batch steps")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--weight-decay", weight_decay, "Override the optimizer's default decay");
    cmd->add_option("--circular-loss", circular_loss, "Circular probe loss")
        ->check(CLI::IsMember({"wrapped", "unwrapped"}));
    cmd->add_option("--ridge-lambda", ridge_lambda, "Linear probe ridge penalty");
  }

  OptimizerConfig optimizer(OptimizerKind kind) const {
    OptimizerConfig cfg = OptimizerConfig::with_kind(kind);
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.weight_decay = weight_decay;
    return cfg;
  }

  ProbeTrainingOptions probe_options() const {
    ProbeTrainingOptions options;
    options.circular_loss =
        circular_loss == "wrapped" ? CircularLoss::wrapped : CircularLoss::unwrapped;
    options.ridge_lambda = ridge_lambda;
    return options;
  }
};

ojson probe_report_json(const ProbeReport& r) {
  return {{"layer", r.layer},
          {"kind", to_string(r.kind)},
          {"target", to_string(r.target)},
          {"accuracy", r.accuracy},
          {"n_correct", r.n_correct},
          {"n_eval", r.n_eval}};
}

ojson detector_report_json(const DetectorReport& r, std::uint64_t checksum) {
  return {{"layer", r.layer},
          {"kind", to_string(r.kind)},
          {"n_eval", r.n_eval},
          {"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"majority_baseline", r.majority_baseline},
          {"confusion",
           {{"actual_error", {{"pred_error", r.confusion[0][0]}, {"pred_correct", r.confusion[0][1]}}},
            {"actual_correct",
             {{"pred_error", r.confusion[1][0]}, {"pred_correct", r.confusion[1][1]}}}}},
          {"parameter_checksum", checksum_hex(checksum)}};
}

void print(const ojson& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate activation probes, error detectors and correction plans"};
  app.require_subcommand(1);

  // ---- dataset ----
  auto* dataset = app.add_subcommand("dataset", "Validate, sample or split a dataset");
  dataset->require_subcommand(1);

  std::string validate_dir;
  auto* validate = dataset->add_subcommand("validate", "Load a dataset and check every invariant");
  validate->add_option("dir", validate_dir)->required();

  std::string sample_dir, sample_out, sample_key = "model";
  SamplingConfig sampling;
  bool no_error_mix = false;
  auto* sample = dataset->add_subcommand("sample", "Balanced per-digit sampling");
  sample->add_option("dir", sample_dir)->required();
  sample->add_option("--cap", sampling.per_class_cap, "Records per digit class")
      ->check(CLI::PositiveNumber);
  sample->add_option("--seed", sampling.seed);
  sample->add_option("--key", sample_key)->check(CLI::IsMember({"model", "gt"}));
  sample->add_option("--digit-min", sampling.digit_min)->check(CLI::Range(0, 9));
  sample->add_option("--digit-max", sampling.digit_max)->check(CLI::Range(0, 9));
  sample->add_flag("--no-error-mix", no_error_mix, "Ignore correctness when sampling");
  sample->add_option("--out", sample_out)->required();

  std::string split_dir, split_out, split_key = "model";
  double train_frac = 0.7;
  std::uint64_t split_seed = 0;
  auto* split = dataset->add_subcommand("split", "Stratified train/test split into out/train and out/test");
  split->add_option("dir", split_dir)->required();
  split->add_option("--train-frac", train_frac)->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", split_seed);
  split->add_option("--key", split_key)->check(CLI::IsMember({"model", "gt"}));
  split->add_option("--out", split_out)->required();

  // ---- probe ----
  auto* probe = app.add_subcommand("probe", "Train or evaluate a digit probe");
  probe->require_subcommand(1);

  std::string probe_data, probe_out, probe_kind = "circular", probe_target = "model";
  int probe_layer = 0;
  TrainFlags probe_flags;
  auto* probe_train = probe->add_subcommand("train", "Train one probe on one layer");
  probe_train->add_option("--data", probe_data)->required();
  probe_train->add_option("--layer", probe_layer)->required();
  probe_train->add_option("--kind", probe_kind)
      ->check(CLI::IsMember({"circular", "linear", "logistic", "mlp"}));
  probe_train->add_option("--target", probe_target)->check(CLI::IsMember({"model", "gt"}));
  probe_train->add_option("--out", probe_out)->required();
  probe_flags.attach(probe_train);

  std::string probe_file, probe_eval_data;
  std::optional<int> probe_eval_layer;
  auto* probe_eval = probe->add_subcommand("eval", "Accuracy of a saved probe");
  probe_eval->add_option("--probe", probe_file)->required();
  probe_eval->add_option("--data", probe_eval_data)->required();
  probe_eval->add_option("--layer", probe_eval_layer, "Defaults to the training layer");

  // ---- detect ----
  auto* detect = app.add_subcommand("detect", "Train or evaluate an error detector");
  detect->require_subcommand(1);

  std::string det_data, det_out, det_kind = "mlp_single", joint_form = "circular_distance";
  int det_layer = 0;
  TrainFlags det_flags;
  auto* det_train = detect->add_subcommand("train", "Train one detector on one layer");
  det_train->add_option("--data", det_data)->required();
  det_train->add_option("--layer", det_layer)->required();
  det_train->add_option("--kind", det_kind)
      ->check(CLI::IsMember({"circular_separate", "circular_joint", "mlp_separate", "mlp_single",
                             "logistic_separate"}));
  det_train->add_option("--joint-form", joint_form)
      ->check(CLI::IsMember({"circular_distance", "signed_difference"}));
  det_train->add_option("--out", det_out)->required();
  det_flags.attach(det_train);

  std::string det_file, det_eval_data;
  auto* det_eval = detect->add_subcommand("eval", "Accuracy, precision and recall of a saved detector");
  det_eval->add_option("--detector", det_file)->required();
  det_eval->add_option("--data", det_eval_data)->required();

  std::string cross_source, cross_target;
  auto* det_cross = detect->add_subcommand(
      "cross-eval", "Evaluate one saved detector on two datasets without retraining");
  det_cross->add_option("--detector", det_file)->required();
  det_cross->add_option("--source", cross_source, "Dataset of the training setting")->required();
  det_cross->add_option("--target", cross_target, "Dataset of the transfer setting")->required();

  // ---- pca ----
  std::string pca_data, pca_out, pca_label = "model";
  int pca_layer = 0, pca_k = 2;
  auto* pca = app.add_subcommand("pca", "Export principal-component projections as CSV");
  pca->add_option("--data", pca_data)->required();
  pca->add_option("--layer", pca_layer)->required();
  pca->add_option("--components", pca_k)->check(CLI::PositiveNumber);
  pca->add_option("--label", pca_label)->check(CLI::IsMember({"model", "gt"}));
  pca->add_option("--out", pca_out)->required();

  // ---- synth ----
  SyntheticSpec spec;
  std::string geometry = "circular", synth_out;
  std::optional<std::uint64_t> plane_seed;
  auto* synth = app.add_subcommand("synth", "Write a planted-geometry dataset");
  synth->add_option("--geometry", geometry)->check(CLI::IsMember({"circular", "linear", "random"}));
  synth->add_option("--d", spec.d_model)->check(CLI::Range(4, 1 << 20));
  synth->add_option("--n", spec.n_records)->check(CLI::NonNegativeNumber);
  synth->add_option("--noise", spec.noise_sigma)->check(CLI::NonNegativeNumber);
  synth->add_option("--signal-scale", spec.signal_scale)->check(CLI::PositiveNumber);
  synth->add_option("--error-rate", spec.error_rate)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", spec.seed);
  synth->add_option("--plane-seed", plane_seed, "Defaults to --seed");
  synth->add_option("--context-rank", spec.context_rank)->check(CLI::NonNegativeNumber);
  synth->add_option("--context-scale", spec.context_scale)->check(CLI::NonNegativeNumber);
  synth->add_option("--context-seed", spec.context_seed);
  synth->add_option("--out", synth_out)->required();

  // ---- correct ----
  auto* correct = app.add_subcommand("correct", "Plan and score selective re-prompting");
  correct->require_subcommand(1);

  std::string plan_detector, plan_data, plan_steps, plan_message = "suspicious", plan_out;
  auto* plan = correct->add_subcommand("plan", "Flag steps and write continuation prompts");
  plan->add_option("--detector", plan_detector)->required();
  plan->add_option("--data", plan_data)->required();
  plan->add_option("--steps", plan_steps, "JSONL {record_id, step_text, gt_result}")->required();
  plan->add_option("--message", plan_message)
      ->check(CLI::IsMember({"suspicious", "neutral", "specific", "stronger", "detailed"}));
  plan->add_option("--out", plan_out)->required();

  std::string score_plan, score_reruns, score_steps;
  auto* score = correct->add_subcommand("score", "TP correction and FP preservation rates");
  score->add_option("--plan", score_plan)->required();
  score->add_option("--reruns", score_reruns)->required();
  score->add_option("--steps", score_steps)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      const ActivationDataset ds = load_dataset(validate_dir);
      print({{"valid", true},
             {"n_records", ds.size()},
             {"d_model", ds.d_model()},
             {"n_layers", ds.n_layers()}});
    } else if (sample->parsed()) {
      sampling.class_key = parse_digit_target(sample_key);
      sampling.require_error_mix = !no_error_mix;
      const ActivationDataset out = balanced_sample(load_dataset(sample_dir), sampling);
      save_dataset(out, sample_out);
      print({{"n_records", out.size()}, {"out", sample_out}});
    } else if (split->parsed()) {
      const DatasetSplit parts = split_dataset(load_dataset(split_dir), train_frac, split_seed,
                                               parse_digit_target(split_key));
      save_dataset(parts.train, fs::path(split_out) / "train");
      save_dataset(parts.test, fs::path(split_out) / "test");
      print({{"train", parts.train.size()}, {"test", parts.test.size()}});
    } else if (probe_train->parsed()) {
      const ProbeKind kind = parse_probe_kind(probe_kind);
      const DigitTarget target = parse_digit_target(probe_target);
      const ActivationDataset ds = load_dataset(probe_data);
      ProbeFile file;
      file.optimizer = probe_flags.optimizer(optimizer_for(kind));
      file.options = probe_flags.probe_options();
      file.layer = probe_layer;
      file.target = target;
      file.probe = train_probe(kind, ds, probe_layer, target, file.optimizer, file.options);
      save_probe(file, probe_out);
      print(probe_report_json(evaluate_probe(file.probe, ds, probe_layer, target)));
    } else if (probe_eval->parsed()) {
      const ProbeFile file = load_probe(probe_file);
      const int layer = probe_eval_layer.value_or(file.layer);
      print(probe_report_json(
          evaluate_probe(file.probe, load_dataset(probe_eval_data), layer, file.target)));
    } else if (det_train->parsed()) {
      const DetectorKind kind = parse_detector_kind(det_kind);
      const ActivationDataset ds = load_dataset(det_data);
      DetectorFile file;
      file.optimizer = det_flags.optimizer(kind == DetectorKind::circular_joint
                                               ? OptimizerKind::adamw
                                               : OptimizerKind::adam);
      file.options.probe = det_flags.probe_options();
      file.options.joint_form = parse_joint_form(joint_form);
      file.detector = train_detector(kind, ds, det_layer, file.optimizer, file.options);
      save_detector(file, det_out);
      print(detector_report_json(evaluate_detector(file.detector, ds, det_layer),
                                 parameter_checksum(file.detector)));
    } else if (det_eval->parsed()) {
      const DetectorFile file = load_detector(det_file);
      print(detector_report_json(
          evaluate_detector(file.detector, load_dataset(det_eval_data), file.detector.layer),
          parameter_checksum(file.detector)));
    } else if (det_cross->parsed()) {
      const DetectorFile file = load_detector(det_file);
      const std::uint64_t before = parameter_checksum(file.detector);
      const auto source = evaluate_detector(file.detector, load_dataset(cross_source),
                                            file.detector.layer);
      const auto target = evaluate_detector(file.detector, load_dataset(cross_target),
                                            file.detector.layer);
      const std::uint64_t after = parameter_checksum(file.detector);
      print({{"source", detector_report_json(source, before)},
             {"target", detector_report_json(target, after)},
             {"checksum_match", before == after}});
    } else if (pca->parsed()) {
      const PcaResult result =
          pca_fit(load_dataset(pca_data), pca_layer, pca_k, parse_digit_target(pca_label));
      export_projection(result, pca_out);
      ojson variance = ojson::array();
      for (Eigen::Index i = 0; i < result.explained_variance.size(); ++i) {
        variance.push_back(result.explained_variance[i]);
      }
      print({{"layer", result.layer}, {"explained_variance", variance}, {"out", pca_out}});
    } else if (synth->parsed()) {
      spec.geometry = parse_geometry(geometry);
      spec.plane_seed = plane_seed;
      const ActivationDataset ds = generate(spec);
      save_dataset(ds, synth_out);
      std::int64_t errors = 0;
      for (const auto& r : ds.records) errors += r.correct ? 0 : 1;
      print({{"n_records", ds.size()}, {"n_errors", errors}, {"out", synth_out}});
    } else if (plan->parsed()) {
      const DetectorFile file = load_detector(plan_detector);
      const CorrectionPlan result =
          plan_corrections(load_dataset(plan_data), read_steps_jsonl(plan_steps), file.detector,
                           file.detector.layer, parse_message_kind(plan_message));
      write_plan_jsonl(result, plan_out);
      print({{"flagged", result.flagged.size()}, {"message", plan_message}, {"out", plan_out}});
    } else if (score->parsed()) {
      CorrectionPlan loaded;
      loaded.flagged = read_plan_jsonl(score_plan);
      const CorrectionOutcome o =
          score_corrections(loaded, read_reruns_jsonl(score_reruns), read_steps_jsonl(score_steps));
      print({{"tp_flagged", o.tp_flagged},
             {"fp_flagged", o.fp_flagged},
             {"tp_corrected", o.tp_corrected},
             {"fp_preserved", o.fp_preserved},
             {"tp_correction_rate", o.tp_correction_rate},
             {"fp_preservation_rate", o.fp_preservation_rate},
             {"tp_correction", format_percent(o.tp_correction_rate)},
             {"fp_preservation", format_percent(o.fp_preservation_rate)}});
    }
  } catch (const probekit::Error& e) {
    std::cerr << "probekit: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "probekit: unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
