// Command-line surface for the face-swap detection pipeline: synthetic data
// generation, training for both detectors, threshold calibration, single-pair
// detection, and protocol evaluation.
//
// Exit codes: 0 success (or verdict "real"), 1 verdict "face-swapped",
// 2 usage/input error, 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "swapdetect/checkpoint.hpp"
#include "swapdetect/eval.hpp"
#include "swapdetect/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace swapdetect;

namespace {

constexpr int kExitSwap = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct FeFlags {
  std::string backbone = "tap4-cnn";
  std::vector<std::string> layers = {"b1", "b2", "b3", "b4"};
  std::string mode = "gram";
  std::uint64_t seed = 17;
  bool touched = false;
};

void add_fe_options(CLI::App* cmd, FeFlags& fe) {
  cmd->add_option("--fe-backbone", fe.backbone, "Feature backbone id")
      ->capture_default_str();
  cmd->add_option("--fe-layers", fe.layers, "Backbone layer taps to stack")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--fe-mode", fe.mode, "Style mode: gram or raw-embedding")
      ->check(CLI::IsMember({"gram", "raw-embedding"}))
      ->capture_default_str();
  cmd->add_option("--fe-seed", fe.seed, "Backbone seed")->capture_default_str();
}

FeatureExtractorConfig resolve_fe(const CLI::App* cmd, FeFlags& fe) {
  fe.touched = cmd->count("--fe-backbone") || cmd->count("--fe-layers") ||
               cmd->count("--fe-mode") || cmd->count("--fe-seed");
  FeatureExtractorConfig config;
  config.backbone_id = fe.backbone;
  config.layer_ids = fe.layers;
  config.style_mode = style_mode_from_string(fe.mode);
  config.seed = fe.seed;
  return config;
}

json run_fingerprint_payload(const FeatureExtractorConfig& fe, const json& method) {
  return {{"fe", to_json(fe)}, {"method", method}};
}

// When the user explicitly supplied feature flags they must agree with the
// checkpoint; otherwise the checkpoint's embedded config is adopted.
FeatureExtractorConfig fe_for_checkpoint(const CheckpointInfo& info,
                                         const FeFlags& fe_flags,
                                         const FeatureExtractorConfig& resolved) {
  if (fe_flags.touched &&
      feature_config_fingerprint(resolved) != info.fe_fingerprint)
    throw ConfigError(
        "given feature flags do not match the checkpoint's feature "
        "configuration (fingerprint " +
        info.fe_fingerprint + ")");
  return info.fe_config;
}

int cmd_generate_data(const std::string& out_dir, std::uint64_t seed,
                      int identities, int pairs, GeneratorOptions options,
                      const std::string& manifest_name) {
  const DatasetManifest manifest =
      generate_synthetic_dataset(seed, identities, pairs, out_dir, options);
  const std::string manifest_path = (fs::path(out_dir) / manifest_name).string();
  save_manifest(manifest, manifest_path);

  json summary;
  summary["manifest"] = manifest_path;
  summary["records"] = manifest.records.size();
  summary["real_real"] = manifest.count(Split::kTrain, 1) +
                         manifest.count(Split::kVal, 1) +
                         manifest.count(Split::kTest, 1) +
                         manifest.count(Split::kUnassigned, 1);
  summary["fake_real"] = manifest.count(Split::kTrain, 0) +
                         manifest.count(Split::kVal, 0) +
                         manifest.count(Split::kTest, 0) +
                         manifest.count(Split::kUnassigned, 0);
  summary["train"] = manifest.indices(Split::kTrain).size();
  summary["val"] = manifest.indices(Split::kVal).size();
  summary["test"] = manifest.indices(Split::kTest).size();
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& method,
              const std::string& out_path, const FeatureExtractorConfig& fe,
              ClassifierConfig cls, AnomalyConfig ano, bool force) {
  DatasetManifest manifest = load_manifest(manifest_path);
  validate_manifest(manifest);

  json method_cfg = method == "classifier" ? to_json(cls) : to_json(ano);
  const std::string run_fp =
      fingerprint_hex(run_fingerprint_payload(fe, method_cfg));

  if (fs::exists(out_path) && !force) {
    const CheckpointInfo existing = peek_checkpoint(out_path);
    if (existing.run_fingerprint != run_fp)
      throw ConfigError("checkpoint " + out_path +
                        " exists with a different run fingerprint; pass "
                        "--force to overwrite");
  }

  json summary;
  summary["checkpoint"] = out_path;
  summary["method"] = method;
  summary["run_fingerprint"] = run_fp;
  if (method == "classifier") {
    const ClassifierModel model = train_classifier(manifest, fe, cls);
    save_classifier_checkpoint(out_path, model, fe, run_fp);
    summary["epochs"] = model.training_history().size();
    summary["best_val_accuracy"] = [&] {
      double best = 0.0;
      for (const auto& s : model.training_history())
        best = std::max(best, s.val_accuracy);
      return best;
    }();
    summary["final_train_loss"] = model.training_history().back().train_loss;
  } else {
    const DualEncoderModel model = train_anomaly(manifest, fe, ano);
    save_anomaly_checkpoint(out_path, model, fe, run_fp);
    summary["epochs"] = model.training_history().size();
    summary["final_train_loss"] = model.training_history().back();
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_calibrate(const std::string& checkpoint_path,
                  const std::string& manifest_path, double k,
                  const FeFlags& fe_flags, const FeatureExtractorConfig& resolved) {
  const CheckpointInfo info = peek_checkpoint(checkpoint_path);
  if (info.kind != "anomaly")
    throw ConfigError("calibrate needs an anomaly checkpoint, got '" +
                      info.kind + "'");
  const FeatureExtractorConfig fe = fe_for_checkpoint(info, fe_flags, resolved);

  DatasetManifest manifest = load_manifest(manifest_path);
  validate_manifest(manifest);
  DualEncoderModel model = load_anomaly_checkpoint(checkpoint_path);
  const ThresholdCalibration cal = calibrate_threshold(model, manifest, fe, k);
  save_anomaly_checkpoint(checkpoint_path, model, fe, info.run_fingerprint);

  std::cout << to_json(cal).dump() << '\n';
  return 0;
}

int cmd_detect(const std::string& checkpoint_path, const std::string& reference,
               const std::string& suspicious, double cutoff,
               const std::string& method_flag, const FeFlags& fe_flags,
               const FeatureExtractorConfig& resolved) {
  const CheckpointInfo info = peek_checkpoint(checkpoint_path);
  if (!method_flag.empty() && method_flag != info.kind)
    throw ConfigError("checkpoint is a " + info.kind +
                      " model but --method asked for " + method_flag);
  const FeatureExtractorConfig fe = fe_for_checkpoint(info, fe_flags, resolved);

  const ImageArray ref = preprocess_image_file(reference);
  const ImageArray sus = preprocess_image_file(suspicious);

  Verdict verdict;
  if (info.kind == "classifier") {
    const ClassifierModel model = load_classifier_checkpoint(checkpoint_path);
    verdict = classify(model, ref, sus, fe, cutoff);
  } else {
    const DualEncoderModel model = load_anomaly_checkpoint(checkpoint_path);
    verdict = detect_anomaly(model, ref, sus, fe);
  }

  json line;
  line["label"] = verdict.label();
  line["score"] = verdict.score;
  line["method"] = to_string(verdict.method);
  line["threshold_used"] =
      verdict.threshold_used ? json(*verdict.threshold_used) : json();
  std::cout << line.dump() << '\n';
  return verdict.face_swapped ? kExitSwap : 0;
}

int cmd_evaluate(const std::string& manifest_path,
                 const std::string& classifier_path,
                 const std::string& anomaly_path, const std::string& protocol,
                 const std::string& report_path, double cutoff,
                 const FeFlags& fe_flags, const FeatureExtractorConfig& resolved) {
  if (classifier_path.empty() && anomaly_path.empty())
    throw ConfigError("evaluate needs at least one checkpoint");

  DatasetManifest manifest = load_manifest(manifest_path);
  validate_manifest(manifest);

  ClassifierModel classifier;
  DualEncoderModel anomaly_model;
  ProtocolModels models;
  json fingerprints;
  std::optional<FeatureExtractorConfig> fe;

  auto adopt_fe = [&](const CheckpointInfo& info) {
    const FeatureExtractorConfig cfg = fe_for_checkpoint(info, fe_flags, resolved);
    if (fe && feature_config_fingerprint(*fe) != info.fe_fingerprint)
      throw ConfigError("checkpoints were trained under different feature "
                        "configurations");
    fe = cfg;
  };

  if (!classifier_path.empty()) {
    const CheckpointInfo info = peek_checkpoint(classifier_path);
    adopt_fe(info);
    classifier = load_classifier_checkpoint(classifier_path);
    models.classifier = &classifier;
    fingerprints["classifier_run"] = info.run_fingerprint;
  }
  if (!anomaly_path.empty()) {
    const CheckpointInfo info = peek_checkpoint(anomaly_path);
    adopt_fe(info);
    anomaly_model = load_anomaly_checkpoint(anomaly_path);
    models.anomaly = &anomaly_model;
    fingerprints["anomaly_run"] = info.run_fingerprint;
  }
  fingerprints["fe"] = feature_config_fingerprint(*fe);
  fingerprints["manifest"] = manifest_path;

  ProtocolOptions options;
  options.decision_cutoff = cutoff;
  options.dataset_id = fs::path(manifest_path).stem().string();

  const StyleFeatureExtractor extractor(*fe);
  const auto test_features =
      extract_dataset_features(manifest, Split::kTest, extractor);

  std::vector<MetricsReport> reports;
  std::vector<Protocol> protocols;
  if (protocol == "both") {
    protocols = {Protocol::kInDataset, Protocol::kCrossDataset};
  } else {
    protocols = {protocol_from_string(protocol)};
  }
  for (Protocol p : protocols) {
    auto batch = run_protocol_on_features(models, test_features, p, options);
    reports.insert(reports.end(), batch.begin(), batch.end());
  }

  save_reports(reports, fingerprints, report_path);

  std::cout << "method      protocol       accuracy  precision  recall    f1        auc       n\n";
  for (const MetricsReport& r : reports) {
    auto cell = [](const std::optional<double>& v) {
      char buf[16];
      if (v) std::snprintf(buf, sizeof(buf), "%.4f", *v);
      else std::snprintf(buf, sizeof(buf), "-");
      return std::string(buf);
    };
    std::printf("%-11s %-14s %.4f    %-9s  %-8s  %-8s  %-8s  %ld\n",
                r.method.c_str(), r.protocol.c_str(), r.accuracy,
                cell(r.precision).c_str(), cell(r.recall).c_str(),
                cell(r.f1).c_str(), cell(r.auc).c_str(), r.n_pairs);
  }
  std::cout << "report written to " << report_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-feature face-swap detection pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key-value config file");

  // generate-data ------------------------------------------------------
  auto* gen = app.add_subcommand("generate-data",
                                 "Render a synthetic labelled pair dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 7;
  int gen_identities = 20;
  int gen_pairs = 500;
  GeneratorOptions gen_options;
  std::string manifest_name = "manifest.jsonl";
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generation seed")->capture_default_str();
  gen->add_option("--identities", gen_identities, "Number of synthetic identities")
      ->capture_default_str();
  gen->add_option("--pairs", gen_pairs, "Train/val pairs per class")
      ->capture_default_str();
  gen->add_option("--artifact-level", gen_options.artifact_level,
                  "Blending-artifact strength of the primary swap technique")
      ->capture_default_str();
  gen->add_option("--heldout-artifact-level", gen_options.heldout_artifact_level,
                  "Artifact strength of the held-out technique")
      ->capture_default_str();
  gen->add_option("--technique", gen_options.technique, "Primary technique tag")
      ->capture_default_str();
  gen->add_option("--heldout-technique", gen_options.heldout_technique,
                  "Held-out technique tag")
      ->capture_default_str();
  gen->add_option("--test-pairs", gen_options.n_test_pairs_per_class,
                  "Test pairs per class and per segment (0 = no test split)")
      ->capture_default_str();
  gen->add_option("--train-fraction", gen_options.train_fraction,
                  "Train share of the pool")
      ->capture_default_str();
  gen->add_option("--manifest-name", manifest_name, "Manifest file name")
      ->capture_default_str();

  // train ----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a detector");
  std::string train_manifest, train_method, train_out, profile = "desk";
  FeFlags train_fe;
  ClassifierConfig cls;
  AnomalyConfig ano;
  bool force = false;
  int train_epochs = -1;
  train->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train->add_option("--method", train_method, "classifier or anomaly")
      ->required()
      ->check(CLI::IsMember({"classifier", "anomaly"}));
  train->add_option("--out", train_out, "Checkpoint output path")->required();
  add_fe_options(train, train_fe);
  train->add_option("--profile", profile,
                    "desk (small epochs) or paper (published configuration)")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  train->add_option("--epochs", train_epochs, "Override epoch count");
  train->add_option("--alpha", cls.alpha, "Identity-loss weight")
      ->capture_default_str();
  train->add_option("--lr", cls.learning_rate, "Learning rate")
      ->capture_default_str();
  train->add_option("--batch-size", cls.batch_size,
                    "Classifier batch size (anomaly uses --anomaly-batch-size)")
      ->capture_default_str();
  train->add_option("--anomaly-batch-size", ano.batch_size, "Anomaly batch size")
      ->capture_default_str();
  train->add_option("--latent-dim", ano.latent_dim, "Anomaly latent width")
      ->capture_default_str();
  train->add_option("--projection-dim", cls.projection_dim,
                    "Classifier per-layer projection width")
      ->capture_default_str();
  std::uint64_t train_seed = 1;
  train->add_option("--seed", train_seed, "Training seed")->capture_default_str();
  train->add_flag("--force", force, "Overwrite an existing checkpoint");

  // calibrate --------------------------------------------------------------
  auto* calibrate = app.add_subcommand(
      "calibrate", "Fit the anomaly threshold on validation real-real pairs");
  std::string cal_checkpoint, cal_manifest;
  double cal_k = 2.0;
  FeFlags cal_fe;
  calibrate->add_option("--checkpoint", cal_checkpoint, "Anomaly checkpoint")
      ->required();
  calibrate->add_option("--manifest", cal_manifest, "Dataset manifest")->required();
  calibrate->add_option("--k", cal_k, "Standard-deviation multiplier")
      ->capture_default_str();
  add_fe_options(calibrate, cal_fe);

  // detect -------------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "Judge one reference/suspicious pair");
  std::string det_checkpoint, det_reference, det_suspicious, det_method;
  double det_cutoff = 0.5;
  FeFlags det_fe;
  detect->add_option("--checkpoint", det_checkpoint, "Trained checkpoint")
      ->required();
  detect->add_option("--reference", det_reference, "Known-real image")->required();
  detect->add_option("--suspicious", det_suspicious, "Image under suspicion")
      ->required();
  detect->add_option("--method", det_method, "Assert the checkpoint kind")
      ->check(CLI::IsMember({"classifier", "anomaly"}));
  detect->add_option("--cutoff", det_cutoff, "Classifier decision cutoff")
      ->capture_default_str();
  add_fe_options(detect, det_fe);

  // evaluate ------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "Run protocol evaluation");
  std::string ev_manifest, ev_classifier, ev_anomaly, ev_protocol = "both";
  std::string ev_report = "report.json";
  double ev_cutoff = 0.5;
  FeFlags ev_fe;
  evaluate->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  evaluate->add_option("--classifier-checkpoint", ev_classifier,
                       "Classifier checkpoint");
  evaluate->add_option("--anomaly-checkpoint", ev_anomaly, "Anomaly checkpoint");
  evaluate->add_option("--protocol", ev_protocol,
                       "in-dataset, cross-dataset, or both")
      ->check(CLI::IsMember({"in-dataset", "cross-dataset", "both"}))
      ->capture_default_str();
  evaluate->add_option("--report", ev_report, "Report output path")
      ->capture_default_str();
  evaluate->add_option("--cutoff", ev_cutoff, "Classifier decision cutoff")
      ->capture_default_str();
  add_fe_options(evaluate, ev_fe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed())
      return cmd_generate_data(gen_out, gen_seed, gen_identities, gen_pairs,
                               gen_options, manifest_name);
    if (train->parsed()) {
      const FeatureExtractorConfig fe = resolve_fe(train, train_fe);
      cls.seed = train_seed;
      ano.seed = train_seed;
      ano.learning_rate = cls.learning_rate;
      // Profile defaults; an explicit --epochs wins.
      cls.epochs = profile == "paper" ? 200 : 50;
      ano.epochs = profile == "paper" ? 200 : 20;
      if (train_epochs > 0) cls.epochs = ano.epochs = train_epochs;
      return cmd_train(train_manifest, train_method, train_out, fe, cls, ano,
                       force);
    }
    if (calibrate->parsed())
      return cmd_calibrate(cal_checkpoint, cal_manifest, cal_k, cal_fe,
                           resolve_fe(calibrate, cal_fe));
    if (detect->parsed())
      return cmd_detect(det_checkpoint, det_reference, det_suspicious,
                        det_cutoff, det_method, det_fe,
                        resolve_fe(detect, det_fe));
    if (evaluate->parsed())
      return cmd_evaluate(ev_manifest, ev_classifier, ev_anomaly, ev_protocol,
                          ev_report, ev_cutoff, ev_fe,
                          resolve_fe(evaluate, ev_fe));
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
