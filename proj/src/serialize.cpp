#include "swapdetect/serialize.hpp"

#include <cstdio>

using nlohmann::json;

namespace swapdetect {

json to_json(const FeatureExtractorConfig& config) {
  return {{"backbone_id", config.backbone_id},
          {"layer_ids", config.layer_ids},
          {"style_mode", to_string(config.style_mode)},
          {"seed", config.seed}};
}

FeatureExtractorConfig feature_config_from_json(const json& j) {
  FeatureExtractorConfig config;
  config.backbone_id = j.at("backbone_id").get<std::string>();
  config.layer_ids = j.at("layer_ids").get<std::vector<std::string>>();
  config.style_mode = style_mode_from_string(j.at("style_mode").get<std::string>());
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

json to_json(const ClassifierConfig& config) {
  return {{"alpha", config.alpha},
          {"learning_rate", config.learning_rate},
          {"batch_size", config.batch_size},
          {"epochs", config.epochs},
          {"seed", config.seed},
          {"layer_dims", config.layer_dims},
          {"projection_dim", config.projection_dim}};
}

ClassifierConfig classifier_config_from_json(const json& j) {
  ClassifierConfig config;
  config.alpha = j.at("alpha").get<double>();
  config.learning_rate = j.at("learning_rate").get<double>();
  config.batch_size = j.at("batch_size").get<int>();
  config.epochs = j.at("epochs").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.layer_dims = j.at("layer_dims").get<std::vector<Index>>();
  config.projection_dim = j.at("projection_dim").get<Index>();
  return config;
}

json to_json(const AnomalyConfig& config) {
  return {{"learning_rate", config.learning_rate},
          {"batch_size", config.batch_size},
          {"epochs", config.epochs},
          {"latent_dim", config.latent_dim},
          {"seed", config.seed},
          {"feature_dim", config.feature_dim}};
}

AnomalyConfig anomaly_config_from_json(const json& j) {
  AnomalyConfig config;
  config.learning_rate = j.at("learning_rate").get<double>();
  config.batch_size = j.at("batch_size").get<int>();
  config.epochs = j.at("epochs").get<int>();
  config.latent_dim = j.at("latent_dim").get<Index>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.feature_dim = j.at("feature_dim").get<Index>();
  return config;
}

json to_json(const EpochStats& stats) {
  return {{"epoch", stats.epoch},
          {"train_loss", stats.train_loss},
          {"train_bce", stats.train_bce},
          {"train_sil", stats.train_sil},
          {"val_loss", stats.val_loss},
          {"val_accuracy", stats.val_accuracy}};
}

EpochStats epoch_stats_from_json(const json& j) {
  EpochStats stats;
  stats.epoch = j.at("epoch").get<int>();
  stats.train_loss = j.at("train_loss").get<double>();
  stats.train_bce = j.at("train_bce").get<double>();
  stats.train_sil = j.at("train_sil").get<double>();
  stats.val_loss = j.at("val_loss").get<double>();
  stats.val_accuracy = j.at("val_accuracy").get<double>();
  return stats;
}

json to_json(const ThresholdCalibration& calibration) {
  return {{"mean", calibration.mean},
          {"stddev", calibration.stddev},
          {"threshold", calibration.threshold},
          {"k", calibration.k},
          {"n_pairs", calibration.n_pairs}};
}

ThresholdCalibration calibration_from_json(const json& j) {
  ThresholdCalibration cal;
  cal.mean = j.at("mean").get<double>();
  cal.stddev = j.at("stddev").get<double>();
  cal.threshold = j.at("threshold").get<double>();
  cal.k = j.at("k").get<double>();
  cal.n_pairs = j.at("n_pairs").get<long>();
  return cal;
}

std::string fingerprint_hex(const json& j) {
  const std::uint64_t h = fnv1a(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string feature_config_fingerprint(const FeatureExtractorConfig& config) {
  return fingerprint_hex(to_json(config));
}

}  // namespace swapdetect
