#pragma once

#include <optional>
#include <string>

#include "swapdetect/anomaly.hpp"
#include "swapdetect/classifier.hpp"

namespace swapdetect {

// Self-describing binary container: magic, JSON header (configs, history,
// fingerprints, array directory), then raw little-endian doubles per array.
// Identical runs produce byte-identical files.

struct CheckpointInfo {
  std::string kind;  // "classifier" or "anomaly"
  FeatureExtractorConfig fe_config;
  std::string fe_fingerprint;
  std::string run_fingerprint;
};

CheckpointInfo peek_checkpoint(const std::string& path);

void save_classifier_checkpoint(const std::string& path,
                                const ClassifierModel& model,
                                const FeatureExtractorConfig& fe_config,
                                const std::string& run_fingerprint);

// expected_fe_fingerprint, when set, must match the stored one.
ClassifierModel load_classifier_checkpoint(
    const std::string& path, FeatureExtractorConfig* fe_config_out = nullptr,
    const std::optional<std::string>& expected_fe_fingerprint = std::nullopt);

void save_anomaly_checkpoint(const std::string& path,
                             const DualEncoderModel& model,
                             const FeatureExtractorConfig& fe_config,
                             const std::string& run_fingerprint);

DualEncoderModel load_anomaly_checkpoint(
    const std::string& path, FeatureExtractorConfig* fe_config_out = nullptr,
    const std::optional<std::string>& expected_fe_fingerprint = std::nullopt);

}  // namespace swapdetect
