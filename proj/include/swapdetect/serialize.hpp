#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "swapdetect/anomaly.hpp"
#include "swapdetect/classifier.hpp"
#include "swapdetect/features.hpp"

namespace swapdetect {

nlohmann::json to_json(const FeatureExtractorConfig& config);
FeatureExtractorConfig feature_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ClassifierConfig& config);
ClassifierConfig classifier_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AnomalyConfig& config);
AnomalyConfig anomaly_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EpochStats& stats);
EpochStats epoch_stats_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ThresholdCalibration& calibration);
ThresholdCalibration calibration_from_json(const nlohmann::json& j);

// 16-hex-digit FNV-1a digest of the canonical (sorted-key) JSON dump.
std::string fingerprint_hex(const nlohmann::json& j);
std::string feature_config_fingerprint(const FeatureExtractorConfig& config);

}  // namespace swapdetect
