#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "swapdetect/anomaly.hpp"
#include "swapdetect/classifier.hpp"
#include "swapdetect/verdict.hpp"

namespace swapdetect {

// Positive class is face-swapped throughout: a true positive is a
// face-swapped pair (truth label 0) flagged as face-swapped.
struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion_counts(const std::vector<Verdict>& verdicts,
                                 const std::vector<int>& truth_labels);

struct MetricsReport {
  double accuracy = 0.0;
  // Absent when the denominator degenerates (never coerced to 0).
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> auc;
  ConfusionCounts confusion;
  std::string protocol;  // "in-dataset" or "cross-dataset"
  std::string method;    // "classifier" or "anomaly"
  std::string dataset_id;
  long n_pairs = 0;
  std::optional<double> decision_cutoff;
  std::optional<double> threshold;
};

MetricsReport compute_metrics(const ConfusionCounts& counts);

// Area under the ROC curve by trapezoidal integration with tie grouping;
// equals the Mann-Whitney statistic P(score_pos > score_neg) + tie/2.
// Truth labels follow the pair convention (0 = face-swapped = positive);
// higher scores must indicate face-swapped.
double auc(const std::vector<double>& scores, const std::vector<int>& truth_labels);

enum class Protocol { kInDataset, kCrossDataset };
std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& name);

struct ProtocolModels {
  const ClassifierModel* classifier = nullptr;
  const DualEncoderModel* anomaly = nullptr;
};

struct ProtocolOptions {
  double decision_cutoff = 0.5;
  std::string dataset_id;
};

// Evaluates the available detectors over the manifest's test pairs whose
// technique was (in-dataset) or was not (cross-dataset) seen in training.
std::vector<MetricsReport> run_protocol(const ProtocolModels& models,
                                        const DatasetManifest& manifest,
                                        const FeatureExtractorConfig& fe_config,
                                        Protocol protocol,
                                        const ProtocolOptions& options = {});

// As above but over pre-extracted test features (avoids re-extraction when
// several protocols run over one manifest).
std::vector<MetricsReport> run_protocol_on_features(
    const ProtocolModels& models, const std::vector<PairFeatures>& test_features,
    Protocol protocol, const ProtocolOptions& options = {});

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const nlohmann::json& j);

void save_reports(const std::vector<MetricsReport>& reports,
                  const nlohmann::json& fingerprints, const std::string& path);
std::vector<MetricsReport> load_reports(const std::string& path);

}  // namespace swapdetect
