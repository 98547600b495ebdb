#pragma once

#include <string>
#include <vector>

#include "swapdetect/data.hpp"
#include "swapdetect/features.hpp"
#include "swapdetect/losses.hpp"
#include "swapdetect/nn.hpp"
#include "swapdetect/verdict.hpp"

namespace swapdetect {

struct ClassifierConfig {
  double alpha = 0.5;
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 1;
  // Derived from the feature extractor: flat length per layer, in order.
  std::vector<Index> layer_dims;
  Index projection_dim = 64;
};

void validate(const ClassifierConfig& config);
std::vector<Index> classifier_layer_dims(const FeatureExtractorConfig& fe_config);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_bce = 0.0;
  double train_sil = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

// Pair classifier over stacked style features: a learnable per-layer
// projection (also the representation the identity loss shapes), the
// projected pair laid out as a reference/suspicious channel pair on a
// square grid, four strided conv blocks (32-64-128-128) and a sigmoid head.
class ClassifierModel {
 public:
  ClassifierModel() = default;

  static ClassifierModel init(const ClassifierConfig& config);

  const ClassifierConfig& config() const { return config_; }
  Index input_dim() const;  // stacked feature length per image
  Index parameter_count() const;

  // Probability that the pair is real-real, reference first.
  double predict_pair(const StyleFeatureStack& ref_stack,
                      const StyleFeatureStack& sus_stack) const;

  const std::vector<EpochStats>& training_history() const { return history_; }
  const std::string& fe_fingerprint() const { return fe_fingerprint_; }
  const std::vector<std::string>& training_techniques() const {
    return training_techniques_;
  }

  // Serialization hooks used by the checkpoint container.
  std::vector<std::pair<std::string, const Matd*>> named_params() const;
  std::vector<std::pair<std::string, Matd*>> named_params();
  void set_history(std::vector<EpochStats> history) { history_ = std::move(history); }
  void set_fe_fingerprint(std::string fp) { fe_fingerprint_ = std::move(fp); }
  void set_training_techniques(std::vector<std::string> t) {
    training_techniques_ = std::move(t);
  }

 private:
  friend ClassifierModel train_classifier(const DatasetManifest&,
                                          const FeatureExtractorConfig&,
                                          const ClassifierConfig&);
  friend struct ClassifierTrainer;

  ClassifierConfig config_;
  std::vector<nn::Dense> projections_;  // one per feature layer
  std::vector<nn::Conv2d> convs_;
  nn::Dense head_;
  Index side_ = 0;        // channel grid side
  Index head_input_ = 0;  // flattened conv output length
  std::vector<EpochStats> history_;
  std::string fe_fingerprint_;
  std::vector<std::string> training_techniques_;
};

ClassifierModel init_classifier(const ClassifierConfig& config);

ClassifierModel train_classifier(const DatasetManifest& manifest,
                                 const FeatureExtractorConfig& fe_config,
                                 const ClassifierConfig& cls_config);

Verdict classify(const ClassifierModel& model, const ImageArray& reference,
                 const ImageArray& suspicious,
                 const FeatureExtractorConfig& fe_config,
                 double decision_cutoff = 0.5);

// Extracted feature pair of one dataset record.
struct PairFeatures {
  StyleFeatureStack ref;
  StyleFeatureStack sus;
  int label = 1;
  std::string technique;
  std::string pair_id;
};

std::vector<PairFeatures> extract_dataset_features(
    const DatasetManifest& manifest, Split split,
    const StyleFeatureExtractor& extractor);

}  // namespace swapdetect
