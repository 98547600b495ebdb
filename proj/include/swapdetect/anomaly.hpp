#pragma once

#include <string>
#include <vector>

#include "swapdetect/classifier.hpp"
#include "swapdetect/data.hpp"
#include "swapdetect/features.hpp"
#include "swapdetect/losses.hpp"
#include "swapdetect/nn.hpp"
#include "swapdetect/verdict.hpp"

namespace swapdetect {

struct AnomalyConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 200;
  Index latent_dim = 64;
  std::uint64_t seed = 2;
  Index feature_dim = 0;  // stacked feature length, derived from fe config
};

void validate(const AnomalyConfig& config);

// Element-wise (Hadamard) fusion of two latent vectors.
template <class DerivedA, class DerivedB>
Vec<typename DerivedA::Scalar> fuse_latents(
    const Eigen::MatrixBase<DerivedA>& z1, const Eigen::MatrixBase<DerivedB>& z2) {
  if (z1.size() != z2.size())
    throw ValidationError("fuse_latents: latent length mismatch");
  return (z1.array() * z2.array()).matrix();
}

struct ThresholdCalibration {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  double threshold = 0.0;
  double k = 2.0;
  long n_pairs = 0;
};

// Builds the calibration from raw validation reconstruction losses:
// threshold = mean + k * population standard deviation.
ThresholdCalibration calibrate_from_losses(const std::vector<double>& losses,
                                           double k = 2.0);

// One-class reconstruction scorer: two 3-layer conv encoders over the
// square-gridded style features, Hadamard latent fusion, and a mirrored
// decoder reconstructing a single feature vector judged against both inputs.
class DualEncoderModel {
 public:
  DualEncoderModel() = default;

  static DualEncoderModel init(const AnomalyConfig& config);

  const AnomalyConfig& config() const { return config_; }
  Index feature_dim() const { return config_.feature_dim; }
  Index latent_dim() const { return config_.latent_dim; }

  // Latent codes of a raw feature-stack pair; z1 depends only on x1 and z2
  // only on x2.
  std::pair<Vecd, Vecd> encode_pair(const Vecd& x1, const Vecd& x2) const;

  // Reconstruction in the model's standardized feature space.
  Vecd reconstruct(const Vecd& z_att) const;

  double anomaly_score(const StyleFeatureStack& ref_stack,
                       const StyleFeatureStack& sus_stack) const;
  double anomaly_score_raw(const Vecd& x1, const Vecd& x2) const;

  bool calibrated() const { return calibrated_; }
  const ThresholdCalibration& calibration() const;
  void set_calibration(const ThresholdCalibration& calibration);

  const std::vector<double>& training_history() const { return history_; }
  const std::string& fe_fingerprint() const { return fe_fingerprint_; }
  const std::vector<std::string>& training_techniques() const {
    return training_techniques_;
  }

  // Standardization fitted on the training real-real stacks.
  const Vecd& feature_mean() const { return feature_mean_; }
  const Vecd& feature_scale() const { return feature_scale_; }
  Vecd standardize(const Vecd& x) const;

  std::vector<std::pair<std::string, const Matd*>> named_params() const;
  std::vector<std::pair<std::string, Matd*>> named_params();
  void set_history(std::vector<double> history) { history_ = std::move(history); }
  void set_fe_fingerprint(std::string fp) { fe_fingerprint_ = std::move(fp); }
  void set_training_techniques(std::vector<std::string> t) {
    training_techniques_ = std::move(t);
  }
  void set_feature_stats(Vecd mean, Vecd scale);

 private:
  friend struct AnomalyTrainer;

  AnomalyConfig config_;

  struct Encoder {
    nn::Conv2d conv1, conv2;
    nn::Dense to_latent;
  };
  Encoder enc1_, enc2_;
  nn::Dense from_latent_;
  nn::Conv2d dec_conv1_, dec_conv2_;

  Index side_ = 0, side1_ = 0, side2_ = 0;
  Vecd feature_mean_, feature_scale_;
  std::vector<double> history_;
  ThresholdCalibration calibration_;
  bool calibrated_ = false;
  std::string fe_fingerprint_;
  std::vector<std::string> training_techniques_;
};

DualEncoderModel train_anomaly(const DatasetManifest& manifest,
                               const FeatureExtractorConfig& fe_config,
                               const AnomalyConfig& config);

// Computes reconstruction losses over the validation real-real pairs and
// stores the resulting mean + k*sigma threshold.
ThresholdCalibration calibrate_threshold(DualEncoderModel& model,
                                         const DatasetManifest& validation_manifest,
                                         const FeatureExtractorConfig& fe_config,
                                         double k = 2.0);

Verdict detect_anomaly(const DualEncoderModel& model, const ImageArray& reference,
                       const ImageArray& suspicious,
                       const FeatureExtractorConfig& fe_config);

}  // namespace swapdetect
