#include "swapdetect/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "swapdetect/serialize.hpp"

namespace swapdetect {

void validate(const AnomalyConfig& config) {
  if (config.learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (config.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (config.feature_dim < 1)
    throw ConfigError("anomaly feature_dim not derived from feature config");
}

ThresholdCalibration calibrate_from_losses(const std::vector<double>& losses,
                                           double k) {
  if (losses.size() < 2)
    throw ValidationError("threshold calibration needs at least 2 validation pairs");
  ThresholdCalibration cal;
  cal.k = k;
  cal.n_pairs = static_cast<long>(losses.size());
  double sum = 0.0;
  for (double v : losses) sum += v;
  cal.mean = sum / static_cast<double>(losses.size());
  double sq = 0.0;
  for (double v : losses) sq += (v - cal.mean) * (v - cal.mean);
  cal.stddev = std::sqrt(sq / static_cast<double>(losses.size()));
  cal.threshold = cal.mean + k * cal.stddev;
  return cal;
}

DualEncoderModel DualEncoderModel::init(const AnomalyConfig& config) {
  validate(config);
  DualEncoderModel model;
  model.config_ = config;
  model.side_ = static_cast<Index>(
      std::ceil(std::sqrt(static_cast<double>(config.feature_dim))));
  model.side_ = std::max<Index>(model.side_, 4);
  model.side1_ = nn::conv_out_dim(model.side_, 3, 2, 1);
  model.side2_ = nn::conv_out_dim(model.side1_, 3, 2, 1);

  Rng rng = derive_rng(config.seed, "anomaly-init");
  auto make_encoder = [&](Encoder& enc) {
    enc.conv1 = nn::Conv2d(1, 64, 3, 2, 1, nn::Nonlinearity::kTanh);
    enc.conv1.init_params(rng);
    enc.conv2 = nn::Conv2d(64, 128, 3, 2, 1, nn::Nonlinearity::kTanh);
    enc.conv2.init_params(rng);
    enc.to_latent = nn::Dense(128 * model.side2_ * model.side2_,
                              config.latent_dim, nn::Nonlinearity::kTanh);
    enc.to_latent.init_params(rng);
  };
  make_encoder(model.enc1_);
  make_encoder(model.enc2_);

  model.from_latent_ = nn::Dense(config.latent_dim,
                                 128 * model.side2_ * model.side2_,
                                 nn::Nonlinearity::kTanh);
  model.from_latent_.init_params(rng);
  model.dec_conv1_ = nn::Conv2d(128, 64, 3, 1, 1, nn::Nonlinearity::kTanh);
  model.dec_conv1_.init_params(rng);
  model.dec_conv2_ = nn::Conv2d(64, 1, 3, 1, 1, nn::Nonlinearity::kNone);
  model.dec_conv2_.init_params(rng);

  model.feature_mean_ = Vecd::Zero(config.feature_dim);
  model.feature_scale_ = Vecd::Ones(config.feature_dim);
  return model;
}

void DualEncoderModel::set_feature_stats(Vecd mean, Vecd scale) {
  if (mean.size() != config_.feature_dim || scale.size() != config_.feature_dim)
    throw ValidationError("feature stats length mismatch");
  feature_mean_ = std::move(mean);
  feature_scale_ = std::move(scale);
}

Vecd DualEncoderModel::standardize(const Vecd& x) const {
  return ((x - feature_mean_).array() / feature_scale_.array()).matrix();
}

const ThresholdCalibration& DualEncoderModel::calibration() const {
  if (!calibrated_)
    throw ConfigError("anomaly model has no threshold calibration");
  return calibration_;
}

void DualEncoderModel::set_calibration(const ThresholdCalibration& calibration) {
  calibration_ = calibration;
  calibrated_ = true;
}

namespace {

Activation to_grid(const Vecd& standardized, Index side) {
  Activation a;
  a.height = side;
  a.width = side;
  a.data = Matd::Zero(1, side * side);
  a.data.block(0, 0, 1, standardized.size()) = standardized.transpose();
  return a;
}

}  // namespace

std::pair<Vecd, Vecd> DualEncoderModel::encode_pair(const Vecd& x1,
                                                    const Vecd& x2) const {
  if (x1.size() != config_.feature_dim || x2.size() != config_.feature_dim)
    throw ValidationError("encode_pair: feature length mismatch");
  auto encode = [&](const Encoder& enc, const Vecd& x) {
    std::vector<Activation> a{to_grid(standardize(x), side_)};
    a = enc.conv1.infer(a);
    a = enc.conv2.infer(a);
    const Matd flat = Eigen::Map<const Matd>(
        a[0].data.data(), a[0].data.size(), 1);
    return Vecd(enc.to_latent.infer(flat).col(0));
  };
  return {encode(enc1_, x1), encode(enc2_, x2)};
}

Vecd DualEncoderModel::reconstruct(const Vecd& z_att) const {
  if (z_att.size() != config_.latent_dim)
    throw ValidationError("reconstruct: latent length mismatch");
  const Matd hidden = from_latent_.infer(z_att);
  Activation a;
  a.height = side2_;
  a.width = side2_;
  a.data = Eigen::Map<const Matd>(hidden.data(), 128, side2_ * side2_);
  std::vector<Activation> cur{a};
  cur = dec_conv1_.infer(cur);
  cur[0] = nn::upsample2x(cur[0]);
  cur[0] = nn::upsample2x(cur[0]);
  // 4*side2 >= side always holds for the strided geometry; crop the excess.
  Activation cropped;
  cropped.height = side_;
  cropped.width = side_;
  cropped.data.resize(64, side_ * side_);
  for (Index y = 0; y < side_; ++y)
    cropped.data.block(0, y * side_, 64, side_) =
        cur[0].data.block(0, y * cur[0].width, 64, side_);
  cur[0] = cropped;
  cur = dec_conv2_.infer(cur);
  return cur[0].data.row(0).segment(0, config_.feature_dim).transpose();
}

double DualEncoderModel::anomaly_score_raw(const Vecd& x1, const Vecd& x2) const {
  const auto [z1, z2] = encode_pair(x1, x2);
  const Vecd xhat = reconstruct(fuse_latents(z1, z2));
  return reconstruction_loss_value(standardize(x1), standardize(x2), xhat);
}

double DualEncoderModel::anomaly_score(const StyleFeatureStack& ref_stack,
                                       const StyleFeatureStack& sus_stack) const {
  return anomaly_score_raw(ref_stack.stacked, sus_stack.stacked);
}

std::vector<std::pair<std::string, const Matd*>> DualEncoderModel::named_params()
    const {
  std::vector<std::pair<std::string, const Matd*>> out;
  auto add_encoder = [&out](const char* prefix, const Encoder& enc) {
    const std::string p(prefix);
    out.emplace_back(p + ".conv1.w", &enc.conv1.weight().value);
    out.emplace_back(p + ".conv1.b", &enc.conv1.bias().value);
    out.emplace_back(p + ".conv2.w", &enc.conv2.weight().value);
    out.emplace_back(p + ".conv2.b", &enc.conv2.bias().value);
    out.emplace_back(p + ".fc.w", &enc.to_latent.weight().value);
    out.emplace_back(p + ".fc.b", &enc.to_latent.bias().value);
  };
  add_encoder("e1", enc1_);
  add_encoder("e2", enc2_);
  out.emplace_back("dec.fc.w", &from_latent_.weight().value);
  out.emplace_back("dec.fc.b", &from_latent_.bias().value);
  out.emplace_back("dec.conv1.w", &dec_conv1_.weight().value);
  out.emplace_back("dec.conv1.b", &dec_conv1_.bias().value);
  out.emplace_back("dec.conv2.w", &dec_conv2_.weight().value);
  out.emplace_back("dec.conv2.b", &dec_conv2_.bias().value);
  return out;
}

std::vector<std::pair<std::string, Matd*>> DualEncoderModel::named_params() {
  std::vector<std::pair<std::string, Matd*>> out;
  for (auto& [name, mat] :
       static_cast<const DualEncoderModel*>(this)->named_params())
    out.emplace_back(name, const_cast<Matd*>(mat));
  return out;
}

// Batched forward/backward over pairs; training-side counterpart of the
// const inference methods.
struct AnomalyTrainer {
  DualEncoderModel& model;

  struct Forward {
    Matd z1, z2, z_att;            // latent x B
    std::vector<Activation> xhat;  // per pair: 1 x side^2 (pre-crop handled)
    Matd xhat_flat;                // feature_dim x B
    Index up_h = 0, up_w = 0;      // decoder spatial size before crop
  };

  std::vector<Activation> encode_batch(DualEncoderModel::Encoder& enc,
                                       const Matd& inputs, Matd& z_out,
                                       bool cache) {
    const Index b = inputs.cols();
    std::vector<Activation> grids(static_cast<std::size_t>(b));
    for (Index p = 0; p < b; ++p)
      grids[static_cast<std::size_t>(p)] = to_grid(inputs.col(p), model.side_);
    auto h1 = cache ? enc.conv1.forward(grids) : enc.conv1.infer(grids);
    auto h2 = cache ? enc.conv2.forward(h1) : enc.conv2.infer(h1);
    Matd flat(h2[0].data.size(), b);
    for (Index p = 0; p < b; ++p)
      flat.col(p) = Eigen::Map<const Vecd>(
          h2[static_cast<std::size_t>(p)].data.data(),
          h2[static_cast<std::size_t>(p)].data.size());
    z_out = cache ? enc.to_latent.forward(flat) : enc.to_latent.infer(flat);
    return h2;
  }

  // inputs: standardized features, feature_dim x B, per side.
  Forward forward(const Matd& x1, const Matd& x2, bool cache) {
    Forward fwd;
    encode_batch(model.enc1_, x1, fwd.z1, cache);
    encode_batch(model.enc2_, x2, fwd.z2, cache);
    fwd.z_att = (fwd.z1.array() * fwd.z2.array()).matrix();

    const Index b = x1.cols();
    const Matd hidden = cache ? model.from_latent_.forward(fwd.z_att)
                              : model.from_latent_.infer(fwd.z_att);
    std::vector<Activation> acts(static_cast<std::size_t>(b));
    for (Index p = 0; p < b; ++p) {
      Activation a;
      a.height = model.side2_;
      a.width = model.side2_;
      a.data = Eigen::Map<const Matd>(hidden.col(p).data(), 128,
                                      model.side2_ * model.side2_);
      acts[static_cast<std::size_t>(p)] = std::move(a);
    }
    acts = cache ? model.dec_conv1_.forward(acts) : model.dec_conv1_.infer(acts);
    for (auto& a : acts) a = nn::upsample2x(nn::upsample2x(a));
    fwd.up_h = acts[0].height;
    fwd.up_w = acts[0].width;

    std::vector<Activation> cropped(acts.size());
    for (std::size_t p = 0; p < acts.size(); ++p) {
      Activation c;
      c.height = model.side_;
      c.width = model.side_;
      c.data.resize(64, model.side_ * model.side_);
      for (Index y = 0; y < model.side_; ++y)
        c.data.block(0, y * model.side_, 64, model.side_) =
            acts[p].data.block(0, y * acts[p].width, 64, model.side_);
      cropped[p] = std::move(c);
    }
    fwd.xhat = cache ? model.dec_conv2_.forward(cropped)
                     : model.dec_conv2_.infer(cropped);

    fwd.xhat_flat.resize(model.config_.feature_dim, b);
    for (Index p = 0; p < b; ++p)
      fwd.xhat_flat.col(p) = fwd.xhat[static_cast<std::size_t>(p)]
                                 .data.row(0)
                                 .segment(0, model.config_.feature_dim)
                                 .transpose();
    return fwd;
  }

  // dL/dxhat per pair (feature_dim x B).
  void backward(const Forward& fwd, const Matd& dxhat) {
    const Index b = dxhat.cols();
    std::vector<Activation> gx(static_cast<std::size_t>(b));
    for (Index p = 0; p < b; ++p) {
      Activation g;
      g.height = model.side_;
      g.width = model.side_;
      g.data = Matd::Zero(1, model.side_ * model.side_);
      g.data.block(0, 0, 1, model.config_.feature_dim) = dxhat.col(p).transpose();
      gx[static_cast<std::size_t>(p)] = std::move(g);
    }
    auto gcrop = model.dec_conv2_.backward(gx);

    // Undo the crop: gradients land in the top-left window.
    std::vector<Activation> gup(gcrop.size());
    for (std::size_t p = 0; p < gcrop.size(); ++p) {
      Activation g;
      g.height = fwd.up_h;
      g.width = fwd.up_w;
      g.data = Matd::Zero(64, fwd.up_h * fwd.up_w);
      for (Index y = 0; y < model.side_; ++y)
        g.data.block(0, y * fwd.up_w, 64, model.side_) =
            gcrop[p].data.block(0, y * model.side_, 64, model.side_);
      gup[p] = std::move(g);
    }
    for (auto& g : gup) {
      g = nn::upsample2x_backward(g, fwd.up_h / 2, fwd.up_w / 2);
      g = nn::upsample2x_backward(g, fwd.up_h / 4, fwd.up_w / 4);
    }
    auto ghidden_act = model.dec_conv1_.backward(gup);

    Matd ghidden(128 * model.side2_ * model.side2_, b);
    for (Index p = 0; p < b; ++p)
      ghidden.col(p) = Eigen::Map<const Vecd>(
          ghidden_act[static_cast<std::size_t>(p)].data.data(),
          ghidden_act[static_cast<std::size_t>(p)].data.size());
    const Matd dz_att = model.from_latent_.backward(ghidden);

    const Matd dz1 = (dz_att.array() * fwd.z2.array()).matrix();
    const Matd dz2 = (dz_att.array() * fwd.z1.array()).matrix();

    auto backward_encoder = [&](DualEncoderModel::Encoder& enc, const Matd& dz) {
      const Matd dflat = enc.to_latent.backward(dz);
      std::vector<Activation> g(static_cast<std::size_t>(b));
      for (Index p = 0; p < b; ++p) {
        Activation a;
        a.height = model.side2_;
        a.width = model.side2_;
        a.data = Eigen::Map<const Matd>(dflat.col(p).data(), 128,
                                        model.side2_ * model.side2_);
        g[static_cast<std::size_t>(p)] = std::move(a);
      }
      g = enc.conv2.backward(g);
      enc.conv1.backward(g);
    };
    backward_encoder(model.enc1_, dz1);
    backward_encoder(model.enc2_, dz2);
  }

  void zero_grad() {
    for (auto* enc : {&model.enc1_, &model.enc2_}) {
      enc->conv1.zero_grad();
      enc->conv2.zero_grad();
      enc->to_latent.zero_grad();
    }
    model.from_latent_.zero_grad();
    model.dec_conv1_.zero_grad();
    model.dec_conv2_.zero_grad();
  }

  void step(const nn::AdamConfig& cfg, long t) {
    for (auto* enc : {&model.enc1_, &model.enc2_}) {
      enc->conv1.step(cfg, t);
      enc->conv2.step(cfg, t);
      enc->to_latent.step(cfg, t);
    }
    model.from_latent_.step(cfg, t);
    model.dec_conv1_.step(cfg, t);
    model.dec_conv2_.step(cfg, t);
  }
};

DualEncoderModel train_anomaly(const DatasetManifest& manifest,
                               const FeatureExtractorConfig& fe_config,
                               const AnomalyConfig& cfg) {
  validate(fe_config);
  AnomalyConfig config = cfg;
  if (config.feature_dim == 0)
    config.feature_dim = stacked_feature_length(fe_config);
  validate(config);

  const StyleFeatureExtractor extractor(fe_config);
  const auto train_feats =
      extract_dataset_features(manifest, Split::kTrain, extractor);
  std::vector<const PairFeatures*> real_pairs;
  for (const auto& pf : train_feats)
    if (pf.label == 1) real_pairs.push_back(&pf);
  if (real_pairs.empty())
    throw ValidationError("anomaly training needs real-real pairs in the train split");

  DualEncoderModel model = DualEncoderModel::init(config);

  // Standardization over both members of the training real-real pairs.
  Vecd mean = Vecd::Zero(config.feature_dim);
  for (const auto* pf : real_pairs) mean += pf->ref.stacked + pf->sus.stacked;
  mean /= static_cast<double>(2 * real_pairs.size());
  Vecd var = Vecd::Zero(config.feature_dim);
  for (const auto* pf : real_pairs) {
    var.array() += (pf->ref.stacked - mean).array().square();
    var.array() += (pf->sus.stacked - mean).array().square();
  }
  var /= static_cast<double>(2 * real_pairs.size());
  Vecd scale = var.array().sqrt().max(1e-8).matrix();
  model.set_feature_stats(std::move(mean), std::move(scale));

  AnomalyTrainer trainer{model};
  const nn::AdamConfig adam{config.learning_rate};
  long adam_t = 0;

  std::vector<std::size_t> order(real_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = derive_rng(config.seed, "anomaly-batch-order",
                                 static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(
                    0, static_cast<std::int64_t>(i) - 1))]);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Index b = static_cast<Index>(stop - start);

      Matd x1(config.feature_dim, b), x2(config.feature_dim, b);
      for (Index p = 0; p < b; ++p) {
        const PairFeatures& pf = *real_pairs[order[start + static_cast<std::size_t>(p)]];
        x1.col(p) = model.standardize(pf.ref.stacked);
        x2.col(p) = model.standardize(pf.sus.stacked);
      }

      trainer.zero_grad();
      auto fwd = trainer.forward(x1, x2, true);

      // Mean over the batch of |x1-xhat|^2 + |x2-xhat|^2.
      double batch_loss = 0.0;
      Matd dxhat(config.feature_dim, b);
      const double inv_b = 1.0 / static_cast<double>(b);
      for (Index p = 0; p < b; ++p) {
        const Vecd d1 = x1.col(p) - fwd.xhat_flat.col(p);
        const Vecd d2 = x2.col(p) - fwd.xhat_flat.col(p);
        batch_loss += d1.squaredNorm() + d2.squaredNorm();
        dxhat.col(p) = inv_b * (-2.0 * d1 - 2.0 * d2);
      }
      batch_loss *= inv_b;
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite reconstruction loss at epoch " << epoch << ", batch "
            << batch_index;
        throw NumericError(msg.str());
      }

      trainer.backward(fwd, dxhat);
      trainer.step(adam, ++adam_t);

      epoch_loss += batch_loss * static_cast<double>(b);
      seen += static_cast<std::size_t>(b);
    }
    model.set_history([&] {
      auto h = model.training_history();
      h.push_back(epoch_loss / static_cast<double>(seen));
      return h;
    }());
  }

  model.set_fe_fingerprint(feature_config_fingerprint(fe_config));
  auto techniques = manifest.techniques(Split::kTrain);
  std::sort(techniques.begin(), techniques.end());
  model.set_training_techniques(std::move(techniques));
  return model;
}

ThresholdCalibration calibrate_threshold(DualEncoderModel& model,
                                         const DatasetManifest& validation_manifest,
                                         const FeatureExtractorConfig& fe_config,
                                         double k) {
  if (!model.fe_fingerprint().empty() &&
      model.fe_fingerprint() != feature_config_fingerprint(fe_config))
    throw ConfigError("feature configuration does not match the trained model");
  const StyleFeatureExtractor extractor(fe_config);
  const auto val_feats =
      extract_dataset_features(validation_manifest, Split::kVal, extractor);
  std::vector<double> losses;
  for (const auto& pf : val_feats)
    if (pf.label == 1) losses.push_back(model.anomaly_score(pf.ref, pf.sus));
  const ThresholdCalibration cal = calibrate_from_losses(losses, k);
  model.set_calibration(cal);
  return cal;
}

Verdict detect_anomaly(const DualEncoderModel& model, const ImageArray& reference,
                       const ImageArray& suspicious,
                       const FeatureExtractorConfig& fe_config) {
  const ThresholdCalibration& cal = model.calibration();
  if (!model.fe_fingerprint().empty() &&
      model.fe_fingerprint() != feature_config_fingerprint(fe_config))
    throw ConfigError("feature configuration does not match the trained model");
  const auto [ref_stack, sus_stack] =
      extract_pair_features(reference, suspicious, fe_config);
  const double score = model.anomaly_score(ref_stack, sus_stack);
  Verdict verdict;
  verdict.face_swapped = anomaly_flags_swap(score, cal.threshold);
  verdict.score = score;
  verdict.method = Method::kAnomaly;
  verdict.threshold_used = cal.threshold;
  return verdict;
}

}  // namespace swapdetect
