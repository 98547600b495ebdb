#include "swapdetect/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "swapdetect/serialize.hpp"

namespace swapdetect {

namespace {

constexpr double kLogitClamp = 30.0;

Index grid_side(Index per_image_dim) {
  Index side = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(per_image_dim))));
  return std::max<Index>(side, 4);
}

double sigmoid(double logit) {
  const double z = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

void validate(const ClassifierConfig& config) {
  if (config.alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (config.learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (config.layer_dims.empty())
    throw ConfigError("classifier layer_dims not derived from feature config");
  for (Index d : config.layer_dims)
    if (d < 1) throw ConfigError("classifier layer_dims must be positive");
  if (config.projection_dim < 1) throw ConfigError("projection_dim must be >= 1");
}

std::vector<Index> classifier_layer_dims(const FeatureExtractorConfig& fe_config) {
  validate(fe_config);
  const auto backbone = make_backbone(fe_config.backbone_id, fe_config.seed);
  std::vector<Index> dims;
  for (const std::string& lid : fe_config.layer_ids) {
    for (const LayerTapSpec& tap : backbone->taps()) {
      if (tap.layer_id != lid) continue;
      dims.push_back(fe_config.style_mode == StyleMode::kGram
                         ? tap.channels * (tap.channels + 1) / 2
                         : tap.channels * tap.height * tap.width);
      break;
    }
  }
  if (dims.size() != fe_config.layer_ids.size())
    throw ConfigError("feature layer not declared by backbone");
  return dims;
}

ClassifierModel ClassifierModel::init(const ClassifierConfig& config) {
  validate(config);
  ClassifierModel model;
  model.config_ = config;

  Rng rng = derive_rng(config.seed, "classifier-init");
  const Index n_layers = static_cast<Index>(config.layer_dims.size());
  model.projections_.reserve(config.layer_dims.size());
  for (Index dim : config.layer_dims) {
    model.projections_.emplace_back(dim, config.projection_dim,
                                    nn::Nonlinearity::kNone);
    model.projections_.back().init_params(rng);
  }

  model.side_ = grid_side(n_layers * config.projection_dim);
  const Index widths[] = {32, 64, 128, 128};
  Index in_ch = 2;
  Index side = model.side_;
  for (Index w : widths) {
    model.convs_.emplace_back(in_ch, w, 3, 2, 1, nn::Nonlinearity::kTanh);
    model.convs_.back().init_params(rng);
    in_ch = w;
    side = nn::conv_out_dim(side, 3, 2, 1);
  }
  model.head_input_ = in_ch * side * side;
  model.head_ = nn::Dense(model.head_input_, 1, nn::Nonlinearity::kNone);
  model.head_.init_params(rng);
  return model;
}

ClassifierModel init_classifier(const ClassifierConfig& config) {
  return ClassifierModel::init(config);
}

Index ClassifierModel::input_dim() const {
  Index total = 0;
  for (Index d : config_.layer_dims) total += d;
  return total;
}

Index ClassifierModel::parameter_count() const {
  Index n = 0;
  for (const auto& [name, mat] : named_params()) n += mat->size();
  return n;
}

std::vector<std::pair<std::string, const Matd*>> ClassifierModel::named_params()
    const {
  std::vector<std::pair<std::string, const Matd*>> out;
  for (std::size_t l = 0; l < projections_.size(); ++l) {
    out.emplace_back("proj" + std::to_string(l) + ".w",
                     &projections_[l].weight().value);
    out.emplace_back("proj" + std::to_string(l) + ".b",
                     &projections_[l].bias().value);
  }
  for (std::size_t c = 0; c < convs_.size(); ++c) {
    out.emplace_back("conv" + std::to_string(c) + ".w",
                     &convs_[c].weight().value);
    out.emplace_back("conv" + std::to_string(c) + ".b",
                     &convs_[c].bias().value);
  }
  out.emplace_back("head.w", &head_.weight().value);
  out.emplace_back("head.b", &head_.bias().value);
  return out;
}

std::vector<std::pair<std::string, Matd*>> ClassifierModel::named_params() {
  std::vector<std::pair<std::string, Matd*>> out;
  for (auto& [name, mat] :
       static_cast<const ClassifierModel*>(this)->named_params())
    out.emplace_back(name, const_cast<Matd*>(mat));
  return out;
}

namespace {

void check_stack(const ClassifierModel& model, const StyleFeatureStack& stack,
                 const char* which) {
  const auto& dims = model.config().layer_dims;
  if (static_cast<std::size_t>(stack.layers()) != dims.size())
    throw ValidationError(std::string(which) + " stack layer count mismatch");
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto& [begin, end] = stack.layer_offsets[l];
    if (end - begin != dims[l])
      throw ValidationError(std::string(which) + " stack layer " +
                            std::to_string(l) + " length mismatch");
  }
}

}  // namespace

// Shares the forward/backward plumbing between training and inference.
struct ClassifierTrainer {
  ClassifierModel& model;

  struct Forward {
    std::vector<Matd> projected;      // per layer: proj_dim x 2B
    std::vector<Activation> grid;     // per pair: 2 x side^2
    Matd head_in;                     // head_input x B
    Vecd logits;
    Vecd preds;
  };

  // Builds per-layer input matrices with reference columns [0, B) and
  // suspicious columns [B, 2B).
  std::vector<Matd> layer_inputs(const std::vector<PairFeatures>& feats,
                                 const std::vector<std::size_t>& idx) const {
    const auto& dims = model.config_.layer_dims;
    const Index b = static_cast<Index>(idx.size());
    std::vector<Matd> inputs(dims.size());
    for (std::size_t l = 0; l < dims.size(); ++l)
      inputs[l].resize(dims[l], 2 * b);
    for (Index col = 0; col < b; ++col) {
      const PairFeatures& pf = feats[idx[static_cast<std::size_t>(col)]];
      check_stack(model, pf.ref, "reference");
      check_stack(model, pf.sus, "suspicious");
      for (std::size_t l = 0; l < dims.size(); ++l) {
        inputs[l].col(col) = pf.ref.layer_slice(static_cast<Index>(l));
        inputs[l].col(b + col) = pf.sus.layer_slice(static_cast<Index>(l));
      }
    }
    return inputs;
  }

  Forward forward(const std::vector<Matd>& layer_in, bool cache) {
    const Index two_b = layer_in[0].cols();
    const Index b = two_b / 2;
    const Index pd = model.config_.projection_dim;
    const Index n_layers = static_cast<Index>(layer_in.size());
    const Index side2 = model.side_ * model.side_;

    Forward fwd;
    fwd.projected.resize(layer_in.size());
    for (std::size_t l = 0; l < layer_in.size(); ++l)
      fwd.projected[l] = cache ? model.projections_[l].forward(layer_in[l])
                               : model.projections_[l].infer(layer_in[l]);

    fwd.grid.resize(static_cast<std::size_t>(b));
    for (Index p = 0; p < b; ++p) {
      Activation& g = fwd.grid[static_cast<std::size_t>(p)];
      g.height = model.side_;
      g.width = model.side_;
      g.data = Matd::Zero(2, side2);
      for (Index l = 0; l < n_layers; ++l) {
        g.data.block(0, l * pd, 1, pd) =
            fwd.projected[static_cast<std::size_t>(l)].col(p).transpose();
        g.data.block(1, l * pd, 1, pd) =
            fwd.projected[static_cast<std::size_t>(l)].col(b + p).transpose();
      }
    }

    std::vector<Activation> cur = fwd.grid;
    for (auto& conv : model.convs_) cur = cache ? conv.forward(cur) : conv.infer(cur);

    fwd.head_in.resize(model.head_input_, b);
    for (Index p = 0; p < b; ++p)
      fwd.head_in.col(p) = Eigen::Map<const Vecd>(
          cur[static_cast<std::size_t>(p)].data.data(), model.head_input_);

    const Matd logits = cache ? model.head_.forward(fwd.head_in)
                              : model.head_.infer(fwd.head_in);
    fwd.logits = logits.row(0).transpose();
    fwd.preds.resize(b);
    for (Index p = 0; p < b; ++p) fwd.preds[p] = sigmoid(fwd.logits[p]);
    return fwd;
  }

  // dL/dpred plus optional per-layer gradients on the projected features
  // (proj_dim x 2B, same column layout as Forward::projected).
  void backward(const Forward& fwd, const Vecd& pred_grads,
                const std::vector<Matd>* projected_grads) {
    const Index b = fwd.preds.size();
    const Index pd = model.config_.projection_dim;
    const Index n_layers = static_cast<Index>(fwd.projected.size());

    Matd dlogit(1, b);
    for (Index p = 0; p < b; ++p)
      dlogit(0, p) = pred_grads[p] * fwd.preds[p] * (1.0 - fwd.preds[p]);

    const Matd dflat = model.head_.backward(dlogit);

    const Index fs = model.convs_.back().out_channels();
    const Index fsp = model.head_input_ / fs;
    std::vector<Activation> conv_grads(static_cast<std::size_t>(b));
    const Index final_side = static_cast<Index>(std::lround(std::sqrt(double(fsp))));
    for (Index p = 0; p < b; ++p) {
      Activation& g = conv_grads[static_cast<std::size_t>(p)];
      g.height = final_side;
      g.width = final_side;
      g.data = Eigen::Map<const Matd>(dflat.col(p).data(), fs, fsp);
    }
    for (auto it = model.convs_.rbegin(); it != model.convs_.rend(); ++it)
      conv_grads = it->backward(conv_grads);

    std::vector<Matd> dproj(fwd.projected.size());
    for (std::size_t l = 0; l < dproj.size(); ++l)
      dproj[l] = Matd::Zero(pd, 2 * b);
    for (Index p = 0; p < b; ++p) {
      const Activation& g = conv_grads[static_cast<std::size_t>(p)];
      for (Index l = 0; l < n_layers; ++l) {
        dproj[static_cast<std::size_t>(l)].col(p) =
            g.data.block(0, l * pd, 1, pd).transpose();
        dproj[static_cast<std::size_t>(l)].col(b + p) =
            g.data.block(1, l * pd, 1, pd).transpose();
      }
    }
    if (projected_grads) {
      for (std::size_t l = 0; l < dproj.size(); ++l)
        dproj[l] += (*projected_grads)[l];
    }
    for (std::size_t l = 0; l < dproj.size(); ++l)
      model.projections_[l].backward(dproj[l]);
  }

  void zero_grad() {
    for (auto& p : model.projections_) p.zero_grad();
    for (auto& c : model.convs_) c.zero_grad();
    model.head_.zero_grad();
  }

  void step(const nn::AdamConfig& cfg, long t) {
    for (auto& p : model.projections_) p.step(cfg, t);
    for (auto& c : model.convs_) c.step(cfg, t);
    model.head_.step(cfg, t);
  }

  // Identity-loss batch over the projected per-layer features.
  PairBatch projected_batch(const Forward& fwd, const std::vector<double>& labels) const {
    const Index b = fwd.preds.size();
    const Index pd = model.config_.projection_dim;
    const Index n_layers = static_cast<Index>(fwd.projected.size());

    PairBatch batch;
    batch.labels = labels;
    batch.ref_stacks.resize(static_cast<std::size_t>(b));
    batch.sus_stacks.resize(static_cast<std::size_t>(b));
    for (Index p = 0; p < b; ++p) {
      auto fill = [&](StyleFeatureStack& stack, Index col) {
        stack.stacked.resize(n_layers * pd);
        for (Index l = 0; l < n_layers; ++l) {
          stack.layer_offsets.emplace_back(l * pd, (l + 1) * pd);
          stack.stacked.segment(l * pd, pd) =
              fwd.projected[static_cast<std::size_t>(l)].col(col);
          stack.per_layer.push_back(stack.stacked.segment(l * pd, pd));
        }
      };
      fill(batch.ref_stacks[static_cast<std::size_t>(p)], p);
      fill(batch.sus_stacks[static_cast<std::size_t>(p)], b + p);
    }
    return batch;
  }
};

double ClassifierModel::predict_pair(const StyleFeatureStack& ref_stack,
                                     const StyleFeatureStack& sus_stack) const {
  check_stack(*this, ref_stack, "reference");
  check_stack(*this, sus_stack, "suspicious");
  PairFeatures pf{ref_stack, sus_stack, 1, "", ""};
  std::vector<PairFeatures> feats{std::move(pf)};
  ClassifierTrainer trainer{const_cast<ClassifierModel&>(*this)};
  const auto inputs = trainer.layer_inputs(feats, {0});
  const auto fwd = trainer.forward(inputs, false);
  return fwd.preds[0];
}

std::vector<PairFeatures> extract_dataset_features(
    const DatasetManifest& manifest, Split split,
    const StyleFeatureExtractor& extractor) {
  std::vector<PairFeatures> out;
  for (std::size_t i : manifest.indices(split)) {
    const PairRecord& r = manifest.records[i];
    PairFeatures pf;
    pf.ref = extractor.extract_file(manifest.resolve_path(r.real_path));
    pf.sus = extractor.extract_file(manifest.resolve_path(r.suspicious_path));
    pf.label = r.label;
    pf.technique = r.technique;
    pf.pair_id = r.pair_id;
    out.push_back(std::move(pf));
  }
  return out;
}

ClassifierModel train_classifier(const DatasetManifest& manifest,
                                 const FeatureExtractorConfig& fe_config,
                                 const ClassifierConfig& cls_config) {
  validate(fe_config);
  ClassifierConfig config = cls_config;
  if (config.layer_dims.empty())
    config.layer_dims = classifier_layer_dims(fe_config);
  validate(config);

  const StyleFeatureExtractor extractor(fe_config);
  const auto train_feats =
      extract_dataset_features(manifest, Split::kTrain, extractor);
  const auto val_feats = extract_dataset_features(manifest, Split::kVal, extractor);
  if (train_feats.empty()) throw ValidationError("train split is empty");
  if (val_feats.empty()) throw ValidationError("val split is empty");

  ClassifierModel model = ClassifierModel::init(config);
  ClassifierTrainer trainer{model};
  const nn::AdamConfig adam{config.learning_rate};

  std::vector<std::size_t> val_idx(val_feats.size());
  for (std::size_t i = 0; i < val_feats.size(); ++i) val_idx[i] = i;
  const auto val_inputs = trainer.layer_inputs(val_feats, val_idx);
  Vecd val_labels(static_cast<Index>(val_feats.size()));
  std::vector<double> val_label_vec(val_feats.size());
  for (std::size_t i = 0; i < val_feats.size(); ++i) {
    val_labels[static_cast<Index>(i)] = val_feats[i].label;
    val_label_vec[i] = val_feats[i].label;
  }

  double best_val_accuracy = -1.0;
  std::vector<Matd> best_params;
  long adam_t = 0;

  std::vector<std::size_t> order(train_feats.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = derive_rng(config.seed, "batch-order",
                                 static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(
                    0, static_cast<std::int64_t>(i) - 1))]);

    double epoch_loss = 0.0, epoch_bce = 0.0, epoch_sil = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::vector<std::size_t> batch_idx(order.begin() + start,
                                               order.begin() + stop);
      const Index b = static_cast<Index>(batch_idx.size());

      trainer.zero_grad();
      const auto inputs = trainer.layer_inputs(train_feats, batch_idx);
      auto fwd = trainer.forward(inputs, true);

      Vecd labels(b);
      std::vector<double> label_vec(batch_idx.size());
      for (Index p = 0; p < b; ++p) {
        labels[p] = train_feats[batch_idx[static_cast<std::size_t>(p)]].label;
        label_vec[static_cast<std::size_t>(p)] = labels[p];
      }

      const BceResult bce = bce_loss_with_grad(fwd.preds, labels);
      double sil_value = 0.0;
      std::vector<Matd> sil_grads;
      if (config.alpha > 0.0) {
        const PairBatch pbatch = trainer.projected_batch(fwd, label_vec);
        const SilResult sil = stacked_identity_loss_with_grad(pbatch);
        sil_value = sil.value;
        const Index pd = config.projection_dim;
        sil_grads.assign(config.layer_dims.size(), Matd::Zero(pd, 2 * b));
        for (Index p = 0; p < b; ++p)
          for (std::size_t l = 0; l < config.layer_dims.size(); ++l) {
            const Index off = static_cast<Index>(l) * pd;
            sil_grads[l].col(p) =
                config.alpha *
                sil.ref_grads[static_cast<std::size_t>(p)].segment(off, pd);
            sil_grads[l].col(b + p) =
                config.alpha *
                sil.sus_grads[static_cast<std::size_t>(p)].segment(off, pd);
          }
      }
      const double batch_loss = bce.value + config.alpha * sil_value;
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch "
            << batch_index;
        throw NumericError(msg.str());
      }

      trainer.backward(fwd, bce.prediction_grads,
                       config.alpha > 0.0 ? &sil_grads : nullptr);
      trainer.step(adam, ++adam_t);

      epoch_loss += batch_loss * static_cast<double>(b);
      epoch_bce += bce.value * static_cast<double>(b);
      epoch_sil += sil_value * static_cast<double>(b);
      seen += batch_idx.size();
    }

    const auto val_fwd = trainer.forward(val_inputs, false);
    const double val_bce = bce_loss(val_fwd.preds, val_labels).value;
    double val_sil = 0.0;
    if (config.alpha > 0.0)
      val_sil = stacked_identity_loss(trainer.projected_batch(val_fwd, val_label_vec)).value;
    long correct = 0;
    for (Index p = 0; p < val_fwd.preds.size(); ++p) {
      const bool swap = classifier_flags_swap(val_fwd.preds[p], 0.5);
      if (swap == (val_labels[p] == 0.0)) ++correct;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(seen);
    stats.train_bce = epoch_bce / static_cast<double>(seen);
    stats.train_sil = epoch_sil / static_cast<double>(seen);
    stats.val_loss = val_bce + config.alpha * val_sil;
    stats.val_accuracy =
        static_cast<double>(correct) / static_cast<double>(val_fwd.preds.size());
    model.history_.push_back(stats);

    if (stats.val_accuracy > best_val_accuracy) {
      best_val_accuracy = stats.val_accuracy;
      best_params.clear();
      for (const auto& [name, mat] :
           static_cast<const ClassifierModel&>(model).named_params())
        best_params.push_back(*mat);
    }
  }

  // Restore the best-validation-accuracy checkpoint.
  std::size_t k = 0;
  for (auto& [name, mat] : model.named_params()) *mat = best_params[k++];

  model.fe_fingerprint_ = feature_config_fingerprint(fe_config);
  auto techniques = manifest.techniques(Split::kTrain);
  std::sort(techniques.begin(), techniques.end());
  model.training_techniques_ = std::move(techniques);
  return model;
}

Verdict classify(const ClassifierModel& model, const ImageArray& reference,
                 const ImageArray& suspicious,
                 const FeatureExtractorConfig& fe_config,
                 double decision_cutoff) {
  if (!model.fe_fingerprint().empty() &&
      model.fe_fingerprint() != feature_config_fingerprint(fe_config))
    throw ConfigError("feature configuration does not match the trained model");
  const auto [ref_stack, sus_stack] =
      extract_pair_features(reference, suspicious, fe_config);
  const double p = model.predict_pair(ref_stack, sus_stack);
  Verdict verdict;
  verdict.face_swapped = classifier_flags_swap(p, decision_cutoff);
  verdict.score = p;
  verdict.method = Method::kClassifier;
  verdict.threshold_used = decision_cutoff;
  return verdict;
}

}  // namespace swapdetect
