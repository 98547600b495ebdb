#include "swapdetect/features.hpp"

#include <algorithm>

namespace swapdetect {

std::string to_string(StyleMode mode) {
  return mode == StyleMode::kGram ? "gram" : "raw-embedding";
}

StyleMode style_mode_from_string(const std::string& name) {
  if (name == "gram") return StyleMode::kGram;
  if (name == "raw-embedding") return StyleMode::kRawEmbedding;
  throw ConfigError("unknown style_mode '" + name + "'");
}

void validate(const FeatureExtractorConfig& config) {
  if (config.layer_ids.empty())
    throw ConfigError("feature extractor needs at least one layer_id");
  const auto known = registered_backbones();
  if (std::find(known.begin(), known.end(), config.backbone_id) == known.end())
    throw ConfigError("unknown backbone_id '" + config.backbone_id + "'");
}

LayerFeatureSet extract_layer_features(const ImageArray& image,
                                       const FeatureExtractorConfig& config) {
  validate(config);
  const auto backbone = make_backbone(config.backbone_id, config.seed);
  return LayerFeatureSet{backbone->forward_taps(image, config.layer_ids)};
}

StyleFeatureStack stack_style_features(const LayerFeatureSet& features,
                                       const FeatureExtractorConfig& config) {
  if (features.layers.size() != config.layer_ids.size())
    throw ConfigError("layer feature count does not match configured layers");

  StyleFeatureStack stack;
  stack.per_layer.reserve(features.layers.size());
  Index total = 0;
  for (const Activation& act : features.layers) {
    Vecd v;
    if (config.style_mode == StyleMode::kGram) {
      v = flatten_upper_triangle(gram_matrix(act));
    } else {
      v = Vecd(Eigen::Map<const Vecd>(act.data.data(), act.data.size()));
    }
    stack.layer_offsets.emplace_back(total, total + v.size());
    total += v.size();
    stack.per_layer.push_back(std::move(v));
  }
  stack.stacked.resize(total);
  for (std::size_t l = 0; l < stack.per_layer.size(); ++l)
    stack.stacked.segment(stack.layer_offsets[l].first,
                          stack.per_layer[l].size()) = stack.per_layer[l];
  return stack;
}

std::pair<StyleFeatureStack, StyleFeatureStack> extract_pair_features(
    const ImageArray& reference, const ImageArray& suspicious,
    const FeatureExtractorConfig& config) {
  StyleFeatureExtractor extractor(config);
  return {extractor.extract(reference), extractor.extract(suspicious)};
}

std::vector<Vecd> unstack(const Vecd& stacked,
                          const std::vector<std::pair<Index, Index>>& offsets) {
  std::vector<Vecd> out;
  out.reserve(offsets.size());
  for (const auto& [begin, end] : offsets) {
    if (begin < 0 || end > stacked.size() || begin > end)
      throw ValidationError("layer offsets inconsistent with stacked length");
    out.push_back(stacked.segment(begin, end - begin));
  }
  return out;
}

Index stacked_feature_length(const FeatureExtractorConfig& config) {
  validate(config);
  const auto backbone = make_backbone(config.backbone_id, config.seed);
  Index total = 0;
  for (const std::string& lid : config.layer_ids) {
    bool found = false;
    for (const LayerTapSpec& tap : backbone->taps()) {
      if (tap.layer_id != lid) continue;
      total += config.style_mode == StyleMode::kGram
                   ? tap.channels * (tap.channels + 1) / 2
                   : tap.channels * tap.height * tap.width;
      found = true;
      break;
    }
    if (!found)
      throw ConfigError("backbone '" + config.backbone_id + "' has no layer '" +
                        lid + "'");
  }
  return total;
}

StyleFeatureExtractor::StyleFeatureExtractor(FeatureExtractorConfig config)
    : config_(std::move(config)) {
  validate(config_);
  backbone_ = make_backbone(config_.backbone_id, config_.seed);
}

LayerFeatureSet StyleFeatureExtractor::layer_features(
    const ImageArray& image) const {
  return LayerFeatureSet{backbone_->forward_taps(image, config_.layer_ids)};
}

StyleFeatureStack StyleFeatureExtractor::extract(const ImageArray& image) const {
  return stack_style_features(layer_features(image), config_);
}

StyleFeatureStack StyleFeatureExtractor::extract_file(
    const std::string& path) const {
  return extract(preprocess_image_file(path));
}

}  // namespace swapdetect
