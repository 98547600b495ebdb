#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "swapdetect/backbone.hpp"
#include "swapdetect/image.hpp"
#include "swapdetect/types.hpp"

namespace swapdetect {

enum class StyleMode { kGram, kRawEmbedding };

std::string to_string(StyleMode mode);
StyleMode style_mode_from_string(const std::string& name);

struct FeatureExtractorConfig {
  std::string backbone_id = "tap4-cnn";
  std::vector<std::string> layer_ids = {"b1", "b2", "b3", "b4"};
  StyleMode style_mode = StyleMode::kGram;
  std::uint64_t seed = 17;
};

void validate(const FeatureExtractorConfig& config);

struct LayerFeatureSet {
  std::vector<Activation> layers;  // one entry per configured layer_id
};

// Per-layer flat style vectors plus their ordered concatenation.
struct StyleFeatureStack {
  std::vector<Vecd> per_layer;
  Vecd stacked;
  // Half-open [begin, end) index ranges of each layer inside `stacked`.
  std::vector<std::pair<Index, Index>> layer_offsets;

  Index layers() const { return static_cast<Index>(per_layer.size()); }
  Eigen::VectorBlock<const Vecd> layer_slice(Index l) const {
    const auto& [begin, end] = layer_offsets[static_cast<std::size_t>(l)];
    return stacked.segment(begin, end - begin);
  }
};

// Normalized Gram matrix G = F * F^T / spatial of a channels x spatial
// activation map. Symmetric positive semidefinite by construction.
template <class Derived>
Mat<typename Derived::Scalar> gram_matrix(
    const Eigen::MatrixBase<Derived>& flat_activation) {
  using Scalar = typename Derived::Scalar;
  if (flat_activation.cols() == 0)
    throw DegenerateInputError("gram_matrix: empty spatial extent");
  if (!flat_activation.derived().allFinite())
    throw NumericError("gram_matrix: non-finite activation");
  Mat<Scalar> gram = flat_activation.derived() *
                     flat_activation.derived().transpose() /
                     static_cast<Scalar>(flat_activation.cols());
  // F*F^T is symmetric up to rounding; make it exact.
  gram = ((gram + gram.transpose()) / Scalar(2)).eval();
  return gram;
}

inline Matd gram_matrix(const Activation& activation) {
  return gram_matrix(activation.data);
}

// Row-major upper triangle (diagonal included) of a symmetric matrix.
template <class Derived>
Vec<typename Derived::Scalar> flatten_upper_triangle(
    const Eigen::MatrixBase<Derived>& sym) {
  using Scalar = typename Derived::Scalar;
  const Index n = sym.rows();
  Vec<Scalar> out(n * (n + 1) / 2);
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) out[k++] = sym(i, j);
  return out;
}

LayerFeatureSet extract_layer_features(const ImageArray& image,
                                       const FeatureExtractorConfig& config);
StyleFeatureStack stack_style_features(const LayerFeatureSet& features,
                                       const FeatureExtractorConfig& config);
std::pair<StyleFeatureStack, StyleFeatureStack> extract_pair_features(
    const ImageArray& reference, const ImageArray& suspicious,
    const FeatureExtractorConfig& config);

// Splits a stacked vector back into per-layer vectors. Inverse of the
// concatenation done by stack_style_features.
std::vector<Vecd> unstack(const Vecd& stacked,
                          const std::vector<std::pair<Index, Index>>& offsets);

// Total stacked feature length implied by a config (from declared taps).
Index stacked_feature_length(const FeatureExtractorConfig& config);

// Holds the instantiated backbone so repeated extractions skip re-seeding.
class StyleFeatureExtractor {
 public:
  explicit StyleFeatureExtractor(FeatureExtractorConfig config);

  const FeatureExtractorConfig& config() const { return config_; }
  const Backbone& backbone() const { return *backbone_; }

  LayerFeatureSet layer_features(const ImageArray& image) const;
  StyleFeatureStack extract(const ImageArray& image) const;
  StyleFeatureStack extract_file(const std::string& path) const;

 private:
  FeatureExtractorConfig config_;
  std::unique_ptr<Backbone> backbone_;
};

}  // namespace swapdetect
