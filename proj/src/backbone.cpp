#include "swapdetect/backbone.hpp"

#include <map>
#include <sstream>

#include "swapdetect/nn.hpp"

namespace swapdetect {

namespace {

// Seeded stack of strided conv blocks with a tap after every block. Kept
// frozen: features come from the random projection the seed defines, and
// reproducibility follows from the seed alone.
class TapCnn final : public Backbone {
 public:
  TapCnn(std::string id, std::uint64_t seed, Index nominal_input,
         std::vector<Index> widths)
      : id_(std::move(id)), nominal_input_(nominal_input) {
    Rng rng = derive_rng(seed, "backbone/" + id_);
    Index in_ch = 3;
    Index size = nominal_input;
    for (std::size_t b = 0; b < widths.size(); ++b) {
      blocks_.emplace_back(in_ch, widths[b], 3, 2, 1, nn::Nonlinearity::kTanh);
      blocks_.back().init_params(rng);
      in_ch = widths[b];
      size = nn::conv_out_dim(size, 3, 2, 1);
      taps_.push_back({"b" + std::to_string(b + 1), widths[b], size, size});
    }
  }

  const std::string& id() const override { return id_; }
  Index nominal_input_size() const override { return nominal_input_; }
  const std::vector<LayerTapSpec>& taps() const override { return taps_; }

  std::vector<Activation> forward_taps(
      const ImageArray& image,
      const std::vector<std::string>& layer_ids) const override {
    if (image.height() != nominal_input_ || image.width() != nominal_input_) {
      std::ostringstream msg;
      msg << "backbone '" << id_ << "' expects " << nominal_input_ << "x"
          << nominal_input_ << " input, got " << image.height() << "x"
          << image.width();
      throw ValidationError(msg.str());
    }

    Activation x;
    x.height = image.height();
    x.width = image.width();
    x.data.resize(3, x.spatial());
    for (int c = 0; c < 3; ++c) {
      const Matd& plane = image.channel(c);
      for (Index y = 0; y < x.height; ++y)
        for (Index col = 0; col < x.width; ++col)
          x.data(c, y * x.width + col) = plane(y, col);
    }

    std::vector<Activation> all(blocks_.size());
    std::vector<Activation> cur{std::move(x)};
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      cur = blocks_[b].infer(cur);
      all[b] = cur[0];
    }

    std::vector<Activation> out;
    out.reserve(layer_ids.size());
    for (const std::string& lid : layer_ids) {
      bool found = false;
      for (std::size_t b = 0; b < taps_.size(); ++b) {
        if (taps_[b].layer_id == lid) {
          if (!all[b].data.allFinite())
            throw NumericError("non-finite activations at layer " + lid);
          out.push_back(all[b]);
          found = true;
          break;
        }
      }
      if (!found)
        throw ConfigError("backbone '" + id_ + "' has no layer '" + lid + "'");
    }
    return out;
  }

 private:
  std::string id_;
  Index nominal_input_;
  std::vector<nn::Conv2d> blocks_;
  std::vector<LayerTapSpec> taps_;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(const std::string& backbone_id,
                                        std::uint64_t seed) {
  if (backbone_id == "tap4-cnn")
    return std::make_unique<TapCnn>(backbone_id, seed, kDefaultImageSize,
                                    std::vector<Index>{8, 12, 16, 24});
  if (backbone_id == "tap2-tiny")
    return std::make_unique<TapCnn>(backbone_id, seed, 32,
                                    std::vector<Index>{3, 4});
  throw ConfigError("unknown backbone_id '" + backbone_id + "'");
}

std::vector<std::string> registered_backbones() {
  return {"tap4-cnn", "tap2-tiny"};
}

}  // namespace swapdetect
