#pragma once

#include <memory>
#include <string>
#include <vector>

#include "swapdetect/image.hpp"
#include "swapdetect/types.hpp"

namespace swapdetect {

// Layer activations stored channel-major: one row per channel, one column
// per spatial position (row-major over y, x). GEMM-friendly.
struct Activation {
  Matd data;  // channels x (height*width)
  Index height = 0;
  Index width = 0;

  Index channels() const { return data.rows(); }
  Index spatial() const { return height * width; }
};

struct LayerTapSpec {
  std::string layer_id;
  Index channels = 0;
  Index height = 0;
  Index width = 0;
};

// Frozen feature extractor backbone: deterministic in its seed, exposes
// named intermediate taps.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const std::string& id() const = 0;
  // Input size the declared tap shapes correspond to.
  virtual Index nominal_input_size() const = 0;
  virtual const std::vector<LayerTapSpec>& taps() const = 0;

  // Runs the network and returns the requested taps in the given order.
  virtual std::vector<Activation> forward_taps(
      const ImageArray& image, const std::vector<std::string>& layer_ids) const = 0;
};

std::unique_ptr<Backbone> make_backbone(const std::string& backbone_id,
                                        std::uint64_t seed);
std::vector<std::string> registered_backbones();

}  // namespace swapdetect
