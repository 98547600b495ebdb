#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "swapdetect/types.hpp"

namespace swapdetect {

// Preprocessed image: three channel planes, values in [-1, 1].
// The default pipeline produces 256x256x3.
struct ImageArray {
  std::array<Matd, 3> channels;

  ImageArray() = default;
  ImageArray(Index height, Index width) {
    for (auto& c : channels) c = Matd::Zero(height, width);
  }

  Index height() const { return channels[0].rows(); }
  Index width() const { return channels[0].cols(); }
  Matd& channel(int i) { return channels[static_cast<std::size_t>(i)]; }
  const Matd& channel(int i) const {
    return channels[static_cast<std::size_t>(i)];
  }
};

inline constexpr Index kDefaultImageSize = 256;

// Raw 8-bit interleaved RGB as decoded from a PPM container.
struct RawImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> rgb;  // h*w*3, row-major
};

RawImage decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const RawImage& image);

// Quantizes a preprocessed image back to 8-bit. Exact inverse of the
// [0,255] -> [-1,1] map on values that came from 8-bit data.
RawImage quantize(const ImageArray& image);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Bilinear resize with half-pixel centers and edge clamping.
ImageArray resize_bilinear(const ImageArray& src, Index out_h, Index out_w);

// Decode + resize to 256x256 + map [0,255] -> [-1,1].
ImageArray preprocess_image(const std::vector<std::uint8_t>& raw_bytes);
ImageArray preprocess_image_file(const std::string& path);

// One sampled draw of the augmentation pipeline. Each transform fires
// independently with probability 0.5.
struct AugmentationPlan {
  bool flip = false;
  bool rotate = false;
  double rotation_rad = 0.0;  // within +-10 degrees
  bool jitter = false;
  double brightness = 0.0;  // additive shift, within +-10% of full range
  double contrast = 1.0;    // multiplicative, within +-10%
  bool scale = false;
  double scale_factor = 1.0;  // within [0.9, 1.1], center crop/pad
};

AugmentationPlan sample_augmentation(std::uint64_t seed);
ImageArray apply_augmentation(const ImageArray& image,
                              const AugmentationPlan& plan);
ImageArray augment(const ImageArray& image, std::uint64_t seed);

}  // namespace swapdetect
