#include "swapdetect/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace swapdetect {

namespace {

// Reads the next whitespace/comment-delimited token of a PNM header.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) {
    token.push_back(static_cast<char>(bytes[pos]));
    ++pos;
  }
  if (token.empty()) throw IoError("truncated PNM header");
  return token;
}

long parse_dim(const std::string& token) {
  try {
    const long v = std::stol(token);
    if (v <= 0) throw IoError("non-positive PNM dimension");
    return v;
  } catch (const std::logic_error&) {
    throw IoError("malformed PNM header token '" + token + "'");
  }
}

}  // namespace

RawImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2) throw IoError("not a PNM file: too short");
  const std::string magic = next_token(bytes, pos);
  if (magic != "P6" && magic != "P5")
    throw IoError("unsupported image format (expected binary PPM/PGM), magic '" +
                  magic + "'");
  const long width = parse_dim(next_token(bytes, pos));
  const long height = parse_dim(next_token(bytes, pos));
  const long maxval = parse_dim(next_token(bytes, pos));
  if (maxval != 255) throw IoError("only 8-bit PNM supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw IoError("malformed PNM header");
  ++pos;  // single whitespace before pixel data

  const std::size_t n_px = static_cast<std::size_t>(width) * height;
  const std::size_t n_ch = magic == "P6" ? 3 : 1;
  if (bytes.size() - pos < n_px * n_ch) throw IoError("truncated PNM pixel data");

  RawImage out;
  out.width = width;
  out.height = height;
  out.rgb.resize(n_px * 3);
  if (n_ch == 3) {
    std::copy(bytes.begin() + pos, bytes.begin() + pos + n_px * 3,
              out.rgb.begin());
  } else {
    for (std::size_t i = 0; i < n_px; ++i) {
      const std::uint8_t v = bytes[pos + i];
      out.rgb[3 * i] = out.rgb[3 * i + 1] = out.rgb[3 * i + 2] = v;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const RawImage& image) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P6\n%ld %ld\n255\n",
                              static_cast<long>(image.width),
                              static_cast<long>(image.height));
  std::vector<std::uint8_t> bytes(header, header + n);
  bytes.insert(bytes.end(), image.rgb.begin(), image.rgb.end());
  return bytes;
}

RawImage quantize(const ImageArray& image) {
  RawImage out;
  out.height = image.height();
  out.width = image.width();
  out.rgb.resize(static_cast<std::size_t>(out.height) * out.width * 3);
  for (Index y = 0; y < out.height; ++y)
    for (Index x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.channel(c)(y, x), -1.0, 1.0);
        const double q = std::round((v + 1.0) * 127.5);
        out.rgb[(static_cast<std::size_t>(y) * out.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
      }
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

ImageArray resize_bilinear(const ImageArray& src, Index out_h, Index out_w) {
  if (out_h <= 0 || out_w <= 0) throw ValidationError("bad resize target");
  const Index in_h = src.height();
  const Index in_w = src.width();
  if (in_h == out_h && in_w == out_w) return src;

  ImageArray dst(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (Index y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const Index y0 = std::clamp<Index>(static_cast<Index>(std::floor(fy)), 0, in_h - 1);
    const Index y1 = std::min<Index>(y0 + 1, in_h - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (Index x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const Index x0 = std::clamp<Index>(static_cast<Index>(std::floor(fx)), 0, in_w - 1);
      const Index x1 = std::min<Index>(x0 + 1, in_w - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const Matd& p = src.channel(c);
        const double top = p(y0, x0) * (1.0 - wx) + p(y0, x1) * wx;
        const double bot = p(y1, x0) * (1.0 - wx) + p(y1, x1) * wx;
        dst.channel(c)(y, x) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

ImageArray preprocess_image(const std::vector<std::uint8_t>& raw_bytes) {
  const RawImage raw = decode_ppm(raw_bytes);
  ImageArray img(raw.height, raw.width);
  for (Index y = 0; y < raw.height; ++y)
    for (Index x = 0; x < raw.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.channel(c)(y, x) =
            raw.rgb[(static_cast<std::size_t>(y) * raw.width + x) * 3 + c] /
                127.5 -
            1.0;
  return resize_bilinear(img, kDefaultImageSize, kDefaultImageSize);
}

ImageArray preprocess_image_file(const std::string& path) {
  return preprocess_image(read_file(path));
}

AugmentationPlan sample_augmentation(std::uint64_t seed) {
  Rng rng = derive_rng(seed, "augment");
  AugmentationPlan plan;
  plan.flip = rng.uniform() < 0.5;
  plan.rotate = rng.uniform() < 0.5;
  plan.rotation_rad = rng.uniform(-10.0, 10.0) * std::numbers::pi / 180.0;
  plan.jitter = rng.uniform() < 0.5;
  plan.brightness = rng.uniform(-0.1, 0.1) * 2.0;  // fraction of [-1,1] span
  plan.contrast = rng.uniform(0.9, 1.1);
  plan.scale = rng.uniform() < 0.5;
  plan.scale_factor = rng.uniform(0.9, 1.1);
  return plan;
}

namespace {

// Inverse-map resampling about the image center, used by both rotation and
// scaling so they share the clamped-bilinear border behavior.
ImageArray warp_about_center(const ImageArray& image, double cos_a, double sin_a,
                             double inv_scale) {
  const Index h = image.height();
  const Index w = image.width();
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  ImageArray out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double dy = (y - cy) * inv_scale;
      const double dx = (x - cx) * inv_scale;
      const double sy = cos_a * dy - sin_a * dx + cy;
      const double sx = sin_a * dy + cos_a * dx + cx;
      const Index y0 = std::clamp<Index>(static_cast<Index>(std::floor(sy)), 0, h - 1);
      const Index x0 = std::clamp<Index>(static_cast<Index>(std::floor(sx)), 0, w - 1);
      const Index y1 = std::min<Index>(y0 + 1, h - 1);
      const Index x1 = std::min<Index>(x0 + 1, w - 1);
      const double wy = std::clamp(sy - y0, 0.0, 1.0);
      const double wx = std::clamp(sx - x0, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const Matd& p = image.channel(c);
        const double top = p(y0, x0) * (1.0 - wx) + p(y0, x1) * wx;
        const double bot = p(y1, x0) * (1.0 - wx) + p(y1, x1) * wx;
        out.channel(c)(y, x) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

}  // namespace

ImageArray apply_augmentation(const ImageArray& image,
                              const AugmentationPlan& plan) {
  ImageArray out = image;
  if (plan.flip) {
    for (int c = 0; c < 3; ++c) out.channel(c) = out.channel(c).rowwise().reverse().eval();
  }
  if (plan.rotate && plan.rotation_rad != 0.0) {
    out = warp_about_center(out, std::cos(plan.rotation_rad),
                            std::sin(plan.rotation_rad), 1.0);
  }
  if (plan.jitter) {
    for (int c = 0; c < 3; ++c) {
      out.channel(c) = ((out.channel(c).array() * plan.contrast) + plan.brightness)
                           .cwiseMax(-1.0)
                           .cwiseMin(1.0)
                           .matrix();
    }
  }
  if (plan.scale && plan.scale_factor != 1.0) {
    out = warp_about_center(out, 1.0, 0.0, 1.0 / plan.scale_factor);
  }
  return out;
}

ImageArray augment(const ImageArray& image, std::uint64_t seed) {
  return apply_augmentation(image, sample_augmentation(seed));
}

}  // namespace swapdetect
