#pragma once

#include <cstdint>
#include <vector>

#include "swapdetect/backbone.hpp"
#include "swapdetect/types.hpp"

namespace swapdetect::nn {

// Patch matrix for convolution: (in_ch*k*k) x (out_h*out_w).
Matd im2col(const Activation& input, Index kernel, Index stride, Index pad);
// Scatter-add inverse of im2col; returns channels x (h*w).
Matd col2im(const Matd& cols, Index channels, Index height, Index width,
            Index kernel, Index stride, Index pad);

inline Index conv_out_dim(Index in, Index kernel, Index stride, Index pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Matd m, v;
  void init(Index rows, Index cols) {
    m = Matd::Zero(rows, cols);
    v = Matd::Zero(rows, cols);
  }
};

// One Adam update with bias correction; step_count is 1-based and shared
// across all parameters of a model.
void adam_step(Matd& param, const Matd& grad, AdamState& state,
               const AdamConfig& cfg, long step_count);

// Trainable parameter with its gradient accumulator and optimizer state.
struct Param {
  Matd value;
  Matd grad;
  AdamState adam;

  void init(Index rows, Index cols) {
    value = Matd::Zero(rows, cols);
    grad = Matd::Zero(rows, cols);
    adam.init(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
  void step(const AdamConfig& cfg, long t) { adam_step(value, grad, adam, cfg, t); }
};

enum class Nonlinearity { kNone, kTanh };

// 2-D convolution over channel-major activations, with batch processed as a
// vector of samples. Caches whatever backward needs, so one forward must be
// paired with at most one backward.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_ch, Index out_ch, Index kernel, Index stride, Index pad,
         Nonlinearity act);

  void init_params(Rng& rng);

  std::vector<Activation> forward(const std::vector<Activation>& input,
                                  bool cache = true);
  std::vector<Activation> backward(const std::vector<Activation>& grad_out);
  // Forward pass without touching caches; usable on frozen layers.
  std::vector<Activation> infer(const std::vector<Activation>& input) const;

  void zero_grad();
  void step(const AdamConfig& cfg, long t);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  Index in_channels() const { return in_ch_; }
  Index out_channels() const { return out_ch_; }
  Index kernel() const { return kernel_; }
  Index stride() const { return stride_; }
  Index pad() const { return pad_; }

 private:
  Index in_ch_ = 0, out_ch_ = 0, kernel_ = 0, stride_ = 0, pad_ = 0;
  Nonlinearity act_ = Nonlinearity::kNone;
  Param weight_;  // out_ch x (in_ch*k*k)
  Param bias_;    // out_ch x 1
  std::vector<Matd> cached_cols_;
  std::vector<Activation> cached_out_;
  Index cached_in_h_ = 0, cached_in_w_ = 0;
};

// Fully connected layer over column-per-sample matrices.
class Dense {
 public:
  Dense() = default;
  Dense(Index in_dim, Index out_dim, Nonlinearity act);

  void init_params(Rng& rng);

  Matd forward(const Matd& input, bool cache = true);
  Matd backward(const Matd& grad_out);
  Matd infer(const Matd& input) const;

  void zero_grad();
  void step(const AdamConfig& cfg, long t);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  Index in_dim() const { return in_dim_; }
  Index out_dim() const { return out_dim_; }

 private:
  Index in_dim_ = 0, out_dim_ = 0;
  Nonlinearity act_ = Nonlinearity::kNone;
  Param weight_;  // out x in
  Param bias_;    // out x 1
  Matd cached_in_;
  Matd cached_out_;
};

// Nearest-neighbor 2x upsampling.
Activation upsample2x(const Activation& input);
Activation upsample2x_backward(const Activation& grad_out, Index in_h, Index in_w);

}  // namespace swapdetect::nn
