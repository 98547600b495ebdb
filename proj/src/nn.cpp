#include "swapdetect/nn.hpp"

#include <cmath>

namespace swapdetect::nn {

Matd im2col(const Activation& input, Index kernel, Index stride, Index pad) {
  const Index c = input.channels();
  const Index h = input.height;
  const Index w = input.width;
  const Index oh = conv_out_dim(h, kernel, stride, pad);
  const Index ow = conv_out_dim(w, kernel, stride, pad);
  Matd cols = Matd::Zero(c * kernel * kernel, oh * ow);
  for (Index oy = 0; oy < oh; ++oy) {
    for (Index ox = 0; ox < ow; ++ox) {
      const Index col = oy * ow + ox;
      for (Index ky = 0; ky < kernel; ++ky) {
        const Index iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (Index kx = 0; kx < kernel; ++kx) {
          const Index ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          const Index spatial = iy * w + ix;
          const Index row_base = (ky * kernel + kx) * c;
          for (Index ch = 0; ch < c; ++ch)
            cols(row_base + ch, col) = input.data(ch, spatial);
        }
      }
    }
  }
  return cols;
}

Matd col2im(const Matd& cols, Index channels, Index height, Index width,
            Index kernel, Index stride, Index pad) {
  const Index oh = conv_out_dim(height, kernel, stride, pad);
  const Index ow = conv_out_dim(width, kernel, stride, pad);
  Matd image = Matd::Zero(channels, height * width);
  for (Index oy = 0; oy < oh; ++oy) {
    for (Index ox = 0; ox < ow; ++ox) {
      const Index col = oy * ow + ox;
      for (Index ky = 0; ky < kernel; ++ky) {
        const Index iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= height) continue;
        for (Index kx = 0; kx < kernel; ++kx) {
          const Index ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= width) continue;
          const Index spatial = iy * width + ix;
          const Index row_base = (ky * kernel + kx) * channels;
          for (Index ch = 0; ch < channels; ++ch)
            image(ch, spatial) += cols(row_base + ch, col);
        }
      }
    }
  }
  return image;
}

void adam_step(Matd& param, const Matd& grad, AdamState& state,
               const AdamConfig& cfg, long step_count) {
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v.array().matrix() +
            (1.0 - cfg.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, step_count);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step_count);
  param.array() -= cfg.learning_rate * (state.m.array() / bc1) /
                   ((state.v.array() / bc2).sqrt() + cfg.epsilon);
}

Conv2d::Conv2d(Index in_ch, Index out_ch, Index kernel, Index stride, Index pad,
               Nonlinearity act)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride),
      pad_(pad), act_(act) {
  weight_.init(out_ch, in_ch * kernel * kernel);
  bias_.init(out_ch, 1);
}

void Conv2d::init_params(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(weight_.value.cols()));
  for (Index i = 0; i < weight_.value.rows(); ++i)
    for (Index j = 0; j < weight_.value.cols(); ++j)
      weight_.value(i, j) = rng.normal(0.0, scale);
  for (Index i = 0; i < bias_.value.rows(); ++i)
    bias_.value(i, 0) = rng.uniform(-0.05, 0.05);
}

std::vector<Activation> Conv2d::forward(const std::vector<Activation>& input,
                                        bool cache) {
  std::vector<Activation> out(input.size());
  if (cache) {
    cached_cols_.assign(input.size(), Matd());
    cached_out_.assign(input.size(), Activation());
  }
  for (std::size_t i = 0; i < input.size(); ++i) {
    const Activation& x = input[i];
    if (x.channels() != in_ch_)
      throw ValidationError("conv input channel mismatch");
    Matd cols = im2col(x, kernel_, stride_, pad_);
    Activation y;
    y.height = conv_out_dim(x.height, kernel_, stride_, pad_);
    y.width = conv_out_dim(x.width, kernel_, stride_, pad_);
    y.data.noalias() = weight_.value * cols;
    y.data.colwise() += bias_.value.col(0);
    if (act_ == Nonlinearity::kTanh) y.data = y.data.array().tanh().matrix();
    if (cache) {
      cached_cols_[i] = std::move(cols);
      cached_in_h_ = x.height;
      cached_in_w_ = x.width;
      cached_out_[i] = y;
    }
    out[i] = std::move(y);
  }
  return out;
}

std::vector<Activation> Conv2d::infer(const std::vector<Activation>& input) const {
  std::vector<Activation> out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const Activation& x = input[i];
    if (x.channels() != in_ch_)
      throw ValidationError("conv input channel mismatch");
    const Matd cols = im2col(x, kernel_, stride_, pad_);
    Activation y;
    y.height = conv_out_dim(x.height, kernel_, stride_, pad_);
    y.width = conv_out_dim(x.width, kernel_, stride_, pad_);
    y.data.noalias() = weight_.value * cols;
    y.data.colwise() += bias_.value.col(0);
    if (act_ == Nonlinearity::kTanh) y.data = y.data.array().tanh().matrix();
    out[i] = std::move(y);
  }
  return out;
}

std::vector<Activation> Conv2d::backward(const std::vector<Activation>& grad_out) {
  std::vector<Activation> grad_in(grad_out.size());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    Matd dy = grad_out[i].data;
    if (act_ == Nonlinearity::kTanh) {
      dy.array() *= 1.0 - cached_out_[i].data.array().square();
    }
    weight_.grad.noalias() += dy * cached_cols_[i].transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    Matd dcols;
    dcols.noalias() = weight_.value.transpose() * dy;
    Activation gx;
    gx.height = cached_in_h_;
    gx.width = cached_in_w_;
    gx.data = col2im(dcols, in_ch_, cached_in_h_, cached_in_w_, kernel_,
                     stride_, pad_);
    grad_in[i] = std::move(gx);
  }
  return grad_in;
}

void Conv2d::zero_grad() {
  weight_.zero_grad();
  bias_.zero_grad();
}

void Conv2d::step(const AdamConfig& cfg, long t) {
  weight_.step(cfg, t);
  bias_.step(cfg, t);
}

Dense::Dense(Index in_dim, Index out_dim, Nonlinearity act)
    : in_dim_(in_dim), out_dim_(out_dim), act_(act) {
  weight_.init(out_dim, in_dim);
  bias_.init(out_dim, 1);
}

void Dense::init_params(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_dim_));
  for (Index i = 0; i < weight_.value.rows(); ++i)
    for (Index j = 0; j < weight_.value.cols(); ++j)
      weight_.value(i, j) = rng.normal(0.0, scale);
  for (Index i = 0; i < bias_.value.rows(); ++i)
    bias_.value(i, 0) = rng.uniform(-0.05, 0.05);
}

Matd Dense::forward(const Matd& input, bool cache) {
  if (input.rows() != in_dim_) throw ValidationError("dense input dim mismatch");
  Matd out;
  out.noalias() = weight_.value * input;
  out.colwise() += bias_.value.col(0);
  if (act_ == Nonlinearity::kTanh) out = out.array().tanh().matrix();
  if (cache) {
    cached_in_ = input;
    cached_out_ = out;
  }
  return out;
}

Matd Dense::infer(const Matd& input) const {
  if (input.rows() != in_dim_) throw ValidationError("dense input dim mismatch");
  Matd out;
  out.noalias() = weight_.value * input;
  out.colwise() += bias_.value.col(0);
  if (act_ == Nonlinearity::kTanh) out = out.array().tanh().matrix();
  return out;
}

Matd Dense::backward(const Matd& grad_out) {
  Matd dy = grad_out;
  if (act_ == Nonlinearity::kTanh)
    dy.array() *= 1.0 - cached_out_.array().square();
  weight_.grad.noalias() += dy * cached_in_.transpose();
  bias_.grad.col(0) += dy.rowwise().sum();
  Matd dx;
  dx.noalias() = weight_.value.transpose() * dy;
  return dx;
}

void Dense::zero_grad() {
  weight_.zero_grad();
  bias_.zero_grad();
}

void Dense::step(const AdamConfig& cfg, long t) {
  weight_.step(cfg, t);
  bias_.step(cfg, t);
}

Activation upsample2x(const Activation& input) {
  Activation out;
  out.height = input.height * 2;
  out.width = input.width * 2;
  out.data.resize(input.channels(), out.height * out.width);
  for (Index y = 0; y < out.height; ++y)
    for (Index x = 0; x < out.width; ++x)
      out.data.col(y * out.width + x) =
          input.data.col((y / 2) * input.width + (x / 2));
  return out;
}

Activation upsample2x_backward(const Activation& grad_out, Index in_h, Index in_w) {
  Activation grad_in;
  grad_in.height = in_h;
  grad_in.width = in_w;
  grad_in.data = Matd::Zero(grad_out.channels(), in_h * in_w);
  for (Index y = 0; y < grad_out.height; ++y)
    for (Index x = 0; x < grad_out.width; ++x)
      grad_in.data.col((y / 2) * in_w + (x / 2)) +=
          grad_out.data.col(y * grad_out.width + x);
  return grad_in;
}

}  // namespace swapdetect::nn
