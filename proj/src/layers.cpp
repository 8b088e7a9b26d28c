#include "frontal/nn/layers.hpp"

#include <cmath>

namespace frontal::nn {

namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatMap = Eigen::Map<RowMat>;
using ConstRowMatMap = Eigen::Map<const RowMat>;

void im2col(const Tensor& x, int k, int stride, int pad, int out_h, int out_w, Mat& cols) {
  const int K = x.channels * k * k;
  const int P = out_h * out_w;
  cols.resize(K, P);
  for (int c = 0; c < x.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int sy = oy * stride - pad + ky;
          const bool y_ok = sy >= 0 && sy < x.height;
          for (int ox = 0; ox < out_w; ++ox) {
            const int sx = ox * stride - pad + kx;
            cols(row, oy * out_w + ox) =
                (y_ok && sx >= 0 && sx < x.width) ? x(c, sy, sx) : 0.0;
          }
        }
      }
    }
  }
}

void col2im_accumulate(const Mat& dcols, int channels, int k, int stride, int pad,
                       int out_h, int out_w, Tensor& dx) {
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int sy = oy * stride - pad + ky;
          if (sy < 0 || sy >= dx.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int sx = ox * stride - pad + kx;
            if (sx < 0 || sx >= dx.width) continue;
            dx(c, sy, sx) += dcols(row, oy * out_w + ox);
          }
        }
      }
    }
  }
}

}  // namespace

Tensor activate(const Tensor& pre, Act act) {
  Tensor out(pre.channels, pre.height, pre.width);
  switch (act) {
    case Act::relu:
      out.data = pre.data.max(0.0);
      break;
    case Act::leaky_relu:
      out.data = (pre.data > 0.0).select(pre.data, pre.data * kLeakySlope);
      break;
    case Act::tanh:
      out.data = pre.data.tanh();
      break;
    case Act::sigmoid:
      out.data = 1.0 / (1.0 + (-pre.data).exp());
      break;
  }
  return out;
}

Tensor activate_backward(const Tensor& pre, Act act, const Tensor& dy) {
  Tensor dx(pre.channels, pre.height, pre.width);
  switch (act) {
    case Act::relu:
      dx.data = (pre.data > 0.0).select(dy.data, 0.0);
      break;
    case Act::leaky_relu:
      dx.data = (pre.data > 0.0).select(dy.data, dy.data * kLeakySlope);
      break;
    case Act::tanh: {
      const auto t = pre.data.tanh();
      dx.data = dy.data * (1.0 - t.square());
      break;
    }
    case Act::sigmoid: {
      const auto s = 1.0 / (1.0 + (-pre.data).exp());
      dx.data = dy.data * s * (1.0 - s);
      break;
    }
  }
  return dx;
}

void Conv::init(int in_channels, int out_channels, int k, int s, int p, Rng& rng) {
  in_c = in_channels;
  out_c = out_channels;
  ksize = k;
  stride = s;
  pad = p;
  const int fan_in = in_c * ksize * ksize;
  const Scalar limit = 1.0 / std::sqrt(static_cast<Scalar>(fan_in));
  w.resize(out_c, fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  b = Vec::Zero(out_c);
  zero_grad();
}

void Conv::zero_grad() {
  gw = Mat::Zero(w.rows(), w.cols());
  gb = Vec::Zero(b.size());
}

Tensor Conv::forward(const Tensor& x, ConvCtx* ctx) const {
  if (x.channels != in_c)
    fail_validation("conv", "expected " + std::to_string(in_c) + " input channels, got " +
                                std::to_string(x.channels));
  const int out_h = (x.height + 2 * pad - ksize) / stride + 1;
  const int out_w = (x.width + 2 * pad - ksize) / stride + 1;
  if (out_h <= 0 || out_w <= 0) fail_validation("conv", "input too small for kernel");

  Mat local_cols;
  Mat& cols = ctx ? ctx->cols : local_cols;
  im2col(x, ksize, stride, pad, out_h, out_w, cols);
  if (ctx) {
    ctx->in_h = x.height;
    ctx->in_w = x.width;
    ctx->out_h = out_h;
    ctx->out_w = out_w;
  }

  Tensor out(out_c, out_h, out_w);
  RowMatMap o(out.data.data(), out_c, static_cast<Eigen::Index>(out_h) * out_w);
  o.noalias() = w * cols;
  o.colwise() += b;
  return out;
}

Tensor Conv::backward(const ConvCtx& ctx, const Tensor& dy) {
  const Eigen::Index P = static_cast<Eigen::Index>(ctx.out_h) * ctx.out_w;
  ConstRowMatMap d(dy.data.data(), out_c, P);
  gw.noalias() += d * ctx.cols.transpose();
  gb.noalias() += d.rowwise().sum();
  return input_backward(ctx, dy);
}

Tensor Conv::input_backward(const ConvCtx& ctx, const Tensor& dy) const {
  const Eigen::Index P = static_cast<Eigen::Index>(ctx.out_h) * ctx.out_w;
  ConstRowMatMap d(dy.data.data(), out_c, P);
  const Mat dcols = w.transpose() * d;
  Tensor dx(in_c, ctx.in_h, ctx.in_w);
  col2im_accumulate(dcols, in_c, ksize, stride, pad, ctx.out_h, ctx.out_w, dx);
  return dx;
}

void InstanceNorm::init(int c) {
  channels = c;
  gamma = Vec::Ones(c);
  beta = Vec::Zero(c);
  zero_grad();
}

void InstanceNorm::zero_grad() {
  ggamma = Vec::Zero(channels);
  gbeta = Vec::Zero(channels);
}

Tensor InstanceNorm::forward(const Tensor& x, InstanceNormCtx* ctx) const {
  if (x.channels != channels)
    fail_validation("instance_norm", "expected " + std::to_string(channels) +
                                         " channels, got " + std::to_string(x.channels));
  Tensor out(x.channels, x.height, x.width);
  Tensor xhat(x.channels, x.height, x.width);
  Vec inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    const auto plane = x.plane(c);
    const Scalar mean = plane.mean();
    const Scalar var = (plane - mean).square().mean();
    const Scalar is = 1.0 / std::sqrt(var + kNormEps);
    inv_std(c) = is;
    xhat.plane(c) = (plane - mean) * is;
    out.plane(c) = xhat.plane(c) * gamma(c) + beta(c);
  }
  if (ctx) {
    ctx->xhat = std::move(xhat);
    ctx->inv_std = std::move(inv_std);
  }
  return out;
}

Tensor InstanceNorm::backward(const InstanceNormCtx& ctx, const Tensor& dy) {
  Tensor dx(dy.channels, dy.height, dy.width);
  const Scalar n = static_cast<Scalar>(dy.plane_size());
  for (int c = 0; c < channels; ++c) {
    const auto dyp = dy.plane(c);
    const auto xh = ctx.xhat.plane(c);
    ggamma(c) += (dyp * xh).sum();
    gbeta(c) += dyp.sum();
    const Plane dxhat = dyp * gamma(c);
    const Scalar s1 = dxhat.sum();
    const Scalar s2 = (dxhat * xh).sum();
    dx.plane(c) = ctx.inv_std(c) * (dxhat - (s1 + xh * s2) / n);
  }
  return dx;
}

void Linear::init(int in, int out, Rng& rng) {
  in_dim = in;
  out_dim = out;
  const Scalar limit = 1.0 / std::sqrt(static_cast<Scalar>(in));
  w.resize(out, in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  b = Vec::Zero(out);
  zero_grad();
}

void Linear::zero_grad() {
  gw = Mat::Zero(w.rows(), w.cols());
  gb = Vec::Zero(b.size());
}

Vec Linear::forward(const Vec& x) const {
  if (x.size() != in_dim)
    fail_validation("linear", "expected input dim " + std::to_string(in_dim) + ", got " +
                                  std::to_string(x.size()));
  return w * x + b;
}

Vec Linear::backward(const Vec& x, const Vec& dy) {
  gw.noalias() += dy * x.transpose();
  gb.noalias() += dy;
  return w.transpose() * dy;
}

Vec global_average(const Tensor& x) {
  Vec v(x.channels);
  for (int c = 0; c < x.channels; ++c) v(c) = x.plane(c).mean();
  return v;
}

Tensor global_average_backward(int channels, int height, int width, const Vec& dv) {
  Tensor dx(channels, height, width);
  const Scalar n = static_cast<Scalar>(height) * width;
  for (int c = 0; c < channels; ++c) dx.plane(c).setConstant(dv(c) / n);
  return dx;
}

Tensor upsample2x(const Tensor& x) {
  Tensor out(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx) {
        const Scalar v = x(c, y, xx);
        out(c, 2 * y, 2 * xx) = v;
        out(c, 2 * y, 2 * xx + 1) = v;
        out(c, 2 * y + 1, 2 * xx) = v;
        out(c, 2 * y + 1, 2 * xx + 1) = v;
      }
  return out;
}

Tensor upsample2x_backward(const Tensor& dy) {
  Tensor dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dx.channels; ++c)
    for (int y = 0; y < dx.height; ++y)
      for (int xx = 0; xx < dx.width; ++xx)
        dx(c, y, xx) = dy(c, 2 * y, 2 * xx) + dy(c, 2 * y, 2 * xx + 1) +
                       dy(c, 2 * y + 1, 2 * xx) + dy(c, 2 * y + 1, 2 * xx + 1);
  return dx;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) fail_validation("concat", "no tensors to concatenate");
  int total_c = 0;
  for (const Tensor* p : parts) {
    if (p->height != parts[0]->height || p->width != parts[0]->width)
      fail_validation("concat", "spatial dims mismatch");
    total_c += p->channels;
  }
  Tensor out(total_c, parts[0]->height, parts[0]->width);
  Eigen::Index offset = 0;
  for (const Tensor* p : parts) {
    out.data.segment(offset, p->data.size()) = p->data;
    offset += p->data.size();
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& d, const std::vector<int>& channel_counts) {
  std::vector<Tensor> out;
  Eigen::Index offset = 0;
  for (int c : channel_counts) {
    Tensor part(c, d.height, d.width);
    part.data = d.data.segment(offset, part.data.size());
    offset += part.data.size();
    out.push_back(std::move(part));
  }
  if (offset != d.data.size()) fail_validation("split", "channel counts do not cover tensor");
  return out;
}

}  // namespace frontal::nn
