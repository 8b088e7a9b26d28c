#pragma once

#include "frontal/common.hpp"
#include "frontal/tensor.hpp"

#include <string>
#include <vector>

namespace frontal::nn {

inline constexpr Scalar kLeakySlope = 0.2;
inline constexpr Scalar kNormEps = 1e-5;

// Elementwise activations. `pre` is always the pre-activation tensor;
// *_backward returns dy (.) act'(pre).
enum class Act { relu, leaky_relu, tanh, sigmoid };

Tensor activate(const Tensor& pre, Act act);
Tensor activate_backward(const Tensor& pre, Act act, const Tensor& dy);

// 3x3-style convolution via im2col + GEMM. Weights are laid out
// out_c x (in_c * k * k); gradients are accumulated into gw/gb by backward.
// Forward is const and reentrant: per-call state lives in ConvCtx.
struct ConvCtx {
  Mat cols;  // (in_c*k*k) x (out_h*out_w) patch matrix
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

class Conv {
public:
  int in_c = 0, out_c = 0, ksize = 3, stride = 1, pad = 1;
  Mat w;
  Vec b;
  Mat gw;
  Vec gb;

  void init(int in_channels, int out_channels, int k, int s, int p, Rng& rng);
  Tensor forward(const Tensor& x, ConvCtx* ctx = nullptr) const;
  Tensor backward(const ConvCtx& ctx, const Tensor& dy);
  // Input gradient only, without touching gw/gb (for frozen networks).
  Tensor input_backward(const ConvCtx& ctx, const Tensor& dy) const;
  void zero_grad();
  std::size_t param_count() const {
    return static_cast<std::size_t>(w.size()) + static_cast<std::size_t>(b.size());
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
  template <class F>
  void for_each_param(const std::string& prefix, F&& f) const {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
};

// Per-channel, per-instance normalization with affine parameters; no running
// statistics, so inference is a pure function of the input.
struct InstanceNormCtx {
  Tensor xhat;
  Vec inv_std;
};

class InstanceNorm {
public:
  int channels = 0;
  Vec gamma, beta;
  Vec ggamma, gbeta;

  void init(int c);
  Tensor forward(const Tensor& x, InstanceNormCtx* ctx = nullptr) const;
  Tensor backward(const InstanceNormCtx& ctx, const Tensor& dy);
  void zero_grad();
  std::size_t param_count() const { return static_cast<std::size_t>(gamma.size() + beta.size()); }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma, ggamma);
    f(prefix + ".beta", beta, gbeta);
  }
  template <class F>
  void for_each_param(const std::string& prefix, F&& f) const {
    f(prefix + ".gamma", gamma, ggamma);
    f(prefix + ".beta", beta, gbeta);
  }
};

class Linear {
public:
  int in_dim = 0, out_dim = 0;
  Mat w;
  Vec b;
  Mat gw;
  Vec gb;

  void init(int in, int out, Rng& rng);
  Vec forward(const Vec& x) const;
  Vec backward(const Vec& x, const Vec& dy);
  void zero_grad();
  std::size_t param_count() const {
    return static_cast<std::size_t>(w.size()) + static_cast<std::size_t>(b.size());
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
  template <class F>
  void for_each_param(const std::string& prefix, F&& f) const {
    f(prefix + ".w", w, gw);
    f(prefix + ".b", b, gb);
  }
};

// Global average pooling over each channel plane.
Vec global_average(const Tensor& x);
Tensor global_average_backward(int channels, int height, int width, const Vec& dv);

// Nearest-neighbor 2x upsampling.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

// Channel concatenation of equally sized planes.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
std::vector<Tensor> split_channels(const Tensor& d, const std::vector<int>& channel_counts);

}  // namespace frontal::nn
