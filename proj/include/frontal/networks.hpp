#pragma once

#include "frontal/identity.hpp"
#include "frontal/nn/layers.hpp"
#include "frontal/parsing.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace frontal {

// ---------------------------------------------------------------------------
// Generator: encoder-decoder with skip connections and a residual bottleneck.
// Channel widths double per downsampling stage, capped at 8x base.
// ---------------------------------------------------------------------------

struct GeneratorArch {
  int image_size = 128;
  int base_channels = 24;
  int res_blocks = 2;

  static GeneratorArch for_size(int image_size);
  static GeneratorArch custom(int image_size, int base_channels, int res_blocks);

  int n_down() const;              // downsampling stages (bottleneck at 8x8)
  int channels_at(int level) const;
  std::string id() const;
  void validate() const;
};

class Generator {
public:
  struct Res {
    nn::Conv c1, c2;
    nn::InstanceNorm n1, n2;
  };

  struct Trace {
    nn::ConvCtx stem_ctx;
    nn::InstanceNormCtx stem_nctx;
    Tensor stem_pre;
    std::vector<nn::ConvCtx> enc_ctx;
    std::vector<nn::InstanceNormCtx> enc_nctx;
    std::vector<Tensor> enc_pre;
    struct ResTrace {
      nn::ConvCtx c1, c2;
      nn::InstanceNormCtx n1, n2;
      Tensor pre1, sum_pre;
    };
    std::vector<ResTrace> res;
    std::vector<nn::ConvCtx> dec_ctx;
    std::vector<nn::InstanceNormCtx> dec_nctx;
    std::vector<Tensor> dec_pre;
    std::vector<nn::ConvCtx> merge_ctx;
    std::vector<nn::InstanceNormCtx> merge_nctx;
    std::vector<Tensor> merge_pre;
    nn::ConvCtx head_ctx;
    Tensor head_pre;
  };

  GeneratorArch arch;
  nn::Conv stem;
  nn::InstanceNorm stem_norm;
  std::vector<nn::Conv> enc;
  std::vector<nn::InstanceNorm> enc_norm;
  std::vector<Res> res;
  std::vector<nn::Conv> dec;
  std::vector<nn::InstanceNorm> dec_norm;
  std::vector<nn::Conv> merge;
  std::vector<nn::InstanceNorm> merge_norm;
  nn::Conv head;

  static Generator init(const GeneratorArch& arch, std::uint64_t seed);

  Tensor forward(const Tensor& x) const;             // inference
  Tensor forward(const Tensor& x, Trace& trace) const;
  // Accumulates parameter gradients, returns d(loss)/d(input).
  Tensor backward(const Trace& trace, const Tensor& d_out);

  void zero_grad();
  std::size_t param_count() const;
  std::uint64_t param_digest() const;

  template <class F>
  void for_each_param(const std::string& p, F&& f) {
    visit_layers(*this, p, f);
  }
  template <class F>
  void for_each_param(const std::string& p, F&& f) const {
    visit_layers(*this, p, f);
  }

private:
  Tensor run(const Tensor& x, Trace* trace) const;

  template <class Self, class F>
  static void visit_layers(Self& self, const std::string& p, F& f) {
    self.stem.for_each_param(p + "stem", f);
    self.stem_norm.for_each_param(p + "stem_norm", f);
    for (std::size_t i = 0; i < self.enc.size(); ++i) {
      const std::string tag = std::to_string(i);
      self.enc[i].for_each_param(p + "enc" + tag, f);
      self.enc_norm[i].for_each_param(p + "enc_norm" + tag, f);
    }
    for (std::size_t i = 0; i < self.res.size(); ++i) {
      const std::string tag = std::to_string(i);
      self.res[i].c1.for_each_param(p + "res" + tag + ".c1", f);
      self.res[i].n1.for_each_param(p + "res" + tag + ".n1", f);
      self.res[i].c2.for_each_param(p + "res" + tag + ".c2", f);
      self.res[i].n2.for_each_param(p + "res" + tag + ".n2", f);
    }
    for (std::size_t i = 0; i < self.dec.size(); ++i) {
      const std::string tag = std::to_string(i);
      self.dec[i].for_each_param(p + "dec" + tag, f);
      self.dec_norm[i].for_each_param(p + "dec_norm" + tag, f);
      self.merge[i].for_each_param(p + "merge" + tag, f);
      self.merge_norm[i].for_each_param(p + "merge_norm" + tag, f);
    }
    self.head.for_each_param(p + "head", f);
  }
};

// ---------------------------------------------------------------------------
// Global discriminator D1: strided conv stack -> global average pool ->
// linear -> sigmoid. No normalization layers.
// ---------------------------------------------------------------------------

struct GlobalDiscArch {
  int image_size = 128;
  int base_channels = 16;

  static GlobalDiscArch for_size(int image_size);
  static GlobalDiscArch custom(int image_size, int base_channels);

  int n_stages() const;  // downsamples to 4x4
  int channels_at(int stage) const;
  std::string id() const;
  void validate() const;
};

class GlobalDiscriminator {
public:
  struct Trace {
    std::vector<nn::ConvCtx> ctx;
    std::vector<Tensor> pre;
    Vec pooled;
    Scalar logit = 0.0;
    Scalar prob = 0.0;
    int last_h = 0, last_w = 0;
  };

  GlobalDiscArch arch;
  std::vector<nn::Conv> stages;
  nn::Linear out;

  static GlobalDiscriminator init(const GlobalDiscArch& arch, std::uint64_t seed);

  Scalar forward(const Tensor& image) const;
  Scalar forward(const Tensor& image, Trace& trace) const;
  // d_prob = d(loss)/d(output probability); accumulates gradients and returns
  // d(loss)/d(input image).
  Tensor backward(const Trace& trace, Scalar d_prob);

  void zero_grad();
  std::size_t param_count() const;
  std::uint64_t param_digest() const;

  template <class F>
  void for_each_param(const std::string& p, F&& f) {
    visit_layers(*this, p, f);
  }
  template <class F>
  void for_each_param(const std::string& p, F&& f) const {
    visit_layers(*this, p, f);
  }

private:
  Scalar run(const Tensor& image, Trace* trace) const;

  template <class Self, class F>
  static void visit_layers(Self& self, const std::string& p, F& f) {
    for (std::size_t i = 0; i < self.stages.size(); ++i)
      self.stages[i].for_each_param(p + "stage" + std::to_string(i), f);
    self.out.for_each_param(p + "out", f);
  }
};

// ---------------------------------------------------------------------------
// Local discriminator D2: three unshared 3-stage encoders (hair, skin, face
// views), channel-concatenated, fused by two conv stages, pooled to a scalar.
// ---------------------------------------------------------------------------

struct LocalDiscArch {
  int image_size = 128;
  int base_channels = 12;

  static LocalDiscArch for_size(int image_size);
  static LocalDiscArch custom(int image_size, int base_channels);

  std::string id() const;
  void validate() const;
};

class LocalDiscriminator {
public:
  struct Subnet {
    nn::Conv c0, c1, c2;
  };
  struct SubnetTrace {
    nn::ConvCtx ctx0, ctx1, ctx2;
    Tensor pre0, pre1, pre2;
  };
  struct Trace {
    SubnetTrace sub[3];
    nn::ConvCtx fuse0_ctx, fuse1_ctx;
    Tensor fuse0_pre, fuse1_pre;
    Vec pooled;
    Scalar logit = 0.0;
    Scalar prob = 0.0;
    int last_h = 0, last_w = 0;
  };

  LocalDiscArch arch;
  Subnet subnets[3];  // hair, skin, face
  nn::Conv fuse0, fuse1;
  nn::Linear out;

  static LocalDiscriminator init(const LocalDiscArch& arch, std::uint64_t seed);

  Scalar forward(const LocalViews& views) const;
  Scalar forward(const LocalViews& views, Trace& trace) const;
  // Returns d(loss)/d(view) for hair, skin, face.
  LocalViews backward(const Trace& trace, Scalar d_prob);

  void zero_grad();
  std::size_t param_count() const;
  std::uint64_t param_digest() const;

  template <class F>
  void for_each_param(const std::string& p, F&& f) {
    visit_layers(*this, p, f);
  }
  template <class F>
  void for_each_param(const std::string& p, F&& f) const {
    visit_layers(*this, p, f);
  }

private:
  Scalar run(const LocalViews& views, Trace* trace) const;

  template <class Self, class F>
  static void visit_layers(Self& self, const std::string& p, F& f) {
    static const char* names[3] = {"hair", "skin", "face"};
    for (int s = 0; s < 3; ++s) {
      self.subnets[s].c0.for_each_param(p + names[s] + ".c0", f);
      self.subnets[s].c1.for_each_param(p + names[s] + ".c1", f);
      self.subnets[s].c2.for_each_param(p + names[s] + ".c2", f);
    }
    self.fuse0.for_each_param(p + "fuse0", f);
    self.fuse1.for_each_param(p + "fuse1", f);
    self.out.for_each_param(p + "out", f);
  }
};

// ---------------------------------------------------------------------------
// Frozen convolutional identity extractor (smooth tanh encoder):
// phi_p = last feature map, phi_f = its per-channel global average.
// ---------------------------------------------------------------------------

class ConvIdentityExtractor : public IdentityExtractor {
public:
  explicit ConvIdentityExtractor(std::uint64_t seed);

  IdentityFeatures extract(const Tensor& image) const override;
  IdentityFeatures extract_traced(const Tensor& image,
                                  std::unique_ptr<IdentityExtractor::Trace>& trace) const override;
  Tensor input_grad(const IdentityExtractor::Trace& trace, const Vec& d_phi_f,
                    const Tensor& d_phi_p) const override;
  std::string id() const override;
  int feature_dim() const override { return 32; }
  std::uint64_t param_digest() const override;

private:
  struct TraceImpl;
  IdentityFeatures run(const Tensor& image, TraceImpl* trace) const;

  std::uint64_t seed_;
  nn::Conv c0_, c1_, c2_;
};

}  // namespace frontal
