#pragma once

#include "frontal/common.hpp"
#include "frontal/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace frontal {

// Output of a feature extractor: phi_f is a flat descriptor vector, phi_p a
// spatial feature map.
struct IdentityFeatures {
  Vec phi_f;
  Tensor phi_p;
};

// Frozen, deterministic feature extractor. Parameters are immutable:
// the interface exposes no mutation, and trainers must leave implementations
// bit-identical (checked via param_digest).
class IdentityExtractor {
public:
  // Opaque per-call forward record enabling input gradients.
  struct Trace {
    virtual ~Trace() = default;
  };

  virtual ~IdentityExtractor() = default;

  virtual IdentityFeatures extract(const Tensor& image) const = 0;
  virtual IdentityFeatures extract_traced(const Tensor& image,
                                          std::unique_ptr<Trace>& trace) const = 0;
  // d(loss)/d(image) given upstream gradients w.r.t. phi_f and phi_p of the
  // traced call.
  virtual Tensor input_grad(const Trace& trace, const Vec& d_phi_f,
                            const Tensor& d_phi_p) const = 0;

  virtual std::string id() const = 0;
  virtual int feature_dim() const = 0;
  virtual std::uint64_t param_digest() const = 0;
};

// Trivial extractor: phi_p = the image itself, phi_f = the global mean over
// all channels and pixels (a 1-vector). Parameter-free; used by fixtures and
// as a smooth reference in gradient checks.
class PixelIdentityExtractor : public IdentityExtractor {
public:
  IdentityFeatures extract(const Tensor& image) const override;
  IdentityFeatures extract_traced(const Tensor& image,
                                  std::unique_ptr<Trace>& trace) const override;
  Tensor input_grad(const Trace& trace, const Vec& d_phi_f,
                    const Tensor& d_phi_p) const override;
  std::string id() const override { return "pixel-identity-v1"; }
  int feature_dim() const override { return 1; }
  std::uint64_t param_digest() const override { return fnv1a64(id()); }
};

// Seeded frozen convolutional extractor (smooth tanh encoder; phi_p = last
// feature map, phi_f = its per-channel global average). Declared in
// networks.hpp as ConvIdentityExtractor; this factory returns it.
std::unique_ptr<IdentityExtractor> make_toy_identity_extractor(std::uint64_t seed);

// Parses an extractor id of the form "pixel", "toy" or "toy:<seed>".
std::unique_ptr<IdentityExtractor> make_extractor(const std::string& id);

}  // namespace frontal
