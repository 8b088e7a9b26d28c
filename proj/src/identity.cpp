#include "frontal/identity.hpp"

#include "frontal/networks.hpp"

#include <string>

namespace frontal {

namespace {

struct PixelTrace : IdentityExtractor::Trace {
  int channels = 0, height = 0, width = 0;
};

}  // namespace

IdentityFeatures PixelIdentityExtractor::extract(const Tensor& image) const {
  IdentityFeatures f;
  f.phi_p = image;
  f.phi_f = Vec::Constant(1, image.data.mean());
  return f;
}

IdentityFeatures PixelIdentityExtractor::extract_traced(
    const Tensor& image, std::unique_ptr<IdentityExtractor::Trace>& trace) const {
  auto t = std::make_unique<PixelTrace>();
  t->channels = image.channels;
  t->height = image.height;
  t->width = image.width;
  trace = std::move(t);
  return extract(image);
}

Tensor PixelIdentityExtractor::input_grad(const IdentityExtractor::Trace& trace,
                                          const Vec& d_phi_f, const Tensor& d_phi_p) const {
  const auto* t = dynamic_cast<const PixelTrace*>(&trace);
  if (!t) fail_runtime("identity_extractor", "trace does not belong to this extractor");
  Tensor d = d_phi_p;
  d.data += d_phi_f(0) / static_cast<Scalar>(d.size());
  return d;
}

std::unique_ptr<IdentityExtractor> make_toy_identity_extractor(std::uint64_t seed) {
  return std::make_unique<ConvIdentityExtractor>(seed);
}

std::unique_ptr<IdentityExtractor> make_extractor(const std::string& id) {
  if (id == "pixel") return std::make_unique<PixelIdentityExtractor>();
  if (id == "toy") return make_toy_identity_extractor(0);
  if (id.rfind("toy:", 0) == 0) {
    const std::string tail = id.substr(4);
    if (tail.empty() || tail.find_first_not_of("0123456789") != std::string::npos)
      fail_usage("extractor id '" + id + "' malformed; expected toy:<non-negative seed>");
    return make_toy_identity_extractor(std::stoull(tail));
  }
  fail_usage("unknown extractor id '" + id + "'; supported: pixel, toy, toy:<seed>");
}

}  // namespace frontal
