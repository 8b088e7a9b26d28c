#include "frontal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace frontal {

namespace {

void require_same_dims(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    fail_validation(where, "image dims mismatch: " + std::to_string(a.channels) + "x" +
                               std::to_string(a.height) + "x" + std::to_string(a.width) +
                               " vs " + std::to_string(b.channels) + "x" +
                               std::to_string(b.height) + "x" + std::to_string(b.width));
}

Scalar sign_of(Scalar v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor average_pool(const Tensor& t, int factor) {
  const int oh = std::max(1, t.height / factor);
  const int ow = std::max(1, t.width / factor);
  Tensor out(t.channels, oh, ow);
  for (int c = 0; c < t.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy * factor;
      const int y1 = std::min(y0 + factor, t.height);
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox * factor;
        const int x1 = std::min(x0 + factor, t.width);
        Scalar sum = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) sum += t(c, y, x);
        out(c, oy, ox) = sum / (static_cast<Scalar>(y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

}  // namespace

Scalar clamp_prob(Scalar p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }

std::vector<Tensor> pyramid(const Tensor& image) {
  if (image.height < 1 || image.width < 1)
    fail_validation("losses", "pyramid needs a non-empty image");
  std::vector<Tensor> scales;
  scales.push_back(image);
  scales.push_back(average_pool(image, 2));
  scales.push_back(average_pool(image, 4));
  return scales;
}

Scalar pixel_loss(const Tensor& y_hat, const Tensor& y) {
  require_same_dims(y_hat, y, "losses");
  const std::vector<Tensor> ph = pyramid(y_hat);
  const std::vector<Tensor> py = pyramid(y);
  Scalar loss = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Scalar abs_sum = (ph[i].data - py[i].data).abs().sum();
    loss += abs_sum / static_cast<Scalar>(ph[i].size()) / 3.0;
  }
  return loss;
}

Tensor pixel_loss_grad(const Tensor& y_hat, const Tensor& y) {
  require_same_dims(y_hat, y, "losses");
  Tensor grad(y_hat.channels, y_hat.height, y_hat.width);
  const int factors[3] = {1, 2, 4};
  for (int fi = 0; fi < 3; ++fi) {
    const int f = factors[fi];
    const Tensor ph = average_pool(y_hat, f);
    const Tensor py = average_pool(y, f);
    const Scalar norm = 1.0 / (3.0 * static_cast<Scalar>(ph.size()));
    for (int c = 0; c < y_hat.channels; ++c) {
      for (int oy = 0; oy < ph.height; ++oy) {
        const int y0 = oy * f;
        const int y1 = std::min(y0 + f, y_hat.height);
        for (int ox = 0; ox < ph.width; ++ox) {
          const int x0 = ox * f;
          const int x1 = std::min(x0 + f, y_hat.width);
          const Scalar s = sign_of(ph(c, oy, ox) - py(c, oy, ox));
          if (s == 0.0) continue;
          const Scalar g = s * norm / (static_cast<Scalar>(y1 - y0) * (x1 - x0));
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) grad(c, yy, xx) += g;
        }
      }
    }
  }
  return grad;
}

Scalar tv_loss(const Tensor& y_hat) {
  if (y_hat.height < 2 || y_hat.width < 2)
    fail_validation("losses", "tv_loss needs height and width >= 2, got " +
                                  std::to_string(y_hat.width) + "x" +
                                  std::to_string(y_hat.height));
  Scalar loss = 0.0;
  for (int c = 0; c < y_hat.channels; ++c) {
    for (int y = 0; y < y_hat.height; ++y)
      for (int x = 0; x + 1 < y_hat.width; ++x)
        loss += std::abs(y_hat(c, y, x + 1) - y_hat(c, y, x));
    for (int y = 0; y + 1 < y_hat.height; ++y)
      for (int x = 0; x < y_hat.width; ++x)
        loss += std::abs(y_hat(c, y + 1, x) - y_hat(c, y, x));
  }
  return loss;
}

Tensor tv_loss_grad(const Tensor& y_hat) {
  if (y_hat.height < 2 || y_hat.width < 2)
    fail_validation("losses", "tv_loss needs height and width >= 2");
  Tensor grad(y_hat.channels, y_hat.height, y_hat.width);
  for (int c = 0; c < y_hat.channels; ++c) {
    for (int y = 0; y < y_hat.height; ++y)
      for (int x = 0; x + 1 < y_hat.width; ++x) {
        const Scalar s = sign_of(y_hat(c, y, x + 1) - y_hat(c, y, x));
        grad(c, y, x + 1) += s;
        grad(c, y, x) -= s;
      }
    for (int y = 0; y + 1 < y_hat.height; ++y)
      for (int x = 0; x < y_hat.width; ++x) {
        const Scalar s = sign_of(y_hat(c, y + 1, x) - y_hat(c, y, x));
        grad(c, y + 1, x) += s;
        grad(c, y, x) -= s;
      }
  }
  return grad;
}

namespace {

void require_same_features(const IdentityFeatures& a, const IdentityFeatures& b) {
  if (a.phi_f.size() != b.phi_f.size() || !a.phi_p.same_shape(b.phi_p))
    fail_validation("losses", "extractor output shapes differ between the two calls");
}

}  // namespace

Scalar identity_loss(const Tensor& y_hat, const Tensor& y, const IdentityExtractor& extractor) {
  const IdentityFeatures fh = extractor.extract(y_hat);
  const IdentityFeatures fy = extractor.extract(y);
  require_same_features(fh, fy);
  const Scalar df = (fy.phi_f - fh.phi_f).squaredNorm();
  const Scalar dp = (fy.phi_p.data - fh.phi_p.data).square().sum();
  return df + dp;
}

Tensor identity_loss_grad(const Tensor& y_hat, const Tensor& y,
                          const IdentityExtractor& extractor) {
  std::unique_ptr<IdentityExtractor::Trace> trace;
  const IdentityFeatures fh = extractor.extract_traced(y_hat, trace);
  const IdentityFeatures fy = extractor.extract(y);
  require_same_features(fh, fy);
  const Vec d_phi_f = 2.0 * (fh.phi_f - fy.phi_f);
  Tensor d_phi_p = fh.phi_p;
  d_phi_p.data = 2.0 * (fh.phi_p.data - fy.phi_p.data);
  return extractor.input_grad(*trace, d_phi_f, d_phi_p);
}

Scalar adversarial_loss(Scalar d_real, Scalar d_fake, AdvSide side) {
  const Scalar pf = clamp_prob(d_fake);
  if (side == AdvSide::generator) return -std::log(pf);
  const Scalar pr = clamp_prob(d_real);
  return -std::log(pr) - std::log(1.0 - pf);
}

Scalar generator_adv_dfake(Scalar d_fake) {
  if (d_fake <= kProbEps || d_fake >= 1.0 - kProbEps) return 0.0;
  return -1.0 / d_fake;
}

Scalar discriminator_adv_dreal(Scalar d_real) {
  if (d_real <= kProbEps || d_real >= 1.0 - kProbEps) return 0.0;
  return -1.0 / d_real;
}

Scalar discriminator_adv_dfake(Scalar d_fake) {
  if (d_fake <= kProbEps || d_fake >= 1.0 - kProbEps) return 0.0;
  return 1.0 / (1.0 - d_fake);
}

LossBreakdown total_generator_loss(Scalar l_pixel, Scalar l_adv1, Scalar l_adv2, Scalar l_id,
                                   Scalar l_tv, const LossWeights& weights) {
  const struct {
    const char* name;
    Scalar value;
  } parts[] = {{"l_pixel", l_pixel}, {"l_adv1", l_adv1}, {"l_adv2", l_adv2},
               {"l_id", l_id},       {"l_tv", l_tv}};
  for (const auto& p : parts)
    if (!std::isfinite(p.value))
      fail_validation("losses", std::string("non-finite part ") + p.name);
  const Scalar ws[] = {weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4,
                       weights.lambda5};
  for (int i = 0; i < 5; ++i)
    if (!(ws[i] >= 0.0) || !std::isfinite(ws[i]))
      fail_validation("losses", "weight lambda" + std::to_string(i + 1) + " must be >= 0");

  LossBreakdown b;
  b.l_pixel = l_pixel;
  b.l_adv1 = l_adv1;
  b.l_adv2 = l_adv2;
  b.l_id = l_id;
  b.l_tv = l_tv;
  // Fixed summation order; do not reorder or refactor into a loop the
  // compiler could re-associate differently between call sites.
  Scalar total = weights.lambda1 * l_pixel;
  total += weights.lambda2 * l_adv1;
  total += weights.lambda3 * l_adv2;
  total += weights.lambda4 * l_id;
  total += weights.lambda5 * l_tv;
  b.total = total;
  return b;
}

}  // namespace frontal
