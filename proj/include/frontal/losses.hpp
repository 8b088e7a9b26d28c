#pragma once

#include "frontal/common.hpp"
#include "frontal/identity.hpp"
#include "frontal/tensor.hpp"

#include <vector>

namespace frontal {

// Trade-off weights of the total generator objective.
struct LossWeights {
  Scalar lambda1 = 20.0;    // pixel
  Scalar lambda2 = 1.0;     // global adversarial
  Scalar lambda3 = 1.0;     // local adversarial
  Scalar lambda4 = 0.08;    // identity
  Scalar lambda5 = 1e-4;    // total variation
};

struct LossBreakdown {
  Scalar l_pixel = 0.0;
  Scalar l_adv1 = 0.0;
  Scalar l_adv2 = 0.0;
  Scalar l_id = 0.0;
  Scalar l_tv = 0.0;
  Scalar total = 0.0;
};

// Probabilities entering the adversarial losses are clamped to
// [kProbEps, 1 - kProbEps] so every logarithm is finite.
inline constexpr Scalar kProbEps = 1e-7;

Scalar clamp_prob(Scalar p);

// Three-scale pyramid: identity, 2x2 average-pool stride 2, 4x4 average-pool
// stride 4. Output dims are floored at 1; partial boundary windows average
// over the pixels they actually cover.
std::vector<Tensor> pyramid(const Tensor& image);

// Mean absolute difference per scale (normalized by W_i * H_i * C), averaged
// over the three scales with equal 1/3 weight.
Scalar pixel_loss(const Tensor& y_hat, const Tensor& y);
Tensor pixel_loss_grad(const Tensor& y_hat, const Tensor& y);

// Anisotropic, unnormalized total variation: sum over channels of absolute
// horizontal and vertical neighbor differences. Requires W, H >= 2.
Scalar tv_loss(const Tensor& y_hat);
Tensor tv_loss_grad(const Tensor& y_hat);

// Squared L2 distance of phi_f plus squared Frobenius distance of phi_p
// between the real and synthesized image, under a frozen extractor.
Scalar identity_loss(const Tensor& y_hat, const Tensor& y, const IdentityExtractor& extractor);
Tensor identity_loss_grad(const Tensor& y_hat, const Tensor& y,
                          const IdentityExtractor& extractor);

enum class AdvSide { discriminator, generator };

// discriminator: -log d_real - log(1 - d_fake); generator (non-saturating):
// -log d_fake. d_real is ignored on the generator side.
Scalar adversarial_loss(Scalar d_real, Scalar d_fake, AdvSide side);

// Derivatives of the adversarial losses w.r.t. the raw probabilities; zero in
// the clamped region.
Scalar generator_adv_dfake(Scalar d_fake);
Scalar discriminator_adv_dreal(Scalar d_real);
Scalar discriminator_adv_dfake(Scalar d_fake);

// Weighted total with a fixed summation order (pixel, adv1, adv2, id, tv).
// Both the trainer's logging and any after-the-fact verification must go
// through this one function so the result is reproducible bit-for-bit.
LossBreakdown total_generator_loss(Scalar l_pixel, Scalar l_adv1, Scalar l_adv2, Scalar l_id,
                                   Scalar l_tv, const LossWeights& weights);

}  // namespace frontal
