#include "frontal/selfcheck.hpp"

#include "frontal/checkpoint.hpp"
#include "frontal/dataset.hpp"
#include "frontal/evaluator.hpp"
#include "frontal/image_io.hpp"
#include "frontal/losses.hpp"
#include "frontal/networks.hpp"
#include "frontal/oracle.hpp"
#include "frontal/parsing.hpp"
#include "frontal/toygen.hpp"
#include "frontal/trainer.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace frontal {
namespace {

// ---------------------------------------------------------------------------
// Tolerances of the verification suite. These are load-bearing: the gradient
// and oracle acceptance thresholds live here and nowhere else.
// ---------------------------------------------------------------------------
constexpr Scalar kOracleRelTol = 1e-9;    // production loss vs reference loops
constexpr Scalar kFdStep = 1e-5;          // central-difference step
constexpr Scalar kFdRelTol = 1e-3;        // analytic vs finite difference
// Relative-error denominator floor, scaled by the loss magnitude: the noise
// of a central difference is eps * |loss| / h, so the floor must grow with
// the loss or zero-gradient coordinates drown in cancellation noise.
constexpr Scalar kFdScaleFloor = 1e-6;
// A coordinate is excluded when the h and 2h difference quotients disagree,
// i.e. a non-smooth point (|.| or leaky-relu kink) sits inside the stencil.
constexpr Scalar kFdConsistencyTol = 2e-2;
constexpr Scalar kFdConsistencyFloor = 1e-3;
// Absolute-difference losses are checked only at coordinates whose
// participating differences clear this band; a difference inside it puts a
// kink within reach of the stencil, where two-sided quotients are
// meaningless no matter how small the step.
constexpr Scalar kFdKinkBand = 1e-4;

CheckResult make_result(const std::string& name, bool pass, const std::string& detail) {
  return CheckResult{name, pass, detail};
}

Tensor random_tensor(int c, int h, int w, Rng& rng, Scalar lo = -1.0, Scalar hi = 1.0) {
  Tensor t(c, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

Scalar rel_diff(Scalar a, Scalar b) {
  const Scalar scale = std::max({std::abs(a), std::abs(b), Scalar(1e-30)});
  return std::abs(a - b) / scale;
}

struct FdOutcome {
  Scalar max_rel = 0.0;
  int tested = 0;
  int excluded = 0;
  std::string detail() const {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max rel err %.3e over %d coords (%d excluded at kinks)",
                  max_rel, tested, excluded);
    return buf;
  }
  bool pass(int sampled) const {
    return max_rel < kFdRelTol && tested >= sampled / 2 && tested > 0;
  }
};

// Central finite differences at one scalar slot, with a Richardson-style
// consistency probe for kinks.
template <class LossFn>
void fd_at_slot(Scalar* slot, Scalar analytic, LossFn& loss, Scalar scale_floor,
                FdOutcome& outcome) {
  const Scalar orig = *slot;
  const auto probe = [&](Scalar h) {
    *slot = orig + h;
    const Scalar up = loss();
    *slot = orig - h;
    const Scalar down = loss();
    *slot = orig;
    return (up - down) / (2.0 * h);
  };
  const Scalar fd_h = probe(kFdStep);
  const Scalar fd_2h = probe(2.0 * kFdStep);
  const Scalar consistency_scale =
      std::max({std::abs(fd_h), std::abs(fd_2h), kFdConsistencyFloor});
  if (std::abs(fd_h - fd_2h) > kFdConsistencyTol * consistency_scale) {
    ++outcome.excluded;
    return;
  }
  const Scalar scale = std::max({std::abs(analytic), std::abs(fd_h), scale_floor});
  outcome.max_rel = std::max(outcome.max_rel, std::abs(analytic - fd_h) / scale);
  ++outcome.tested;
}

Scalar fd_scale_floor(Scalar loss_at_point) {
  return kFdScaleFloor * std::max(Scalar(1.0), std::abs(loss_at_point));
}

// FD over sampled coordinates of a tensor-valued input. `near_kink`, when
// given, names coordinates whose loss contribution is non-smooth within the
// stencil; those are skipped and counted as excluded.
template <class LossFn>
FdOutcome fd_tensor(Tensor& x, const Tensor& analytic, LossFn loss, int samples,
                    std::uint64_t seed,
                    const std::function<bool(Eigen::Index)>& near_kink = nullptr) {
  Rng rng(seed);
  const Scalar floor = fd_scale_floor(loss());
  FdOutcome outcome;
  for (int s = 0; s < samples; ++s) {
    const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(x.data.size())));
    if (near_kink && near_kink(i)) {
      ++outcome.excluded;
      continue;
    }
    fd_at_slot(&x.data[i], analytic.data[i], loss, floor, outcome);
  }
  return outcome;
}

// FD over sampled parameter coordinates of a model. The analytic gradients
// must already be accumulated; loss() must re-run the forward pass against
// the current parameter values without touching gradient buffers.
template <class Model, class LossFn>
FdOutcome fd_params(Model& model, LossFn loss, int samples, std::uint64_t seed) {
  struct Ref {
    Scalar* p;
    const Scalar* g;
    Eigen::Index n;
  };
  std::vector<Ref> refs;
  Eigen::Index total = 0;
  model.for_each_param("", [&](const std::string&, auto& p, auto& g) {
    refs.push_back({p.data(), g.data(), p.size()});
    total += p.size();
  });
  Rng rng(seed);
  const Scalar floor = fd_scale_floor(loss());
  FdOutcome outcome;
  for (int s = 0; s < samples; ++s) {
    auto k = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(total)));
    std::size_t r = 0;
    while (k >= refs[r].n) {
      k -= refs[r].n;
      ++r;
    }
    fd_at_slot(refs[r].p + k, refs[r].g[k], loss, floor, outcome);
  }
  return outcome;
}

// Offsets every conv/linear bias to a generic nonzero value. Fresh models
// have all-zero biases while attention-masked views have exactly-zero
// regions, which parks entire pre-activation planes exactly on the
// leaky-relu kink; a bias probe then sweeps the whole plane across the kink
// and the two-sided quotient measures the averaged slope instead of the
// one-sided derivative, at every step size. Gradient checks belong at a
// point where the loss is differentiable.
template <class Model>
void offset_biases(Model& model, std::uint64_t seed) {
  Rng rng(seed);
  model.for_each_param("", [&](const std::string& name, auto& p, auto&) {
    if (name.size() < 2 || name.compare(name.size() - 2, 2, ".b") != 0) return;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const Scalar mag = rng.uniform(0.02, 0.08);
      p.data()[i] += rng.uniform(-1.0, 1.0) < 0.0 ? -mag : mag;
    }
  });
}

MaskTriple test_masks(int size, std::uint64_t seed) {
  Rng rng(seed);
  Landmarks5 marks = canonical_template(size);
  for (int i = 0; i < 5; ++i) {
    marks(i, 0) += rng.uniform(-1.0, 1.0);
    marks(i, 1) += rng.uniform(-1.0, 1.0);
  }
  return landmark_stand_in_masks(marks, size, size);
}

std::string temp_dir(const char* tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("frontal-selfcheck-" + std::string(tag) + "-" +
                    std::to_string(static_cast<unsigned long>(::getpid())));
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss oracle suite
// ---------------------------------------------------------------------------

std::vector<CheckResult> run_loss_oracle_checks() {
  std::vector<CheckResult> results;

  {
    // Closed-form fixture: target [[0,1],[2,3]] vs all-zero output. Each
    // pyramid scale has mean absolute difference 1.5, so the loss is 1.5.
    Tensor y(1, 2, 2);
    y(0, 0, 0) = 0.0;
    y(0, 0, 1) = 1.0;
    y(0, 1, 0) = 2.0;
    y(0, 1, 1) = 3.0;
    const Tensor zero = Tensor::zeros(1, 2, 2);
    const Scalar got = pixel_loss(zero, y);
    results.push_back(make_result("pixel-loss-fixture", rel_diff(got, 1.5) < 1e-12,
                                  "expected 1.5, got " + std::to_string(got)));

    const std::vector<Tensor> pyr = pyramid(y);
    const bool pyr_ok = pyr.size() == 3 && pyr[1].height == 1 && pyr[1].width == 1 &&
                        pyr[2].height == 1 && pyr[2].width == 1 &&
                        rel_diff(pyr[1](0, 0, 0), 1.5) < 1e-12 &&
                        rel_diff(pyr[2](0, 0, 0), 1.5) < 1e-12;
    results.push_back(make_result("pyramid-fixture", pyr_ok,
                                  "2x2 input pools to single cells holding the mean 1.5"));

    const Scalar tv = tv_loss(y);
    results.push_back(make_result("tv-loss-fixture", tv == 6.0,
                                  "expected 6, got " + std::to_string(tv)));
  }

  {
    // Identity fixture with the pixel extractor: y = 0, y_hat = 1 on 2x2x1.
    // phi_f difference is 1 (squared: 1); phi_p differs by 1 at 4 cells
    // (squared Frobenius: 4); total 5.
    const Tensor y = Tensor::zeros(1, 2, 2);
    const Tensor yh = Tensor::constant(1, 2, 2, 1.0);
    PixelIdentityExtractor extractor;
    const Scalar got = identity_loss(yh, y, extractor);
    results.push_back(make_result("identity-loss-fixture", rel_diff(got, 5.0) < 1e-12,
                                  "expected 5, got " + std::to_string(got)));
  }

  {
    const Scalar disc = adversarial_loss(0.5, 0.5, AdvSide::discriminator);
    const Scalar gen = adversarial_loss(0.5, 0.5, AdvSide::generator);
    const bool ok = rel_diff(disc, 2.0 * std::log(2.0)) < 1e-12 &&
                    rel_diff(gen, std::log(2.0)) < 1e-12;
    results.push_back(make_result("adversarial-fixture", ok,
                                  "d_real = d_fake = 0.5 gives 2 ln 2 and ln 2"));
  }

  {
    const LossWeights w;
    const LossBreakdown b = total_generator_loss(1.0, 1.0, 1.0, 1.0, 1.0, w);
    results.push_back(make_result("weighted-total-fixture",
                                  std::abs(b.total - 22.0801) < 1e-9,
                                  "unit parts with default weights total 22.0801, got " +
                                      std::to_string(b.total)));
  }

  {
    Rng rng(20240817);
    Scalar worst_pixel = 0.0, worst_tv = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor yh = random_tensor(3, 8, 8, rng);
      const Tensor y = random_tensor(3, 8, 8, rng);
      worst_pixel = std::max(worst_pixel, rel_diff(pixel_loss(yh, y),
                                                   oracle::pixel_loss_ref(yh, y)));
      worst_tv = std::max(worst_tv, rel_diff(tv_loss(yh), oracle::tv_loss_ref(yh)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max rel diff %.3e over 100 random 8x8x3 pairs", worst_pixel);
    results.push_back(make_result("pixel-loss-vs-reference", worst_pixel < kOracleRelTol, buf));
    std::snprintf(buf, sizeof(buf), "max rel diff %.3e over 100 random 8x8x3 images", worst_tv);
    results.push_back(make_result("tv-loss-vs-reference", worst_tv < kOracleRelTol, buf));
  }

  return results;
}

// ---------------------------------------------------------------------------
// Gradient suite
// ---------------------------------------------------------------------------

std::vector<CheckResult> run_gradient_checks() {
  std::vector<CheckResult> results;
  constexpr int kSamples = 48;

  {
    Rng rng(101);
    Tensor yh = random_tensor(3, 8, 8, rng);
    const Tensor y = random_tensor(3, 8, 8, rng);
    const Tensor grad = pixel_loss_grad(yh, y);
    auto loss = [&]() { return pixel_loss(yh, y); };
    // A coordinate is kink-adjacent when any pooled cell it feeds has a
    // near-zero mean difference at some pyramid scale.
    const std::vector<Tensor> pyr_yh = pyramid(yh);
    const std::vector<Tensor> pyr_y = pyramid(y);
    auto near_kink = [&](Eigen::Index i) {
      const int w = yh.width;
      const int c = static_cast<int>(i) / (yh.height * w);
      const int yy = (static_cast<int>(i) / w) % yh.height;
      const int xx = static_cast<int>(i) % w;
      for (std::size_t s = 0; s < pyr_yh.size(); ++s) {
        const int f = 1 << s;
        const Scalar diff = pyr_yh[s](c, yy / f, xx / f) - pyr_y[s](c, yy / f, xx / f);
        if (std::abs(diff) < kFdKinkBand) return true;
      }
      return false;
    };
    const FdOutcome o = fd_tensor(yh, grad, loss, kSamples, 102, near_kink);
    results.push_back(make_result("pixel-grad-fd", o.pass(kSamples), o.detail()));
  }

  {
    Rng rng(103);
    Tensor yh = random_tensor(3, 8, 8, rng);
    const Tensor grad = tv_loss_grad(yh);
    auto loss = [&]() { return tv_loss(yh); };
    // A coordinate is kink-adjacent when any of its neighbor differences is
    // near zero.
    auto near_kink = [&](Eigen::Index i) {
      const int w = yh.width, h = yh.height;
      const int c = static_cast<int>(i) / (h * w);
      const int yy = (static_cast<int>(i) / w) % h;
      const int xx = static_cast<int>(i) % w;
      const Scalar v = yh(c, yy, xx);
      const auto close = [&](int ny, int nx) {
        return ny >= 0 && ny < h && nx >= 0 && nx < w &&
               std::abs(yh(c, ny, nx) - v) < kFdKinkBand;
      };
      return close(yy, xx - 1) || close(yy, xx + 1) || close(yy - 1, xx) || close(yy + 1, xx);
    };
    const FdOutcome o = fd_tensor(yh, grad, loss, kSamples, 104, near_kink);
    results.push_back(make_result("tv-grad-fd", o.pass(kSamples), o.detail()));
  }

  {
    Rng rng(105);
    Tensor yh = random_tensor(3, 16, 16, rng, -0.9, 0.9);
    const Tensor y = random_tensor(3, 16, 16, rng, -0.9, 0.9);
    auto extractor = make_toy_identity_extractor(5);
    const Tensor grad = identity_loss_grad(yh, y, *extractor);
    auto loss = [&]() { return identity_loss(yh, y, *extractor); };
    const FdOutcome o = fd_tensor(yh, grad, loss, kSamples, 106);
    results.push_back(make_result("identity-grad-fd", o.pass(kSamples), o.detail()));
  }

  // Tiny end-to-end rig shared by the network-level checks.
  Generator gen = Generator::init(GeneratorArch::custom(32, 4, 1), 11);
  GlobalDiscriminator d1 = GlobalDiscriminator::init(GlobalDiscArch::custom(32, 4), 12);
  LocalDiscriminator d2 = LocalDiscriminator::init(LocalDiscArch::custom(32, 4), 13);
  offset_biases(d1, 115);
  offset_biases(d2, 116);
  auto extractor = make_toy_identity_extractor(14);
  Rng rng(107);
  TrainSample sample;
  sample.x = random_tensor(3, 32, 32, rng, -0.9, 0.9);
  sample.y = random_tensor(3, 32, 32, rng, -0.9, 0.9);
  sample.masks = test_masks(32, 108);

  {
    // Full composite objective through the production gradient path.
    TrainConfig config;
    config.image_size = 32;
    config.batch_size = 1;
    Trainer trainer(gen, d1, d2, *extractor, config);
    gen.zero_grad();
    trainer.accumulate_generator_sample(sample, 1.0);
    const LossWeights w = config.weights;
    auto loss = [&]() {
      const Tensor yh = gen.forward(sample.x);
      const Scalar l_pixel = pixel_loss(yh, sample.y);
      const Scalar l_tv = tv_loss(yh);
      const Scalar l_id = identity_loss(yh, sample.y, *extractor);
      const Scalar p1 = d1.forward(yh);
      const Scalar p2 = d2.forward(apply_attention(yh, sample.masks));
      const Scalar l_adv1 = adversarial_loss(0.0, p1, AdvSide::generator);
      const Scalar l_adv2 = adversarial_loss(0.0, p2, AdvSide::generator);
      return total_generator_loss(l_pixel, l_adv1, l_adv2, l_id, l_tv, w).total;
    };
    const FdOutcome o = fd_params(gen, loss, kSamples, 109);
    results.push_back(make_result("generator-composite-fd", o.pass(kSamples), o.detail()));
  }

  {
    const Tensor y_fake = gen.forward(sample.x);
    d1.zero_grad();
    GlobalDiscriminator::Trace tr_real, tr_fake;
    const Scalar p_real = d1.forward(sample.y, tr_real);
    const Scalar p_fake = d1.forward(y_fake, tr_fake);
    d1.backward(tr_real, discriminator_adv_dreal(p_real));
    d1.backward(tr_fake, discriminator_adv_dfake(p_fake));
    auto loss = [&]() {
      return adversarial_loss(d1.forward(sample.y), d1.forward(y_fake), AdvSide::discriminator);
    };
    const FdOutcome o = fd_params(d1, loss, kSamples, 110);
    results.push_back(make_result("global-disc-param-fd", o.pass(kSamples), o.detail()));
  }

  {
    const Tensor y_fake = gen.forward(sample.x);
    const LocalViews real_views = apply_attention(sample.y, sample.masks);
    const LocalViews fake_views = apply_attention(y_fake, sample.masks);
    d2.zero_grad();
    LocalDiscriminator::Trace tr_real, tr_fake;
    const Scalar p_real = d2.forward(real_views, tr_real);
    const Scalar p_fake = d2.forward(fake_views, tr_fake);
    d2.backward(tr_real, discriminator_adv_dreal(p_real));
    d2.backward(tr_fake, discriminator_adv_dfake(p_fake));
    auto loss = [&]() {
      return adversarial_loss(d2.forward(real_views), d2.forward(fake_views),
                              AdvSide::discriminator);
    };
    const FdOutcome o = fd_params(d2, loss, kSamples, 111);
    results.push_back(make_result("local-disc-param-fd", o.pass(kSamples), o.detail()));
  }

  return results;
}

// ---------------------------------------------------------------------------
// Property suite
// ---------------------------------------------------------------------------

std::vector<CheckResult> run_property_checks() {
  std::vector<CheckResult> results;

  {
    Rng rng(301);
    const Tensor a = random_tensor(3, 12, 12, rng);
    const Tensor b = random_tensor(3, 12, 12, rng);
    const MaskTriple masks = test_masks(12, 302);
    Tensor mix(3, 12, 12);
    mix.data = 0.7 * a.data - 0.3 * b.data;
    const LocalViews va = apply_attention(a, masks);
    const LocalViews vb = apply_attention(b, masks);
    const LocalViews vm = apply_attention(mix, masks);
    const Scalar err =
        ((vm.y_hair.data - (0.7 * va.y_hair.data - 0.3 * vb.y_hair.data)).abs().maxCoeff() +
         (vm.y_skin.data - (0.7 * va.y_skin.data - 0.3 * vb.y_skin.data)).abs().maxCoeff() +
         (vm.y_face.data - (0.7 * va.y_face.data - 0.3 * vb.y_face.data)).abs().maxCoeff());
    results.push_back(make_result("attention-linearity", err < 1e-6,
                                  "max deviation " + std::to_string(err)));
  }

  {
    Rng rng(303);
    Tensor x = random_tensor(3, 9, 7, rng);
    const Scalar before = tv_loss(x);
    Tensor shifted = x;
    shifted.data += 0.37;
    const Scalar after = tv_loss(shifted);
    results.push_back(make_result("tv-shift-invariance", rel_diff(before, after) < 1e-12,
                                  "tv unchanged by constant shifts"));
    results.push_back(
        make_result("pixel-self-zero", pixel_loss(x, x) == 0.0, "pixel loss of x vs x is 0"));
  }

  {
    const bool clamp_ok = clamp_prob(0.0) == kProbEps && clamp_prob(1.0) == 1.0 - kProbEps &&
                          clamp_prob(0.25) == 0.25;
    const bool finite_ok = std::isfinite(adversarial_loss(0.0, 1.0, AdvSide::discriminator)) &&
                           std::isfinite(adversarial_loss(1.0, 0.0, AdvSide::discriminator)) &&
                           std::isfinite(adversarial_loss(0.0, 0.0, AdvSide::generator));
    results.push_back(make_result("probability-clamp", clamp_ok && finite_ok,
                                  "log terms stay finite at saturated probabilities"));
  }

  {
    // Alignment recovers a synthetic similarity transform: landmarks produced
    // by rotating/scaling/translating the template must map back onto the
    // template within half a pixel.
    Rng rng(304);
    bool ok = true;
    Scalar worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Scalar theta = rng.uniform(-0.5, 0.5);
      const Scalar scale = rng.uniform(0.7, 1.4);
      const Scalar tx = rng.uniform(10.0, 30.0), ty = rng.uniform(10.0, 30.0);
      const Landmarks5 base = canonical_template(128);
      Landmarks5 moved;
      for (int i = 0; i < 5; ++i) {
        const Scalar x = base(i, 0), y = base(i, 1);
        moved(i, 0) = scale * (std::cos(theta) * x - std::sin(theta) * y) + tx;
        moved(i, 1) = scale * (std::sin(theta) * x + std::cos(theta) * y) + ty;
      }
      const Eigen::Matrix<Scalar, 3, 3> T = fit_similarity(moved, base);
      for (int i = 0; i < 5; ++i) {
        const Scalar mx = T(0, 0) * moved(i, 0) + T(0, 1) * moved(i, 1) + T(0, 2);
        const Scalar my = T(1, 0) * moved(i, 0) + T(1, 1) * moved(i, 1) + T(1, 2);
        worst = std::max({worst, std::abs(mx - base(i, 0)), std::abs(my - base(i, 1))});
      }
      ok = ok && worst < 0.5;
    }
    results.push_back(make_result("alignment-recovers-similarity", ok,
                                  "worst landmark error " + std::to_string(worst) + " px"));
  }

  {
    // Translating the landmarks translates the masks (interior cells).
    const int size = 48;
    const int shift = 5;
    Landmarks5 base = canonical_template(128) * (48.0 / 128.0);
    Landmarks5 moved = base;
    moved.col(0).array() += static_cast<Scalar>(shift);
    const MaskTriple m0 = landmark_stand_in_masks(base, size, size);
    const MaskTriple m1 = landmark_stand_in_masks(moved, size, size);
    Scalar worst = 0.0;
    for (int y = 8; y < size - 8; ++y)
      for (int x = 8; x < size - 8 - shift; ++x) {
        worst = std::max(worst, std::abs(m1.m_skin(y, x + shift) - m0.m_skin(y, x)));
        worst = std::max(worst, std::abs(m1.m_face(y, x + shift) - m0.m_face(y, x)));
      }
    results.push_back(make_result("mask-translation-equivariance", worst < 1e-6,
                                  "max interior deviation " + std::to_string(worst)));
    const bool range_ok = m0.m_hair.minCoeff() >= 0.0 && m0.m_hair.maxCoeff() <= 1.0 &&
                          m0.m_skin.minCoeff() >= 0.0 && m0.m_skin.maxCoeff() <= 1.0 &&
                          m0.m_face.minCoeff() >= 0.0 && m0.m_face.maxCoeff() <= 1.0;
    results.push_back(make_result("mask-range", range_ok, "all mask values in [0, 1]"));
  }

  {
    // Identification agrees with the exhaustive reference scorer, is
    // invariant to per-row positive rescaling, and resolves exact ties to the
    // lowest subject id.
    Rng rng(305);
    const int n_probes = 24, n_gallery = 7, dim = 9;
    Mat probe_orig(n_probes, dim), probe_gen(n_probes, dim);
    Mat gallery_orig(n_gallery, dim), gallery_gen(n_gallery, dim);
    for (Eigen::Index i = 0; i < probe_orig.size(); ++i)
      probe_orig.data()[i] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < probe_gen.size(); ++i)
      probe_gen.data()[i] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < gallery_orig.size(); ++i)
      gallery_orig.data()[i] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < gallery_gen.size(); ++i)
      gallery_gen.data()[i] = rng.uniform(-1.0, 1.0);
    std::vector<int> gallery_ids = {12, 3, 44, 9, 27, 31, 5};

    EmbeddingSet po, pg, ga, gg;
    po.features = probe_orig;
    pg.features = probe_gen;
    ga.features = gallery_orig;
    ga.ids = gallery_ids;
    gg.features = gallery_gen;
    gg.ids = gallery_ids;
    for (int i = 0; i < n_probes; ++i) {
      po.ids.push_back(gallery_ids[static_cast<std::size_t>(i) % gallery_ids.size()]);
      po.bins.push_back(PoseBin{45.0, 0.0});
    }
    pg.ids = po.ids;

    const Rank1Result got = rank1(po, pg, ga, gg, FusionMode::fused);
    const std::vector<int> want =
        oracle::rank1_ref(probe_orig, probe_gen, gallery_orig, gallery_gen, gallery_ids);
    bool match = got.predicted == want;

    EmbeddingSet po2 = po, pg2 = pg, ga2 = ga, gg2 = gg;
    Rng srng(306);
    for (Eigen::Index r = 0; r < po2.features.rows(); ++r) {
      po2.features.row(r) *= srng.uniform(0.1, 5.0);
      pg2.features.row(r) *= srng.uniform(0.1, 5.0);
    }
    for (Eigen::Index r = 0; r < ga2.features.rows(); ++r) {
      ga2.features.row(r) *= srng.uniform(0.1, 5.0);
      gg2.features.row(r) *= srng.uniform(0.1, 5.0);
    }
    const Rank1Result scaled = rank1(po2, pg2, ga2, gg2, FusionMode::fused);
    const bool scale_ok = scaled.predicted == got.predicted &&
                          scaled.correct_count == got.correct_count;

    // Tie fixture: two gallery rows with identical features.
    EmbeddingSet tie_gallery;
    tie_gallery.features = Mat(2, dim);
    tie_gallery.features.row(0) = gallery_orig.row(0);
    tie_gallery.features.row(1) = gallery_orig.row(0);
    tie_gallery.ids = {8, 2};
    EmbeddingSet tie_probe;
    tie_probe.features = gallery_orig.row(0);
    tie_probe.ids = {8};
    tie_probe.bins = {PoseBin{30.0, 0.0}};
    const Rank1Result tie =
        rank1(tie_probe, tie_probe, tie_gallery, tie_gallery, FusionMode::fused);
    const bool tie_ok = tie.predicted[0] == 2;

    results.push_back(make_result("rank1-matches-reference", match,
                                  "predictions equal the exhaustive scorer's"));
    results.push_back(make_result("rank1-scale-invariance", scale_ok,
                                  "per-row positive rescaling changes nothing"));
    results.push_back(make_result("rank1-tie-lowest-id", tie_ok,
                                  "exact distance ties resolve to the lowest subject id"));
  }

  {
    // Protocol partition rules on a synthetic corpus.
    ToySpec spec = smoke_spec();
    spec.n_identities = 20;
    spec.attributes = {"neutral", "smile"};
    const std::vector<ImageRecord> records = make_records(spec);
    const ProtocolSplit split = build_protocol(records, 12, 42);
    bool ok = split.train_subjects.size() == 12 && split.test_subjects.size() == 8;
    for (int s : split.train_subjects)
      ok = ok && std::find(split.test_subjects.begin(), split.test_subjects.end(), s) ==
                     split.test_subjects.end();
    ok = ok && split.gallery.size() == 8;
    for (std::size_t idx : split.gallery) {
      const ImageRecord& r = records[idx];
      ok = ok && r.is_frontal() && r.attribute == "neutral" && r.illumination == "above";
    }
    for (std::size_t idx : split.probes) ok = ok && !records[idx].is_frontal();
    // 10 non-frontal poses x 2 attributes x 2 illuminations per test subject.
    ok = ok && split.probes.size() == 8ull * 10 * 2 * 2;
    ok = ok && split.train.size() == 12ull * 11 * 2 * 2;
    const ProtocolSplit again = build_protocol(records, 12, 42);
    ok = ok && again.train_subjects == split.train_subjects && again.probes == split.probes;
    const ProtocolSplit other = build_protocol(records, 12, 43);
    ok = ok && other.train_subjects != split.train_subjects;
    results.push_back(make_result("protocol-partition", ok,
                                  "disjoint subjects, exact counts, seeded determinism"));
  }

  {
    // Checkpoint round trip is bit-exact, including optimizer state.
    Generator gen = Generator::init(GeneratorArch::custom(32, 4, 1), 21);
    GlobalDiscriminator d1 = GlobalDiscriminator::init(GlobalDiscArch::custom(32, 4), 22);
    LocalDiscriminator d2 = LocalDiscriminator::init(LocalDiscArch::custom(32, 4), 23);
    auto extractor = make_toy_identity_extractor(24);
    TrainConfig config;
    config.image_size = 32;
    config.batch_size = 2;
    config.epochs = 1;
    Trainer trainer(gen, d1, d2, *extractor, config);
    Rng rng(307);
    std::vector<TrainSample> batch;
    for (int i = 0; i < 2; ++i) {
      TrainSample s;
      s.x = random_tensor(3, 32, 32, rng, -0.9, 0.9);
      s.y = random_tensor(3, 32, 32, rng, -0.9, 0.9);
      s.masks = test_masks(32, 308 + static_cast<std::uint64_t>(i));
      batch.push_back(std::move(s));
    }
    trainer.train_step(batch, 0, 1);

    const std::string dir = temp_dir("ckpt");
    const std::string file = dir + "/roundtrip.ckpt";
    const TrainState saved = trainer.snapshot(1, 0);
    save_checkpoint(file, saved);
    const TrainState loaded = load_checkpoint(file);
    bool ok = loaded.gen.param_digest() == gen.param_digest() &&
              loaded.d1.param_digest() == d1.param_digest() &&
              loaded.d2.param_digest() == d2.param_digest() &&
              loaded.meta.step == 1 && loaded.meta.epoch == 0 &&
              loaded.opt_g.step_count() == trainer.opt_g().step_count() &&
              loaded.opt_g.slots().size() == trainer.opt_g().slots().size();
    for (const auto& [name, slot] : trainer.opt_g().slots()) {
      const auto it = loaded.opt_g.slots().find(name);
      ok = ok && it != loaded.opt_g.slots().end() && it->second.m == slot.m &&
           it->second.v == slot.v;
    }
    std::filesystem::remove_all(dir);
    results.push_back(make_result("checkpoint-roundtrip", ok,
                                  "parameters and optimizer state reload bit-identically"));
  }

  {
    // Image IO: quantization error bounded by half a step; re-encoding the
    // decoded image is byte-stable.
    Rng rng(309);
    const Tensor x = random_tensor(3, 9, 11, rng);
    const std::string dir = temp_dir("img");
    const std::string f1 = dir + "/a.ppm", f2 = dir + "/b.ppm";
    write_image(f1, x);
    const Tensor back = read_image(f1);
    const Scalar err = (back.data - x.data).abs().maxCoeff();
    write_image(f2, back);
    std::ifstream a(f1, std::ios::binary), b(f2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    std::filesystem::remove_all(dir);
    const bool ok = err <= 1.0 / 255.0 + 1e-12 && sa.str() == sb.str();
    results.push_back(make_result("image-io-roundtrip", ok,
                                  "quantization within half a step; re-encode byte-stable"));
  }

  {
    // Step-trace JSON round trip preserves every float bit-for-bit.
    StepTrace t;
    t.step = 77;
    t.epoch = 3;
    t.lr = 2e-4 - 3 * 2e-5;
    t.gen = total_generator_loss(1.0 / 3.0, 0.6931471805599453, 0.1234567890123456789,
                                 1e-7, 22.0801, LossWeights{});
    t.d1_loss = 1.3862943611198906;
    t.d2_loss = 0.2876820724517809;
    t.d1_real_mean = 0.5000000000000001;
    t.d1_fake_mean = 0.4999999999999999;
    t.d1_mean = 0.5;
    t.d2_real_mean = 0.7;
    t.d2_fake_mean = 0.3;
    t.d2_mean = 0.5;
    t.mask_digest = hex64(0xdeadbeefcafef00dull);
    t.wall_ms = 12.75;
    const StepTrace r = step_trace_from_json(step_trace_to_json(t));
    const bool ok = r.step == t.step && r.epoch == t.epoch && r.lr == t.lr &&
                    r.gen.l_pixel == t.gen.l_pixel && r.gen.l_adv1 == t.gen.l_adv1 &&
                    r.gen.l_adv2 == t.gen.l_adv2 && r.gen.l_id == t.gen.l_id &&
                    r.gen.l_tv == t.gen.l_tv && r.gen.total == t.gen.total &&
                    r.d1_loss == t.d1_loss && r.d2_loss == t.d2_loss &&
                    r.mask_digest == t.mask_digest && r.wall_ms == t.wall_ms;
    results.push_back(make_result("trace-json-roundtrip", ok,
                                  "serialized floats reparse to identical bits"));
  }

  {
    auto extractor = make_toy_identity_extractor(31);
    const std::uint64_t before = extractor->param_digest();
    Rng rng(310);
    const Tensor yh = random_tensor(3, 16, 16, rng);
    const Tensor y = random_tensor(3, 16, 16, rng);
    identity_loss_grad(yh, y, *extractor);
    extractor->extract(y);
    results.push_back(make_result("extractor-frozen", extractor->param_digest() == before,
                                  "gradient passes leave extractor parameters untouched"));
  }

  {
    TrainConfig c;
    bool ok = lr_at_epoch(c, 0) == 2e-4;
    ok = ok && rel_diff(lr_at_epoch(c, 5), 1e-4) < 1e-12;
    ok = ok && lr_at_epoch(c, 10) <= 1e-15 && lr_at_epoch(c, 12) == 0.0;
    for (int e = 1; e < 15; ++e) ok = ok && lr_at_epoch(c, e) <= lr_at_epoch(c, e - 1);
    results.push_back(make_result("lr-schedule", ok,
                                  "linear decay from 2e-4, floored at zero by epoch 10"));
  }

  return results;
}

std::vector<CheckResult> run_all_checks() {
  std::vector<CheckResult> all = run_loss_oracle_checks();
  std::vector<CheckResult> grads = run_gradient_checks();
  std::vector<CheckResult> props = run_property_checks();
  all.insert(all.end(), grads.begin(), grads.end());
  all.insert(all.end(), props.begin(), props.end());
  return all;
}

int report_checks(const std::vector<CheckResult>& results, std::ostream& out) {
  int failures = 0;
  for (const CheckResult& r : results) {
    out << (r.pass ? "[ ok ] " : "[FAIL] ") << r.name << " - " << r.detail << "\n";
    if (!r.pass) ++failures;
  }
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
      << " (" << results.size() << " total)\n";
  return failures;
}

}  // namespace frontal
