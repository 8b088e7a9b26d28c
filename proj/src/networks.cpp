#include "frontal/networks.hpp"

#include <cmath>

namespace frontal {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2i(int v) {
  int n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

// ------------------------------ Generator ---------------------------------

GeneratorArch GeneratorArch::for_size(int image_size) {
  GeneratorArch a;
  a.image_size = image_size;
  a.base_channels = image_size <= 32 ? 12 : (image_size <= 64 ? 16 : 24);
  a.res_blocks = 2;
  a.validate();
  return a;
}

GeneratorArch GeneratorArch::custom(int image_size, int base_channels, int res_blocks) {
  GeneratorArch a;
  a.image_size = image_size;
  a.base_channels = base_channels;
  a.res_blocks = res_blocks;
  a.validate();
  return a;
}

void GeneratorArch::validate() const {
  if (!power_of_two(image_size) || image_size < 32 || image_size > 256)
    fail_validation("generator", "image size must be one of 32, 64, 128, 256; got " +
                                     std::to_string(image_size));
  if (base_channels < 2) fail_validation("generator", "base_channels must be >= 2");
  if (res_blocks < 0) fail_validation("generator", "res_blocks must be >= 0");
}

int GeneratorArch::n_down() const { return log2i(image_size / 8); }

int GeneratorArch::channels_at(int level) const {
  const long c = static_cast<long>(base_channels) << level;
  return static_cast<int>(std::min(c, static_cast<long>(base_channels) * 8));
}

std::string GeneratorArch::id() const {
  return "gen-ed-skip-v1/s" + std::to_string(image_size) + "/c" +
         std::to_string(base_channels) + "/r" + std::to_string(res_blocks);
}

Generator Generator::init(const GeneratorArch& arch, std::uint64_t seed) {
  arch.validate();
  Generator g;
  g.arch = arch;
  Rng rng(seed);
  const int nd = arch.n_down();

  g.stem.init(3, arch.channels_at(0), 3, 1, 1, rng);
  g.stem_norm.init(arch.channels_at(0));
  g.enc.resize(nd);
  g.enc_norm.resize(nd);
  for (int i = 0; i < nd; ++i) {
    g.enc[i].init(arch.channels_at(i), arch.channels_at(i + 1), 3, 2, 1, rng);
    g.enc_norm[i].init(arch.channels_at(i + 1));
  }
  const int cb = arch.channels_at(nd);
  g.res.resize(arch.res_blocks);
  for (auto& r : g.res) {
    r.c1.init(cb, cb, 3, 1, 1, rng);
    r.n1.init(cb);
    r.c2.init(cb, cb, 3, 1, 1, rng);
    r.n2.init(cb);
  }
  g.dec.resize(nd);
  g.dec_norm.resize(nd);
  g.merge.resize(nd);
  g.merge_norm.resize(nd);
  for (int j = 0; j < nd; ++j) {
    const int l = nd - j;
    g.dec[j].init(arch.channels_at(l), arch.channels_at(l - 1), 3, 1, 1, rng);
    g.dec_norm[j].init(arch.channels_at(l - 1));
    g.merge[j].init(2 * arch.channels_at(l - 1), arch.channels_at(l - 1), 3, 1, 1, rng);
    g.merge_norm[j].init(arch.channels_at(l - 1));
  }
  g.head.init(arch.channels_at(0), 3, 3, 1, 1, rng);
  return g;
}

Tensor Generator::run(const Tensor& x, Trace* t) const {
  if (x.channels != 3 || x.height != arch.image_size || x.width != arch.image_size)
    fail_validation("generator", "expected 3x" + std::to_string(arch.image_size) + "x" +
                                     std::to_string(arch.image_size) + " input, got " +
                                     std::to_string(x.channels) + "x" +
                                     std::to_string(x.height) + "x" + std::to_string(x.width));
  const int nd = arch.n_down();
  if (t) {
    t->enc_ctx.resize(nd);
    t->enc_nctx.resize(nd);
    t->enc_pre.resize(nd);
    t->res.resize(res.size());
    t->dec_ctx.resize(nd);
    t->dec_nctx.resize(nd);
    t->dec_pre.resize(nd);
    t->merge_ctx.resize(nd);
    t->merge_nctx.resize(nd);
    t->merge_pre.resize(nd);
  }

  std::vector<Tensor> skips(static_cast<std::size_t>(nd));

  Tensor pre = stem_norm.forward(stem.forward(x, t ? &t->stem_ctx : nullptr),
                                 t ? &t->stem_nctx : nullptr);
  if (t) t->stem_pre = pre;
  Tensor h = nn::activate(pre, nn::Act::relu);
  skips[0] = h;

  for (int i = 0; i < nd; ++i) {
    pre = enc_norm[i].forward(enc[i].forward(h, t ? &t->enc_ctx[i] : nullptr),
                              t ? &t->enc_nctx[i] : nullptr);
    if (t) t->enc_pre[i] = pre;
    h = nn::activate(pre, nn::Act::relu);
    if (i + 1 < nd) skips[static_cast<std::size_t>(i) + 1] = h;
  }

  for (std::size_t k = 0; k < res.size(); ++k) {
    const Res& r = res[k];
    Trace::ResTrace* rt = t ? &t->res[k] : nullptr;
    Tensor t2 = r.n1.forward(r.c1.forward(h, rt ? &rt->c1 : nullptr), rt ? &rt->n1 : nullptr);
    if (rt) rt->pre1 = t2;
    Tensor a = nn::activate(t2, nn::Act::relu);
    Tensor t4 = r.n2.forward(r.c2.forward(a, rt ? &rt->c2 : nullptr), rt ? &rt->n2 : nullptr);
    t4.data += h.data;
    if (rt) rt->sum_pre = t4;
    h = nn::activate(t4, nn::Act::relu);
  }

  for (int j = 0; j < nd; ++j) {
    const int l = nd - j;
    h = nn::upsample2x(h);
    pre = dec_norm[j].forward(dec[j].forward(h, t ? &t->dec_ctx[j] : nullptr),
                              t ? &t->dec_nctx[j] : nullptr);
    if (t) t->dec_pre[j] = pre;
    h = nn::activate(pre, nn::Act::relu);
    const Tensor& skip = skips[static_cast<std::size_t>(l) - 1];
    Tensor cat = nn::concat_channels({&h, &skip});
    pre = merge_norm[j].forward(merge[j].forward(cat, t ? &t->merge_ctx[j] : nullptr),
                                t ? &t->merge_nctx[j] : nullptr);
    if (t) t->merge_pre[j] = pre;
    h = nn::activate(pre, nn::Act::relu);
  }

  pre = head.forward(h, t ? &t->head_ctx : nullptr);
  if (t) t->head_pre = pre;
  return nn::activate(pre, nn::Act::tanh);
}

Tensor Generator::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor Generator::forward(const Tensor& x, Trace& trace) const { return run(x, &trace); }

Tensor Generator::backward(const Trace& t, const Tensor& d_out) {
  const int nd = arch.n_down();

  Tensor d = nn::activate_backward(t.head_pre, nn::Act::tanh, d_out);
  d = head.backward(t.head_ctx, d);

  std::vector<Tensor> d_skips(static_cast<std::size_t>(nd));
  for (int j = nd - 1; j >= 0; --j) {
    const int l = nd - j;
    Tensor dm = nn::activate_backward(t.merge_pre[j], nn::Act::relu, d);
    dm = merge_norm[j].backward(t.merge_nctx[j], dm);
    Tensor dcat = merge[j].backward(t.merge_ctx[j], dm);
    const int cl = arch.channels_at(l - 1);
    std::vector<Tensor> parts = nn::split_channels(dcat, {cl, cl});
    Tensor& dskip = d_skips[static_cast<std::size_t>(l) - 1];
    if (dskip.size() == 0)
      dskip = std::move(parts[1]);
    else
      dskip.data += parts[1].data;

    Tensor dd = nn::activate_backward(t.dec_pre[j], nn::Act::relu, parts[0]);
    dd = dec_norm[j].backward(t.dec_nctx[j], dd);
    dd = dec[j].backward(t.dec_ctx[j], dd);
    d = nn::upsample2x_backward(dd);
  }

  for (std::size_t k = res.size(); k-- > 0;) {
    Res& r = res[k];
    const Trace::ResTrace& rt = t.res[k];
    Tensor ds = nn::activate_backward(rt.sum_pre, nn::Act::relu, d);
    Tensor d4 = r.n2.backward(rt.n2, ds);
    Tensor da = r.c2.backward(rt.c2, d4);
    Tensor d2 = nn::activate_backward(rt.pre1, nn::Act::relu, da);
    Tensor d1 = r.n1.backward(rt.n1, d2);
    d = r.c1.backward(rt.c1, d1);
    d.data += ds.data;  // residual path
  }

  for (int i = nd - 1; i >= 0; --i) {
    if (i + 1 < nd) d.data += d_skips[static_cast<std::size_t>(i) + 1].data;
    Tensor de = nn::activate_backward(t.enc_pre[i], nn::Act::relu, d);
    de = enc_norm[i].backward(t.enc_nctx[i], de);
    d = enc[i].backward(t.enc_ctx[i], de);
  }

  d.data += d_skips[0].data;
  Tensor dstem = nn::activate_backward(t.stem_pre, nn::Act::relu, d);
  dstem = stem_norm.backward(t.stem_nctx, dstem);
  return stem.backward(t.stem_ctx, dstem);
}

void Generator::zero_grad() {
  for_each_param("", [](const std::string&, auto& p, auto& g) {
    (void)p;
    g.setZero();
  });
}

std::size_t Generator::param_count() const {
  std::size_t n = 0;
  for_each_param("", [&](const std::string&, const auto& p, const auto&) {
    n += static_cast<std::size_t>(p.size());
  });
  return n;
}

std::uint64_t Generator::param_digest() const {
  std::uint64_t h = 14695981039346656037ull;
  for_each_param("", [&](const std::string& name, const auto& p, const auto&) {
    h = fnv1a64(name, h);
    h = fnv1a64(p.data(), static_cast<std::size_t>(p.size()) * sizeof(Scalar), h);
  });
  return h;
}

// ------------------------- Global discriminator ---------------------------

GlobalDiscArch GlobalDiscArch::for_size(int image_size) {
  GlobalDiscArch a;
  a.image_size = image_size;
  a.base_channels = image_size <= 32 ? 12 : 16;
  a.validate();
  return a;
}

GlobalDiscArch GlobalDiscArch::custom(int image_size, int base_channels) {
  GlobalDiscArch a;
  a.image_size = image_size;
  a.base_channels = base_channels;
  a.validate();
  return a;
}

void GlobalDiscArch::validate() const {
  if (!power_of_two(image_size) || image_size < 8 || image_size > 256)
    fail_validation("global_disc", "image size must be a power of two in [8, 256]");
  if (base_channels < 2) fail_validation("global_disc", "base_channels must be >= 2");
}

int GlobalDiscArch::n_stages() const { return log2i(image_size / 4); }

int GlobalDiscArch::channels_at(int stage) const {
  const long c = static_cast<long>(base_channels) << stage;
  return static_cast<int>(std::min(c, static_cast<long>(base_channels) * 8));
}

std::string GlobalDiscArch::id() const {
  return "d1-conv-v1/s" + std::to_string(image_size) + "/c" + std::to_string(base_channels);
}

GlobalDiscriminator GlobalDiscriminator::init(const GlobalDiscArch& arch, std::uint64_t seed) {
  arch.validate();
  GlobalDiscriminator d;
  d.arch = arch;
  Rng rng(seed);
  const int n = arch.n_stages();
  d.stages.resize(n);
  for (int i = 0; i < n; ++i)
    d.stages[i].init(i == 0 ? 3 : arch.channels_at(i - 1), arch.channels_at(i), 3, 2, 1, rng);
  d.out.init(arch.channels_at(n - 1), 1, rng);
  return d;
}

Scalar GlobalDiscriminator::run(const Tensor& image, Trace* t) const {
  if (image.channels != 3 || image.height != arch.image_size || image.width != arch.image_size)
    fail_validation("global_disc", "expected 3x" + std::to_string(arch.image_size) + "x" +
                                       std::to_string(arch.image_size) + " input");
  if (t) {
    t->ctx.resize(stages.size());
    t->pre.resize(stages.size());
  }
  Tensor h = image;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    Tensor pre = stages[i].forward(h, t ? &t->ctx[i] : nullptr);
    if (t) t->pre[i] = pre;
    h = nn::activate(pre, nn::Act::leaky_relu);
  }
  const Vec pooled = nn::global_average(h);
  const Scalar logit = out.forward(pooled)(0);
  const Scalar prob = 1.0 / (1.0 + std::exp(-logit));
  if (t) {
    t->pooled = pooled;
    t->logit = logit;
    t->prob = prob;
    t->last_h = h.height;
    t->last_w = h.width;
  }
  return prob;
}

Scalar GlobalDiscriminator::forward(const Tensor& image) const { return run(image, nullptr); }

Scalar GlobalDiscriminator::forward(const Tensor& image, Trace& trace) const {
  return run(image, &trace);
}

Tensor GlobalDiscriminator::backward(const Trace& t, Scalar d_prob) {
  const Scalar d_logit = d_prob * t.prob * (1.0 - t.prob);
  Vec dy(1);
  dy(0) = d_logit;
  const Vec d_pooled = out.backward(t.pooled, dy);
  const int last_c = arch.channels_at(arch.n_stages() - 1);
  Tensor d = nn::global_average_backward(last_c, t.last_h, t.last_w, d_pooled);
  for (std::size_t i = stages.size(); i-- > 0;) {
    Tensor dp = nn::activate_backward(t.pre[i], nn::Act::leaky_relu, d);
    d = stages[i].backward(t.ctx[i], dp);
  }
  return d;
}

void GlobalDiscriminator::zero_grad() {
  for_each_param("", [](const std::string&, auto&, auto& g) { g.setZero(); });
}

std::size_t GlobalDiscriminator::param_count() const {
  std::size_t n = 0;
  for_each_param("", [&](const std::string&, const auto& p, const auto&) {
    n += static_cast<std::size_t>(p.size());
  });
  return n;
}

std::uint64_t GlobalDiscriminator::param_digest() const {
  std::uint64_t h = 14695981039346656037ull;
  for_each_param("", [&](const std::string& name, const auto& p, const auto&) {
    h = fnv1a64(name, h);
    h = fnv1a64(p.data(), static_cast<std::size_t>(p.size()) * sizeof(Scalar), h);
  });
  return h;
}

// -------------------------- Local discriminator ---------------------------

LocalDiscArch LocalDiscArch::for_size(int image_size) {
  LocalDiscArch a;
  a.image_size = image_size;
  a.base_channels = image_size <= 32 ? 8 : 12;
  a.validate();
  return a;
}

LocalDiscArch LocalDiscArch::custom(int image_size, int base_channels) {
  LocalDiscArch a;
  a.image_size = image_size;
  a.base_channels = base_channels;
  a.validate();
  return a;
}

void LocalDiscArch::validate() const {
  if (!power_of_two(image_size) || image_size < 8 || image_size > 256)
    fail_validation("local_disc", "image size must be a power of two in [8, 256]");
  if (base_channels < 2) fail_validation("local_disc", "base_channels must be >= 2");
}

std::string LocalDiscArch::id() const {
  return "d2-local3-v1/s" + std::to_string(image_size) + "/c" + std::to_string(base_channels);
}

LocalDiscriminator LocalDiscriminator::init(const LocalDiscArch& arch, std::uint64_t seed) {
  arch.validate();
  LocalDiscriminator d;
  d.arch = arch;
  Rng rng(seed);
  const int c = arch.base_channels;
  for (int s = 0; s < 3; ++s) {
    d.subnets[s].c0.init(3, c, 3, 2, 1, rng);
    d.subnets[s].c1.init(c, 2 * c, 3, 2, 1, rng);
    d.subnets[s].c2.init(2 * c, 4 * c, 3, 2, 1, rng);
  }
  d.fuse0.init(12 * c, 4 * c, 3, 1, 1, rng);
  d.fuse1.init(4 * c, 2 * c, 3, 1, 1, rng);
  d.out.init(2 * c, 1, rng);
  return d;
}

Scalar LocalDiscriminator::run(const LocalViews& views, Trace* t) const {
  const Tensor* imgs[3] = {&views.y_hair, &views.y_skin, &views.y_face};
  for (int s = 0; s < 3; ++s) {
    if (imgs[s]->channels != 3 || imgs[s]->height != arch.image_size ||
        imgs[s]->width != arch.image_size)
      fail_validation("local_disc", "view dims must be 3x" + std::to_string(arch.image_size) +
                                        "x" + std::to_string(arch.image_size));
  }

  Tensor feats[3];
  for (int s = 0; s < 3; ++s) {
    SubnetTrace* st = t ? &t->sub[s] : nullptr;
    Tensor pre = subnets[s].c0.forward(*imgs[s], st ? &st->ctx0 : nullptr);
    if (st) st->pre0 = pre;
    Tensor h = nn::activate(pre, nn::Act::leaky_relu);
    pre = subnets[s].c1.forward(h, st ? &st->ctx1 : nullptr);
    if (st) st->pre1 = pre;
    h = nn::activate(pre, nn::Act::leaky_relu);
    pre = subnets[s].c2.forward(h, st ? &st->ctx2 : nullptr);
    if (st) st->pre2 = pre;
    feats[s] = nn::activate(pre, nn::Act::leaky_relu);
  }

  Tensor cat = nn::concat_channels({&feats[0], &feats[1], &feats[2]});
  Tensor pre = fuse0.forward(cat, t ? &t->fuse0_ctx : nullptr);
  if (t) t->fuse0_pre = pre;
  Tensor h = nn::activate(pre, nn::Act::leaky_relu);
  pre = fuse1.forward(h, t ? &t->fuse1_ctx : nullptr);
  if (t) t->fuse1_pre = pre;
  h = nn::activate(pre, nn::Act::leaky_relu);

  const Vec pooled = nn::global_average(h);
  const Scalar logit = out.forward(pooled)(0);
  const Scalar prob = 1.0 / (1.0 + std::exp(-logit));
  if (t) {
    t->pooled = pooled;
    t->logit = logit;
    t->prob = prob;
    t->last_h = h.height;
    t->last_w = h.width;
  }
  return prob;
}

Scalar LocalDiscriminator::forward(const LocalViews& views) const { return run(views, nullptr); }

Scalar LocalDiscriminator::forward(const LocalViews& views, Trace& trace) const {
  return run(views, &trace);
}

LocalViews LocalDiscriminator::backward(const Trace& t, Scalar d_prob) {
  const Scalar d_logit = d_prob * t.prob * (1.0 - t.prob);
  Vec dy(1);
  dy(0) = d_logit;
  const Vec d_pooled = out.backward(t.pooled, dy);
  const int c = arch.base_channels;

  Tensor d = nn::global_average_backward(2 * c, t.last_h, t.last_w, d_pooled);
  Tensor dp = nn::activate_backward(t.fuse1_pre, nn::Act::leaky_relu, d);
  d = fuse1.backward(t.fuse1_ctx, dp);
  dp = nn::activate_backward(t.fuse0_pre, nn::Act::leaky_relu, d);
  d = fuse0.backward(t.fuse0_ctx, dp);

  std::vector<Tensor> dfeats = nn::split_channels(d, {4 * c, 4 * c, 4 * c});
  Tensor dviews[3];
  for (int s = 0; s < 3; ++s) {
    const SubnetTrace& st = t.sub[s];
    Tensor dd = nn::activate_backward(st.pre2, nn::Act::leaky_relu, dfeats[s]);
    dd = subnets[s].c2.backward(st.ctx2, dd);
    dd = nn::activate_backward(st.pre1, nn::Act::leaky_relu, dd);
    dd = subnets[s].c1.backward(st.ctx1, dd);
    dd = nn::activate_backward(st.pre0, nn::Act::leaky_relu, dd);
    dviews[s] = subnets[s].c0.backward(st.ctx0, dd);
  }
  LocalViews out_grads;
  out_grads.y_hair = std::move(dviews[0]);
  out_grads.y_skin = std::move(dviews[1]);
  out_grads.y_face = std::move(dviews[2]);
  return out_grads;
}

void LocalDiscriminator::zero_grad() {
  for_each_param("", [](const std::string&, auto&, auto& g) { g.setZero(); });
}

std::size_t LocalDiscriminator::param_count() const {
  std::size_t n = 0;
  for_each_param("", [&](const std::string&, const auto& p, const auto&) {
    n += static_cast<std::size_t>(p.size());
  });
  return n;
}

std::uint64_t LocalDiscriminator::param_digest() const {
  std::uint64_t h = 14695981039346656037ull;
  for_each_param("", [&](const std::string& name, const auto& p, const auto&) {
    h = fnv1a64(name, h);
    h = fnv1a64(p.data(), static_cast<std::size_t>(p.size()) * sizeof(Scalar), h);
  });
  return h;
}

// ------------------------ ConvIdentityExtractor ----------------------------

struct ConvIdentityExtractor::TraceImpl : IdentityExtractor::Trace {
  nn::ConvCtx ctx0, ctx1, ctx2;
  Tensor pre0, pre1, pre2;
};

ConvIdentityExtractor::ConvIdentityExtractor(std::uint64_t seed) : seed_(seed) {
  Rng rng(fnv1a64("identity-extractor", seed));
  c0_.init(3, 12, 3, 2, 1, rng);
  c1_.init(12, 24, 3, 2, 1, rng);
  c2_.init(24, 32, 3, 2, 1, rng);
}

IdentityFeatures ConvIdentityExtractor::run(const Tensor& image, TraceImpl* t) const {
  if (image.channels != 3)
    fail_validation("identity_extractor", "expected a 3-channel image");
  if (image.height < 8 || image.width < 8)
    fail_validation("identity_extractor", "image must be at least 8x8");

  Tensor pre = c0_.forward(image, t ? &t->ctx0 : nullptr);
  if (t) t->pre0 = pre;
  Tensor h = nn::activate(pre, nn::Act::tanh);
  pre = c1_.forward(h, t ? &t->ctx1 : nullptr);
  if (t) t->pre1 = pre;
  h = nn::activate(pre, nn::Act::tanh);
  pre = c2_.forward(h, t ? &t->ctx2 : nullptr);
  if (t) t->pre2 = pre;
  h = nn::activate(pre, nn::Act::tanh);

  IdentityFeatures f;
  f.phi_p = std::move(h);
  f.phi_f = nn::global_average(f.phi_p);
  return f;
}

IdentityFeatures ConvIdentityExtractor::extract(const Tensor& image) const {
  return run(image, nullptr);
}

IdentityFeatures ConvIdentityExtractor::extract_traced(
    const Tensor& image, std::unique_ptr<IdentityExtractor::Trace>& trace) const {
  auto t = std::make_unique<TraceImpl>();
  IdentityFeatures f = run(image, t.get());
  trace = std::move(t);
  return f;
}

Tensor ConvIdentityExtractor::input_grad(const IdentityExtractor::Trace& trace,
                                         const Vec& d_phi_f, const Tensor& d_phi_p) const {
  const auto* t = dynamic_cast<const TraceImpl*>(&trace);
  if (!t) fail_runtime("identity_extractor", "trace does not belong to this extractor");

  Tensor d_map = d_phi_p;
  const Tensor gap_grad =
      nn::global_average_backward(d_phi_p.channels, d_phi_p.height, d_phi_p.width, d_phi_f);
  d_map.data += gap_grad.data;

  Tensor d = nn::activate_backward(t->pre2, nn::Act::tanh, d_map);
  d = c2_.input_backward(t->ctx2, d);
  d = nn::activate_backward(t->pre1, nn::Act::tanh, d);
  d = c1_.input_backward(t->ctx1, d);
  d = nn::activate_backward(t->pre0, nn::Act::tanh, d);
  return c0_.input_backward(t->ctx0, d);
}

std::string ConvIdentityExtractor::id() const {
  return "toy-conv-v1:" + std::to_string(seed_);
}

std::uint64_t ConvIdentityExtractor::param_digest() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const nn::Conv* c : {&c0_, &c1_, &c2_}) {
    h = fnv1a64(c->w.data(), static_cast<std::size_t>(c->w.size()) * sizeof(Scalar), h);
    h = fnv1a64(c->b.data(), static_cast<std::size_t>(c->b.size()) * sizeof(Scalar), h);
  }
  return h;
}

}  // namespace frontal
