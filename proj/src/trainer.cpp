#include "frontal/trainer.hpp"

#include "frontal/image_io.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <tuple>

namespace frontal {
namespace {

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, int epoch) {
  std::uint64_t h = fnv1a64("epoch-shuffle");
  h = fnv1a64(&seed, sizeof(seed), h);
  const auto e = static_cast<std::uint64_t>(epoch);
  return fnv1a64(&e, sizeof(e), h);
}

void check_finite(Scalar value, const char* what, long step) {
  if (!std::isfinite(value))
    fail_runtime("training",
                 std::string("non-finite ") + what + " at step " + std::to_string(step));
}

}  // namespace

int TrainConfig::resolved_batch() const {
  if (batch_size > 0) return batch_size;
  if (image_size == 128) return 16;
  return 8;
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0))
    fail_validation("config", "lr0 must be finite and non-negative");
  if (!(lr_decay_per_epoch >= 0.0) || !std::isfinite(lr_decay_per_epoch))
    fail_validation("config", "lr_decay_per_epoch must be finite and non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail_validation("config", "beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail_validation("config", "beta2 must be in [0, 1)");
  if (batch_size < 0) fail_validation("config", "batch_size must be positive (or 0 for default)");
  if (epochs < 0) fail_validation("config", "epochs must be non-negative");
  if (image_size < 8 || (image_size & (image_size - 1)) != 0)
    fail_validation("config", "image_size must be a power of two >= 8");
  const Scalar w[5] = {weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4,
                       weights.lambda5};
  for (Scalar v : w)
    if (!(v >= 0.0) || !std::isfinite(v))
      fail_validation("config", "loss weights must be finite and non-negative");
}

Scalar lr_at_epoch(const TrainConfig& config, int epoch) {
  const Scalar lr = config.lr0 - static_cast<Scalar>(epoch) * config.lr_decay_per_epoch;
  return lr > 0.0 ? lr : 0.0;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_validation("config", "cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_validation("config", path + ": " + e.what());
  }
  if (!j.is_object()) fail_validation("config", path + ": top level must be a JSON object");

  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr0") {
        c.lr0 = value.get<Scalar>();
      } else if (key == "lr_decay_per_epoch") {
        c.lr_decay_per_epoch = value.get<Scalar>();
      } else if (key == "beta1") {
        c.beta1 = value.get<Scalar>();
      } else if (key == "beta2") {
        c.beta2 = value.get<Scalar>();
      } else if (key == "batch_size") {
        c.batch_size = value.get<int>();
      } else if (key == "epochs") {
        c.epochs = value.get<int>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "image_size") {
        c.image_size = value.get<int>();
      } else if (key == "weights") {
        if (!value.is_object()) fail_validation("config", path + ": weights must be an object");
        for (const auto& [wk, wv] : value.items()) {
          if (wk == "lambda1") {
            c.weights.lambda1 = wv.get<Scalar>();
          } else if (wk == "lambda2") {
            c.weights.lambda2 = wv.get<Scalar>();
          } else if (wk == "lambda3") {
            c.weights.lambda3 = wv.get<Scalar>();
          } else if (wk == "lambda4") {
            c.weights.lambda4 = wv.get<Scalar>();
          } else if (wk == "lambda5") {
            c.weights.lambda5 = wv.get<Scalar>();
          } else {
            fail_validation("config", path + ": unknown weight key '" + wk + "'");
          }
        }
      } else {
        fail_validation("config", path + ": unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail_validation("config", path + ": key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string step_trace_to_json(const StepTrace& t) {
  nlohmann::json j;
  j["step"] = t.step;
  j["epoch"] = t.epoch;
  j["lr"] = t.lr;
  j["l_pixel"] = t.gen.l_pixel;
  j["l_adv1"] = t.gen.l_adv1;
  j["l_adv2"] = t.gen.l_adv2;
  j["l_id"] = t.gen.l_id;
  j["l_tv"] = t.gen.l_tv;
  j["total"] = t.gen.total;
  j["d1_loss"] = t.d1_loss;
  j["d2_loss"] = t.d2_loss;
  j["d1_real_mean"] = t.d1_real_mean;
  j["d1_fake_mean"] = t.d1_fake_mean;
  j["d1_mean"] = t.d1_mean;
  j["d2_real_mean"] = t.d2_real_mean;
  j["d2_fake_mean"] = t.d2_fake_mean;
  j["d2_mean"] = t.d2_mean;
  j["mask_digest"] = t.mask_digest;
  j["wall_ms"] = t.wall_ms;
  return j.dump();
}

StepTrace step_trace_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail_runtime("trace", std::string("bad JSON line: ") + e.what());
  }
  StepTrace t;
  try {
    t.step = j.at("step").get<long>();
    t.epoch = j.at("epoch").get<int>();
    t.lr = j.at("lr").get<Scalar>();
    t.gen.l_pixel = j.at("l_pixel").get<Scalar>();
    t.gen.l_adv1 = j.at("l_adv1").get<Scalar>();
    t.gen.l_adv2 = j.at("l_adv2").get<Scalar>();
    t.gen.l_id = j.at("l_id").get<Scalar>();
    t.gen.l_tv = j.at("l_tv").get<Scalar>();
    t.gen.total = j.at("total").get<Scalar>();
    t.d1_loss = j.at("d1_loss").get<Scalar>();
    t.d2_loss = j.at("d2_loss").get<Scalar>();
    t.d1_real_mean = j.at("d1_real_mean").get<Scalar>();
    t.d1_fake_mean = j.at("d1_fake_mean").get<Scalar>();
    t.d1_mean = j.at("d1_mean").get<Scalar>();
    t.d2_real_mean = j.at("d2_real_mean").get<Scalar>();
    t.d2_fake_mean = j.at("d2_fake_mean").get<Scalar>();
    t.d2_mean = j.at("d2_mean").get<Scalar>();
    t.mask_digest = j.at("mask_digest").get<std::string>();
    t.wall_ms = j.at("wall_ms").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail_runtime("trace", std::string("missing field: ") + e.what());
  }
  return t;
}

std::vector<StepTrace> read_step_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_runtime("trace", "cannot open: " + path);
  std::vector<StepTrace> traces;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    traces.push_back(step_trace_from_json(line));
  }
  return traces;
}

PairedDiskSource::PairedDiskSource(std::vector<ImageRecord> records, std::string image_root,
                                   int image_size, const FacialParser& parser)
    : records_(std::move(records)),
      root_(std::move(image_root)),
      image_size_(image_size),
      parser_(parser) {
  using Key = std::tuple<int, std::string, std::string>;
  std::map<Key, std::size_t> frontals;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const ImageRecord& r = records_[i];
    if (!r.is_frontal()) continue;
    const Key key{r.subject_id, r.attribute, r.illumination};
    if (!frontals.emplace(key, i).second)
      fail_validation("training",
                      "duplicate frontal record for subject " + std::to_string(r.subject_id) +
                          ", attribute " + r.attribute + ", illumination " + r.illumination);
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const ImageRecord& r = records_[i];
    if (r.is_frontal()) continue;
    const auto it = frontals.find(Key{r.subject_id, r.attribute, r.illumination});
    if (it == frontals.end())
      fail_validation("training",
                      "no frontal record for subject " + std::to_string(r.subject_id) +
                          ", attribute " + r.attribute + ", illumination " + r.illumination);
    pairs_.emplace_back(i, it->second);
  }
  if (pairs_.empty()) fail_validation("training", "no profile/frontal pairs in the record set");
}

TrainSample PairedDiskSource::get(std::size_t index) const {
  const auto& [profile_idx, frontal_idx] = pairs_.at(index);
  const ImageRecord& profile = records_[profile_idx];
  const ImageRecord& frontal = records_[frontal_idx];
  const std::filesystem::path root(root_);

  TrainSample sample;
  const Tensor raw_x = read_image((root / profile.image_ref).string());
  sample.x = align_face(raw_x, profile.landmarks, image_size_);
  const Tensor raw_y = read_image((root / frontal.image_ref).string());
  sample.y = align_face(raw_y, frontal.landmarks, image_size_);
  const Landmarks5 marks = align_landmarks(frontal.landmarks, image_size_);
  sample.masks = parse_masks(sample.y, marks, parser_);
  return sample;
}

TrainRig make_default_rig(int image_size, std::uint64_t seed) {
  const auto net_seed = [&](const char* tag) {
    std::uint64_t h = fnv1a64(tag);
    return fnv1a64(&seed, sizeof(seed), h);
  };
  TrainRig rig;
  rig.gen = Generator::init(GeneratorArch::for_size(image_size), net_seed("generator-init"));
  rig.d1 = GlobalDiscriminator::init(GlobalDiscArch::for_size(image_size),
                                     net_seed("global-disc-init"));
  rig.d2 = LocalDiscriminator::init(LocalDiscArch::for_size(image_size),
                                    net_seed("local-disc-init"));
  return rig;
}

Trainer::Trainer(Generator& gen, GlobalDiscriminator& d1, LocalDiscriminator& d2,
                 const IdentityExtractor& extractor, const TrainConfig& config)
    : gen_(gen),
      d1_(d1),
      d2_(d2),
      extractor_(extractor),
      config_(config),
      opt_g_(config.beta1, config.beta2),
      opt_d1_(config.beta1, config.beta2),
      opt_d2_(config.beta1, config.beta2) {
  config_.validate();
  if (gen_.arch.image_size != config_.image_size)
    fail_validation("training", "generator image size " + std::to_string(gen_.arch.image_size) +
                                    " does not match config image size " +
                                    std::to_string(config_.image_size));
}

Scalar Trainer::update_d1(const std::vector<TrainSample>& batch, const std::vector<Tensor>& y_hat,
                          Scalar lr, Scalar& real_mean, Scalar& fake_mean) {
  if (batch.empty()) fail_validation("training", "empty batch");
  const Scalar inv_b = 1.0 / static_cast<Scalar>(batch.size());
  d1_.zero_grad();
  Scalar loss_sum = 0.0, real_sum = 0.0, fake_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    GlobalDiscriminator::Trace tr_real, tr_fake;
    const Scalar p_real = d1_.forward(batch[i].y, tr_real);
    const Scalar p_fake = d1_.forward(y_hat[i], tr_fake);
    loss_sum += adversarial_loss(p_real, p_fake, AdvSide::discriminator);
    real_sum += p_real;
    fake_sum += p_fake;
    d1_.backward(tr_real, discriminator_adv_dreal(p_real) * inv_b);
    d1_.backward(tr_fake, discriminator_adv_dfake(p_fake) * inv_b);
  }
  opt_d1_.step(d1_, lr);
  real_mean = real_sum * inv_b;
  fake_mean = fake_sum * inv_b;
  return loss_sum * inv_b;
}

Scalar Trainer::update_d2(const std::vector<TrainSample>& batch, const std::vector<Tensor>& y_hat,
                          Scalar lr, Scalar& real_mean, Scalar& fake_mean) {
  if (batch.empty()) fail_validation("training", "empty batch");
  const Scalar inv_b = 1.0 / static_cast<Scalar>(batch.size());
  d2_.zero_grad();
  Scalar loss_sum = 0.0, real_sum = 0.0, fake_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    // One mask triple per sample, shared by the real and the fake view.
    const LocalViews real_views = apply_attention(batch[i].y, batch[i].masks);
    const LocalViews fake_views = apply_attention(y_hat[i], batch[i].masks);
    LocalDiscriminator::Trace tr_real, tr_fake;
    const Scalar p_real = d2_.forward(real_views, tr_real);
    const Scalar p_fake = d2_.forward(fake_views, tr_fake);
    loss_sum += adversarial_loss(p_real, p_fake, AdvSide::discriminator);
    real_sum += p_real;
    fake_sum += p_fake;
    d2_.backward(tr_real, discriminator_adv_dreal(p_real) * inv_b);
    d2_.backward(tr_fake, discriminator_adv_dfake(p_fake) * inv_b);
  }
  opt_d2_.step(d2_, lr);
  real_mean = real_sum * inv_b;
  fake_mean = fake_sum * inv_b;
  return loss_sum * inv_b;
}

LossBreakdown Trainer::accumulate_generator_sample(const TrainSample& s, Scalar scale) {
  const LossWeights& w = config_.weights;
  Generator::Trace g_trace;
  const Tensor y_hat = gen_.forward(s.x, g_trace);

  LossBreakdown parts;
  parts.l_pixel = pixel_loss(y_hat, s.y);
  parts.l_tv = tv_loss(y_hat);
  parts.l_id = identity_loss(y_hat, s.y, extractor_);

  GlobalDiscriminator::Trace t1;
  const Scalar p1 = d1_.forward(y_hat, t1);
  const LocalViews fake_views = apply_attention(y_hat, s.masks);
  LocalDiscriminator::Trace t2;
  const Scalar p2 = d2_.forward(fake_views, t2);
  parts.l_adv1 = adversarial_loss(0.0, p1, AdvSide::generator);
  parts.l_adv2 = adversarial_loss(0.0, p2, AdvSide::generator);

  Tensor d_y_hat = pixel_loss_grad(y_hat, s.y);
  d_y_hat.data *= w.lambda1 * scale;
  d_y_hat.data += tv_loss_grad(y_hat).data * (w.lambda5 * scale);
  d_y_hat.data += identity_loss_grad(y_hat, s.y, extractor_).data * (w.lambda4 * scale);
  // Discriminator backward passes here accumulate into discriminator
  // parameter gradients too; those buffers are zeroed at the start of the
  // next discriminator update, and only opt_* steps touch parameters, so
  // this leaves both discriminators unchanged.
  d_y_hat.data += d1_.backward(t1, generator_adv_dfake(p1) * w.lambda2 * scale).data;
  const LocalViews d_views = d2_.backward(t2, generator_adv_dfake(p2) * w.lambda3 * scale);
  d_y_hat.data += hadamard_mask(d_views.y_hair, s.masks.m_hair).data;
  d_y_hat.data += hadamard_mask(d_views.y_skin, s.masks.m_skin).data;
  d_y_hat.data += hadamard_mask(d_views.y_face, s.masks.m_face).data;

  gen_.backward(g_trace, d_y_hat);
  return parts;
}

LossBreakdown Trainer::update_g(const std::vector<TrainSample>& batch, Scalar lr) {
  if (batch.empty()) fail_validation("training", "empty batch");
  const Scalar inv_b = 1.0 / static_cast<Scalar>(batch.size());
  gen_.zero_grad();
  Scalar pixel_sum = 0.0, adv1_sum = 0.0, adv2_sum = 0.0, id_sum = 0.0, tv_sum = 0.0;
  for (const TrainSample& s : batch) {
    const LossBreakdown parts = accumulate_generator_sample(s, inv_b);
    pixel_sum += parts.l_pixel;
    adv1_sum += parts.l_adv1;
    adv2_sum += parts.l_adv2;
    id_sum += parts.l_id;
    tv_sum += parts.l_tv;
  }
  opt_g_.step(gen_, lr);
  return total_generator_loss(pixel_sum * inv_b, adv1_sum * inv_b, adv2_sum * inv_b,
                              id_sum * inv_b, tv_sum * inv_b, config_.weights);
}

StepTrace Trainer::train_step(const std::vector<TrainSample>& batch, int epoch, long step_index) {
  const auto t0 = std::chrono::steady_clock::now();
  if (batch.empty()) fail_validation("training", "empty batch");

  StepTrace trace;
  trace.step = step_index;
  trace.epoch = epoch;
  trace.lr = lr_at_epoch(config_, epoch);

  // Detached synthesis for the discriminator phases: generated once, before
  // either discriminator moves, and no generator gradients flow from them.
  std::vector<Tensor> y_hat;
  y_hat.reserve(batch.size());
  for (const TrainSample& s : batch) y_hat.push_back(gen_.forward(s.x));

  std::uint64_t digest = fnv1a64("masks");
  for (const TrainSample& s : batch) {
    const std::uint64_t d = s.masks.digest();
    digest = fnv1a64(&d, sizeof(d), digest);
  }
  trace.mask_digest = hex64(digest);

  trace.d1_loss = update_d1(batch, y_hat, trace.lr, trace.d1_real_mean, trace.d1_fake_mean);
  trace.d2_loss = update_d2(batch, y_hat, trace.lr, trace.d2_real_mean, trace.d2_fake_mean);
  trace.d1_mean = 0.5 * (trace.d1_real_mean + trace.d1_fake_mean);
  trace.d2_mean = 0.5 * (trace.d2_real_mean + trace.d2_fake_mean);
  trace.gen = update_g(batch, trace.lr);

  check_finite(trace.d1_loss, "global discriminator loss", step_index);
  check_finite(trace.d2_loss, "local discriminator loss", step_index);
  check_finite(trace.gen.total, "generator loss", step_index);

  const auto t1 = std::chrono::steady_clock::now();
  trace.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return trace;
}

TrainState Trainer::snapshot(long step, int epochs_done) const {
  TrainState state;
  state.meta.image_size = config_.image_size;
  state.meta.gen_base = gen_.arch.base_channels;
  state.meta.gen_res = gen_.arch.res_blocks;
  state.meta.d1_base = d1_.arch.base_channels;
  state.meta.d2_base = d2_.arch.base_channels;
  state.meta.seed = config_.seed;
  state.meta.step = step;
  state.meta.epoch = epochs_done;
  state.meta.beta1 = config_.beta1;
  state.meta.beta2 = config_.beta2;
  state.gen = gen_;
  state.d1 = d1_;
  state.d2 = d2_;
  state.opt_g = opt_g_;
  state.opt_d1 = opt_d1_;
  state.opt_d2 = opt_d2_;
  return state;
}

FitResult Trainer::fit(const SampleSource& data, const std::string& checkpoint_dir, bool resume) {
  if (data.size() == 0) fail_validation("training", "dataset is empty");

  long step = 0;
  int start_epoch = 0;
  if (resume) {
    if (checkpoint_dir.empty())
      fail_validation("training", "resume requested without a checkpoint directory");
    const std::string latest = read_latest_checkpoint_path(checkpoint_dir);
    TrainState state = load_checkpoint(latest);
    if (state.gen.arch.id() != gen_.arch.id() || state.d1.arch.id() != d1_.arch.id() ||
        state.d2.arch.id() != d2_.arch.id())
      fail_validation("training", "checkpoint architecture (" + state.gen.arch.id() + ", " +
                                      state.d1.arch.id() + ", " + state.d2.arch.id() +
                                      ") does not match configured (" + gen_.arch.id() + ", " +
                                      d1_.arch.id() + ", " + d2_.arch.id() + ")");
    gen_ = std::move(state.gen);
    d1_ = std::move(state.d1);
    d2_ = std::move(state.d2);
    opt_g_ = std::move(state.opt_g);
    opt_d1_ = std::move(state.opt_d1);
    opt_d2_ = std::move(state.opt_d2);
    step = state.meta.step;
    start_epoch = state.meta.epoch;
  }

  std::ofstream trace_out;
  if (!checkpoint_dir.empty()) {
    std::filesystem::create_directories(checkpoint_dir);
    const std::string trace_path =
        (std::filesystem::path(checkpoint_dir) / "trace.jsonl").string();
    trace_out.open(trace_path, std::ios::app);
    if (!trace_out) fail_runtime("training", "cannot open trace file: " + trace_path);
  }

  FitResult result;
  result.final_step = step;
  result.final_epoch = start_epoch;
  const int batch_size = config_.resolved_batch();
  const std::size_t n = data.size();

  for (int epoch = start_epoch; epoch < config_.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(epoch_shuffle_seed(config_.seed, epoch));
    rng.shuffle(order);

    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
      std::vector<TrainSample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(data.get(order[i]));
      StepTrace trace = train_step(batch, epoch, step + 1);
      ++step;
      if (trace_out.is_open()) {
        trace_out << step_trace_to_json(trace) << "\n";
        trace_out.flush();
      }
      result.traces.push_back(std::move(trace));
    }

    if (!checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch + 1);
      const std::string file = (std::filesystem::path(checkpoint_dir) / name).string();
      save_checkpoint(file, snapshot(step, epoch + 1));
      write_latest_pointer(checkpoint_dir, name);
      result.checkpoint_files.push_back(file);
    }
    result.final_epoch = epoch + 1;
    result.final_step = step;
  }
  return result;
}

}  // namespace frontal
