#include <doctest.h>

#include "frontal/toygen.hpp"
#include "frontal/trainer.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace frontal;

namespace {

std::string fresh_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("frontal-train-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir.string();
}

Tensor random_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(3, size, size);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.uniform(-1.0, 1.0);
  return t;
}

TrainSample make_sample(int size, std::uint64_t seed) {
  TrainSample s;
  s.x = random_image(size, seed);
  s.y = random_image(size, seed + 1000);
  s.masks = landmark_stand_in_masks(canonical_template(size), size, size);
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.image_size = 32;
  c.batch_size = 2;
  c.epochs = 1;
  c.seed = 7;
  return c;
}

std::vector<TrainSample> small_batch() {
  return {make_sample(32, 1), make_sample(32, 2)};
}

// Stand-in parser that reports how many times it actually ran.
class CountingParser : public FacialParser {
public:
  explicit CountingParser(int* count) : count_(count) {}
  MaskTriple parse(const Tensor& image, const Landmarks5& landmarks) const override {
    ++*count_;
    return landmark_stand_in_masks(landmarks, image.height, image.width);
  }
  std::string id() const override { return "counting-parser"; }

private:
  int* count_;
};

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("learning rate decays linearly and clamps at zero") {
  TrainConfig c;
  c.lr0 = 2e-4;
  c.lr_decay_per_epoch = 2e-5;
  CHECK(lr_at_epoch(c, 0) == 2e-4);
  CHECK(lr_at_epoch(c, 1) == doctest::Approx(1.8e-4).epsilon(1e-12));
  CHECK(lr_at_epoch(c, 5) == doctest::Approx(1.0e-4).epsilon(1e-12));
  CHECK(lr_at_epoch(c, 9) == doctest::Approx(2.0e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(c, 10) == 0.0);
  CHECK(lr_at_epoch(c, 50) == 0.0);
}

TEST_CASE("batch size resolves by image size unless set explicitly") {
  TrainConfig c;
  c.image_size = 128;
  CHECK(c.resolved_batch() == 16);
  c.image_size = 256;
  CHECK(c.resolved_batch() == 8);
  c.image_size = 32;
  CHECK(c.resolved_batch() == 8);
  c.image_size = 64;
  CHECK(c.resolved_batch() == 8);
  c.batch_size = 4;
  CHECK(c.resolved_batch() == 4);
}

TEST_CASE("training configuration validation is strict") {
  TrainConfig ok = small_config();
  CHECK_NOTHROW(ok.validate());

  TrainConfig bad = ok;
  bad.lr0 = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.beta2 = -0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.batch_size = -2;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.epochs = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.image_size = 48;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.weights.lambda3 = -0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("training configuration files parse strictly") {
  const std::string dir = fresh_dir("config");
  const std::string path = dir + "/train.json";
  {
    std::ofstream out(path);
    out << R"({"lr0": 1e-3, "epochs": 3, "seed": 11, "image_size": 64,)"
        << R"( "weights": {"lambda1": 5.0, "lambda5": 0.0}})";
  }
  const TrainConfig c = load_train_config(path);
  CHECK(c.lr0 == 1e-3);
  CHECK(c.epochs == 3);
  CHECK(c.seed == 11);
  CHECK(c.image_size == 64);
  CHECK(c.weights.lambda1 == 5.0);
  CHECK(c.weights.lambda2 == 1.0);  // untouched default
  CHECK(c.weights.lambda5 == 0.0);
  CHECK(c.beta1 == 0.5);

  {
    std::ofstream out(path);
    out << R"({"learning_rate": 1e-3})";
  }
  try {
    load_train_config(path);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unknown key 'learning_rate'") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << R"({"weights": {"lambda9": 1.0}})";
  }
  CHECK_THROWS_AS(load_train_config(path), Error);
  {
    std::ofstream out(path);
    out << R"({"weights": 3})";
  }
  CHECK_THROWS_AS(load_train_config(path), Error);
  CHECK_THROWS_AS(load_train_config(dir + "/missing.json"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("step traces survive a JSON round trip bit-for-bit") {
  StepTrace t;
  t.step = 12345678901L;
  t.epoch = 7;
  t.lr = 1.0 / 3.0;
  t.gen = total_generator_loss(0.1 + 1e-17, 2.0 / 7.0, 0.3, 1e-300, 225.0, LossWeights{});
  t.d1_loss = 1.3862943611198906;
  t.d2_loss = 0.6931471805599453;
  t.d1_real_mean = 0.5000000000000001;
  t.d1_fake_mean = 0.25;
  t.d1_mean = 0.5 * (t.d1_real_mean + t.d1_fake_mean);
  t.d2_real_mean = 0.9;
  t.d2_fake_mean = 0.1;
  t.d2_mean = 0.5;
  t.mask_digest = "00ff00ff00ff00ff";
  t.wall_ms = 17.25;

  const std::string line = step_trace_to_json(t);
  const StepTrace r = step_trace_from_json(line);
  CHECK(r.step == t.step);
  CHECK(r.epoch == t.epoch);
  CHECK(r.lr == t.lr);
  CHECK(r.gen.l_pixel == t.gen.l_pixel);
  CHECK(r.gen.l_adv1 == t.gen.l_adv1);
  CHECK(r.gen.l_adv2 == t.gen.l_adv2);
  CHECK(r.gen.l_id == t.gen.l_id);
  CHECK(r.gen.l_tv == t.gen.l_tv);
  CHECK(r.gen.total == t.gen.total);
  CHECK(r.d1_loss == t.d1_loss);
  CHECK(r.d2_loss == t.d2_loss);
  CHECK(r.d1_real_mean == t.d1_real_mean);
  CHECK(r.d1_fake_mean == t.d1_fake_mean);
  CHECK(r.d2_mean == t.d2_mean);
  CHECK(r.mask_digest == t.mask_digest);
  CHECK(r.wall_ms == t.wall_ms);

  // The logged parts re-produce the logged total through the one total
  // function, bit for bit.
  const LossBreakdown again = total_generator_loss(r.gen.l_pixel, r.gen.l_adv1, r.gen.l_adv2,
                                                   r.gen.l_id, r.gen.l_tv, LossWeights{});
  CHECK(again.total == r.gen.total);

  const std::string dir = fresh_dir("traces");
  {
    std::ofstream out(dir + "/trace.jsonl");
    out << line << "\n" << line << "\n" << line << "\n";
  }
  CHECK(read_step_traces(dir + "/trace.jsonl").size() == 3);
  CHECK_THROWS_AS(step_trace_from_json("{\"step\": 1}"), Error);
  CHECK_THROWS_AS(step_trace_from_json("not json"), Error);
  CHECK_THROWS_AS(read_step_traces(dir + "/absent.jsonl"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("each update phase moves exactly its own network") {
  TrainRig rig = make_default_rig(32, 5);
  const PixelIdentityExtractor extractor;
  const TrainConfig config = small_config();
  Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, config);

  const std::vector<TrainSample> batch = small_batch();
  std::vector<Tensor> y_hat;
  for (const TrainSample& s : batch) y_hat.push_back(rig.gen.forward(s.x));

  const std::uint64_t gen0 = rig.gen.param_digest();
  const std::uint64_t d1_0 = rig.d1.param_digest();
  const std::uint64_t d2_0 = rig.d2.param_digest();

  Scalar real_mean = 0.0, fake_mean = 0.0;
  const Scalar d1_loss = trainer.update_d1(batch, y_hat, 1e-4, real_mean, fake_mean);
  CHECK(d1_loss > 0.0);
  CHECK(real_mean > 0.0);
  CHECK(real_mean < 1.0);
  CHECK(fake_mean > 0.0);
  CHECK(fake_mean < 1.0);
  CHECK(rig.d1.param_digest() != d1_0);
  CHECK(rig.gen.param_digest() == gen0);
  CHECK(rig.d2.param_digest() == d2_0);

  const std::uint64_t d1_1 = rig.d1.param_digest();
  const Scalar d2_loss = trainer.update_d2(batch, y_hat, 1e-4, real_mean, fake_mean);
  CHECK(d2_loss > 0.0);
  CHECK(rig.d2.param_digest() != d2_0);
  CHECK(rig.d1.param_digest() == d1_1);
  CHECK(rig.gen.param_digest() == gen0);

  const std::uint64_t d2_1 = rig.d2.param_digest();
  const LossBreakdown parts = trainer.update_g(batch, 1e-4);
  CHECK(rig.gen.param_digest() != gen0);
  CHECK(rig.d1.param_digest() == d1_1);
  CHECK(rig.d2.param_digest() == d2_1);
  CHECK(parts.l_pixel > 0.0);
  CHECK(parts.l_tv > 0.0);
  CHECK(parts.l_id >= 0.0);
  const LossBreakdown recomputed =
      total_generator_loss(parts.l_pixel, parts.l_adv1, parts.l_adv2, parts.l_id, parts.l_tv,
                           config.weights);
  CHECK(recomputed.total == parts.total);

  CHECK_THROWS_AS(trainer.update_g({}, 1e-4), Error);
}

TEST_CASE("train steps are deterministic and fully logged") {
  const std::vector<TrainSample> batch = small_batch();

  auto run_once = [&](StepTrace& out) {
    TrainRig rig = make_default_rig(32, 5);
    const PixelIdentityExtractor extractor;
    Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, small_config());
    out = trainer.train_step(batch, 0, 1);
    return rig.gen.param_digest();
  };

  StepTrace a, b;
  const std::uint64_t da = run_once(a);
  const std::uint64_t db = run_once(b);
  CHECK(da == db);

  a.wall_ms = b.wall_ms = 0.0;  // the only nondeterministic field
  CHECK(step_trace_to_json(a) == step_trace_to_json(b));

  CHECK(a.step == 1);
  CHECK(a.epoch == 0);
  CHECK(a.lr == lr_at_epoch(small_config(), 0));
  CHECK(a.mask_digest.size() == 16);
  CHECK(a.d1_mean == 0.5 * (a.d1_real_mean + a.d1_fake_mean));
  CHECK(a.d2_mean == 0.5 * (a.d2_real_mean + a.d2_fake_mean));
  CHECK(a.d1_loss > 0.0);
  CHECK(a.d2_loss > 0.0);
  CHECK(a.gen.total > 0.0);
}

TEST_CASE("the extractor stays frozen through updates") {
  TrainRig rig = make_default_rig(32, 6);
  const auto extractor = make_toy_identity_extractor(3);
  const std::uint64_t frozen = extractor->param_digest();
  Trainer trainer(rig.gen, rig.d1, rig.d2, *extractor, small_config());
  (void)trainer.train_step(small_batch(), 0, 1);
  CHECK(extractor->param_digest() == frozen);
}

TEST_CASE("trainer construction rejects mismatched sizes and bad configs") {
  TrainRig rig = make_default_rig(32, 5);
  const PixelIdentityExtractor extractor;
  TrainConfig config = small_config();
  config.image_size = 64;
  try {
    Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, config);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("generator image size") != std::string::npos);
  }

  config = small_config();
  config.lr0 = -1.0;
  CHECK_THROWS_AS(Trainer(rig.gen, rig.d1, rig.d2, extractor, config), Error);
}

TEST_CASE("fit checkpoints every epoch and resume is bit-identical") {
  std::vector<TrainSample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(make_sample(32, 100 + i));
  const VectorSource data(samples);
  const PixelIdentityExtractor extractor;

  TrainConfig config = small_config();
  config.epochs = 2;

  // Straight two-epoch run.
  const std::string dir_a = fresh_dir("fit-a");
  std::uint64_t straight_digest = 0;
  std::string straight_ckpt;
  {
    TrainRig rig = make_default_rig(32, 9);
    Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, config);
    const FitResult r = trainer.fit(data, dir_a, false);
    CHECK(r.final_step == 4);  // 4 samples / batch 2 = 2 steps x 2 epochs
    CHECK(r.final_epoch == 2);
    CHECK(r.traces.size() == 4);
    CHECK(r.traces[0].step == 1);
    CHECK(r.traces[3].step == 4);
    CHECK(r.traces[3].epoch == 1);
    REQUIRE(r.checkpoint_files.size() == 2);
    CHECK(std::filesystem::exists(dir_a + "/epoch_0001.ckpt"));
    CHECK(std::filesystem::exists(dir_a + "/epoch_0002.ckpt"));
    CHECK(read_latest_checkpoint_path(dir_a) ==
          (std::filesystem::path(dir_a) / "epoch_0002.ckpt").string());
    CHECK(read_step_traces(dir_a + "/trace.jsonl").size() == 4);
    straight_digest = rig.gen.param_digest();
    straight_ckpt = file_bytes(dir_a + "/epoch_0002.ckpt");
  }

  // One epoch, then a fresh process resumes for the second epoch.
  const std::string dir_b = fresh_dir("fit-b");
  {
    TrainRig rig = make_default_rig(32, 9);
    TrainConfig first = config;
    first.epochs = 1;
    Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, first);
    const FitResult r = trainer.fit(data, dir_b, false);
    CHECK(r.final_step == 2);
  }
  {
    TrainRig rig = make_default_rig(32, 9999);  // overwritten by the checkpoint
    Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, config);
    const FitResult r = trainer.fit(data, dir_b, true);
    CHECK(r.final_step == 4);
    CHECK(r.final_epoch == 2);
    CHECK(r.traces.size() == 2);  // only the resumed epoch
    CHECK(r.traces[0].step == 3);
    CHECK(rig.gen.param_digest() == straight_digest);
    CHECK(file_bytes(dir_b + "/epoch_0002.ckpt") == straight_ckpt);
  }

  // The appended trace file covers all four steps and matches the straight
  // run except for wall time.
  const std::vector<StepTrace> ta = read_step_traces(dir_a + "/trace.jsonl");
  std::vector<StepTrace> tb = read_step_traces(dir_b + "/trace.jsonl");
  REQUIRE(tb.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    StepTrace x = ta[i], y = tb[i];
    x.wall_ms = y.wall_ms = 0.0;
    CHECK(step_trace_to_json(x) == step_trace_to_json(y));
  }

  // Error paths.
  {
    TrainRig rig = make_default_rig(32, 9);
    Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, config);
    CHECK_THROWS_AS(trainer.fit(data, "", true), Error);
    const VectorSource empty{std::vector<TrainSample>{}};
    CHECK_THROWS_AS(trainer.fit(empty, dir_b, false), Error);
  }
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("disk-backed pairing matches profiles to their frontal targets") {
  ToySpec spec;
  spec.n_identities = 2;
  spec.image_size = 32;
  spec.seed = 3;
  spec.poses = {{0.0, 0.0}, {30.0, 0.0}};
  spec.attributes = {"neutral"};
  spec.illuminations = {"above", "front"};

  const std::string dir = fresh_dir("paired");
  const std::vector<ImageRecord> records = generate_toy_dataset(spec, dir);
  REQUIRE(records.size() == 8);

  int parses = 0;
  const CountingParser parser(&parses);
  const PairedDiskSource source(records, dir, 32, parser);
  CHECK(source.size() == 4);  // one profile pose x 2 ids x 2 illuminations
  CHECK(parses == 0);         // construction reads nothing

  const TrainSample s = source.get(0);
  CHECK(parses == 1);
  CHECK(s.x.channels == 3);
  CHECK(s.x.height == 32);
  CHECK(s.y.height == 32);
  CHECK(s.masks.height() == 32);
  CHECK(s.x.data.abs().maxCoeff() <= 1.0);
  CHECK(s.y.data.abs().maxCoeff() <= 1.0);
  CHECK((s.x.data != s.y.data).any());  // profile differs from frontal

  // A full epoch parses each pair exactly once: the parsed masks are shared
  // by every consumer inside the step instead of being re-derived.
  parses = 0;
  TrainRig rig = make_default_rig(32, 21);
  const PixelIdentityExtractor extractor;
  Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, small_config());
  const FitResult r = trainer.fit(source, "", false);
  CHECK(r.final_step == 2);
  CHECK(parses == 4);

  // Removing one frontal target breaks construction with a precise message.
  std::vector<ImageRecord> missing;
  for (const ImageRecord& rec : records)
    if (!(rec.subject_id == 1 && rec.is_frontal() && rec.illumination == "above"))
      missing.push_back(rec);
  try {
    PairedDiskSource bad(missing, dir, 32, parser);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("no frontal record") != std::string::npos);
    CHECK(msg.find("subject 1") != std::string::npos);
    CHECK(msg.find("above") != std::string::npos);
  }

  std::vector<ImageRecord> doubled = records;
  for (const ImageRecord& rec : records)
    if (rec.is_frontal()) {
      doubled.push_back(rec);
      break;
    }
  REQUIRE(doubled.size() == records.size() + 1);
  CHECK_THROWS_AS(PairedDiskSource(doubled, dir, 32, parser), Error);

  std::filesystem::remove_all(dir);
}

TEST_CASE("snapshot captures counters, architecture and parameters") {
  TrainRig rig = make_default_rig(32, 13);
  const PixelIdentityExtractor extractor;
  Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, small_config());
  const TrainState state = trainer.snapshot(5, 2);
  CHECK(state.meta.step == 5);
  CHECK(state.meta.epoch == 2);
  CHECK(state.meta.image_size == 32);
  CHECK(state.meta.seed == 7);
  CHECK(state.meta.beta1 == 0.5);
  CHECK(state.meta.beta2 == 0.99);
  CHECK(state.gen.param_digest() == rig.gen.param_digest());
  CHECK(state.d1.param_digest() == rig.d1.param_digest());
  CHECK(state.d2.param_digest() == rig.d2.param_digest());
}

TEST_CASE("checkpoints round trip the whole training state bit-exactly") {
  TrainRig rig = make_default_rig(32, 17);
  const PixelIdentityExtractor extractor;
  Trainer trainer(rig.gen, rig.d1, rig.d2, extractor, small_config());
  (void)trainer.train_step(small_batch(), 0, 1);  // non-trivial Adam state

  const TrainState state = trainer.snapshot(1, 0);
  const std::string dir = fresh_dir("ckpt");
  const std::string path = dir + "/state.ckpt";
  save_checkpoint(path, state);
  const TrainState back = load_checkpoint(path);

  CHECK(back.meta.step == 1);
  CHECK(back.meta.image_size == 32);
  CHECK(back.gen.param_digest() == state.gen.param_digest());
  CHECK(back.d1.param_digest() == state.d1.param_digest());
  CHECK(back.d2.param_digest() == state.d2.param_digest());
  CHECK(back.opt_g.step_count() == state.opt_g.step_count());
  REQUIRE(back.opt_g.slots().size() == state.opt_g.slots().size());
  for (const auto& [name, slot] : state.opt_g.slots()) {
    const auto it = back.opt_g.slots().find(name);
    REQUIRE(it != back.opt_g.slots().end());
    CHECK((it->second.m - slot.m).cwiseAbs().maxCoeff() == 0.0);
    CHECK((it->second.v - slot.v).cwiseAbs().maxCoeff() == 0.0);
  }

  // Saving the reloaded state reproduces the file byte for byte.
  const std::string path2 = dir + "/state2.ckpt";
  save_checkpoint(path2, back);
  CHECK(file_bytes(path) == file_bytes(path2));

  CHECK_THROWS_AS(load_checkpoint(dir + "/none.ckpt"), Error);
  {
    std::ofstream out(dir + "/bad.ckpt", std::ios::binary);
    out << "BOGUS";
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/bad.ckpt"), Error);
  std::filesystem::remove_all(dir);
}
