#pragma once

#include "frontal/checkpoint.hpp"
#include "frontal/common.hpp"
#include "frontal/dataset.hpp"
#include "frontal/identity.hpp"
#include "frontal/losses.hpp"
#include "frontal/networks.hpp"
#include "frontal/nn/adam.hpp"
#include "frontal/parsing.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace frontal {

struct TrainConfig {
  Scalar lr0 = 2e-4;
  Scalar lr_decay_per_epoch = 2e-5;
  Scalar beta1 = 0.5;
  Scalar beta2 = 0.99;
  int batch_size = 0;  // 0 = resolve by image size (16 at 128, 8 at 256, else 8)
  int epochs = 1;
  std::uint64_t seed = 0;
  int image_size = 128;
  LossWeights weights;

  int resolved_batch() const;
  void validate() const;
};

// Linear decay, floored at zero.
Scalar lr_at_epoch(const TrainConfig& config, int epoch);

// Strict JSON reader: unknown keys are an error, every key is optional.
// Recognized keys mirror the TrainConfig field names; loss weights live under
// "weights": {"lambda1"... "lambda5"}.
TrainConfig load_train_config(const std::string& path);

// One profile-to-frontal training pair: input x, target y, and the soft masks
// parsed from y. Masks arrive precomputed so each sample is parsed exactly
// once per step and every consumer inside the step shares the same triple.
struct TrainSample {
  Tensor x;
  Tensor y;
  MaskTriple masks;
};

class SampleSource {
public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainSample get(std::size_t index) const = 0;
};

class VectorSource : public SampleSource {
public:
  explicit VectorSource(std::vector<TrainSample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  TrainSample get(std::size_t index) const override { return samples_.at(index); }

private:
  std::vector<TrainSample> samples_;
};

// Disk-backed source pairing every non-frontal record with its subject's
// frontal record of the same attribute and illumination. Images are read and
// aligned on demand; masks are parsed from the aligned frontal image.
class PairedDiskSource : public SampleSource {
public:
  PairedDiskSource(std::vector<ImageRecord> records, std::string image_root, int image_size,
                   const FacialParser& parser);
  std::size_t size() const override { return pairs_.size(); }
  TrainSample get(std::size_t index) const override;

private:
  std::vector<ImageRecord> records_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;  // (profile, frontal)
  std::string root_;
  int image_size_;
  const FacialParser& parser_;
};

// The three networks at their default widths for a resolution, each seeded
// deterministically from the run seed.
struct TrainRig {
  Generator gen;
  GlobalDiscriminator d1;
  LocalDiscriminator d2;
};

TrainRig make_default_rig(int image_size, std::uint64_t seed);

// Everything logged per optimizer step. Serialized one JSON object per line;
// "total" is exactly what total_generator_loss() returns for the logged parts,
// so the trace is verifiable bit-for-bit after a JSON round trip.
struct StepTrace {
  long step = 0;  // 1-based global step index
  int epoch = 0;
  Scalar lr = 0.0;
  LossBreakdown gen;
  Scalar d1_loss = 0.0;
  Scalar d2_loss = 0.0;
  Scalar d1_real_mean = 0.0;
  Scalar d1_fake_mean = 0.0;
  Scalar d1_mean = 0.0;
  Scalar d2_real_mean = 0.0;
  Scalar d2_fake_mean = 0.0;
  Scalar d2_mean = 0.0;
  std::string mask_digest;
  double wall_ms = 0.0;
};

std::string step_trace_to_json(const StepTrace& trace);
StepTrace step_trace_from_json(const std::string& line);
std::vector<StepTrace> read_step_traces(const std::string& path);

struct FitResult {
  std::vector<StepTrace> traces;
  long final_step = 0;
  int final_epoch = 0;  // epochs completed
  std::vector<std::string> checkpoint_files;
};

// Alternating min-max training: per step one global-discriminator update, one
// local-discriminator update, one generator update, in that order. Losses are
// batch means; the synthesized images the discriminators train on are
// detached (generated once up front, no generator gradients flow from the
// discriminator phases).
class Trainer {
public:
  Trainer(Generator& gen, GlobalDiscriminator& d1, LocalDiscriminator& d2,
          const IdentityExtractor& extractor, const TrainConfig& config);

  // Individual phases, exposed so the alternation contract is testable.
  // update_d1/update_d2 consume precomputed detached syntheses.
  Scalar update_d1(const std::vector<TrainSample>& batch, const std::vector<Tensor>& y_hat,
                   Scalar lr, Scalar& real_mean, Scalar& fake_mean);
  Scalar update_d2(const std::vector<TrainSample>& batch, const std::vector<Tensor>& y_hat,
                   Scalar lr, Scalar& real_mean, Scalar& fake_mean);
  LossBreakdown update_g(const std::vector<TrainSample>& batch, Scalar lr);

  // Accumulates the composite-objective gradients of one sample into the
  // generator, scaled by `scale` (update_g passes 1/batch). Returns the raw
  // unweighted loss parts. Exposed so finite-difference validation runs
  // against the production gradient path.
  LossBreakdown accumulate_generator_sample(const TrainSample& sample, Scalar scale);

  StepTrace train_step(const std::vector<TrainSample>& batch, int epoch, long step_index);

  // Runs the remaining epochs (honoring resume state), shuffling sample order
  // each epoch with a seed derived from config.seed and the epoch index. When
  // checkpoint_dir is non-empty, writes epoch_%04d.ckpt + LATEST after every
  // epoch and appends one JSON line per step to trace.jsonl.
  FitResult fit(const SampleSource& data, const std::string& checkpoint_dir, bool resume);

  const TrainConfig& config() const { return config_; }
  nn::Adam& opt_g() { return opt_g_; }
  nn::Adam& opt_d1() { return opt_d1_; }
  nn::Adam& opt_d2() { return opt_d2_; }
  TrainState snapshot(long step, int epochs_done) const;

private:
  Generator& gen_;
  GlobalDiscriminator& d1_;
  LocalDiscriminator& d2_;
  const IdentityExtractor& extractor_;
  TrainConfig config_;
  nn::Adam opt_g_, opt_d1_, opt_d2_;
};

}  // namespace frontal
