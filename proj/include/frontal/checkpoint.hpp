#pragma once

#include "frontal/common.hpp"
#include "frontal/networks.hpp"
#include "frontal/nn/adam.hpp"

#include <cstdint>
#include <string>

namespace frontal {

// Everything a training run needs to continue bit-for-bit: the three
// networks, their Adam states, and the bookkeeping counters.
struct CheckpointMeta {
  int image_size = 0;
  int gen_base = 0;
  int gen_res = 0;
  int d1_base = 0;
  int d2_base = 0;
  std::uint64_t seed = 0;
  long step = 0;    // optimizer steps completed so far
  int epoch = 0;    // epochs completed so far
  Scalar beta1 = 0.5;
  Scalar beta2 = 0.99;
};

struct TrainState {
  CheckpointMeta meta;
  Generator gen;
  GlobalDiscriminator d1;
  LocalDiscriminator d2;
  nn::Adam opt_g, opt_d1, opt_d2;
};

// Binary container: magic, a JSON header with the architecture/counters, then
// named float64 blobs for every parameter and Adam slot. Round-trips are
// bit-exact. All integers and floats are little-endian.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

// A plain-text pointer file next to the checkpoints naming the newest one.
std::string latest_pointer_path(const std::string& dir);
void write_latest_pointer(const std::string& dir, const std::string& checkpoint_filename);
std::string read_latest_checkpoint_path(const std::string& dir);

}  // namespace frontal
