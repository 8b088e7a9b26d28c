#include "frontal/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace frontal {
namespace {

constexpr char kMagic[8] = {'F', 'R', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint8_t kKindMatrix = 0;
constexpr std::uint8_t kKindVector = 1;

struct BlobRef {
  std::string name;
  const Scalar* data;
  std::uint64_t rows, cols;
  std::uint8_t kind;
};

struct Blob {
  std::uint8_t kind = kKindVector;
  std::uint64_t rows = 0, cols = 0;
  std::vector<Scalar> data;
};

template <class T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail_runtime("checkpoint", "truncated file: " + path);
  return value;
}

template <class Model>
void collect_params(const Model& model, const std::string& prefix, std::vector<BlobRef>& blobs) {
  model.for_each_param(prefix, [&](const std::string& name, const auto& p, const auto&) {
    using P = std::decay_t<decltype(p)>;
    if constexpr (P::ColsAtCompileTime == 1) {
      blobs.push_back({name, p.data(), static_cast<std::uint64_t>(p.size()), 1, kKindVector});
    } else {
      blobs.push_back({name, p.data(), static_cast<std::uint64_t>(p.rows()),
                       static_cast<std::uint64_t>(p.cols()), kKindMatrix});
    }
  });
}

void collect_opt(const nn::Adam& opt, const std::string& prefix, std::vector<BlobRef>& blobs) {
  for (const auto& [name, slot] : opt.slots()) {
    blobs.push_back({prefix + name + ".m", slot.m.data(),
                     static_cast<std::uint64_t>(slot.m.size()), 1, kKindVector});
    blobs.push_back({prefix + name + ".v", slot.v.data(),
                     static_cast<std::uint64_t>(slot.v.size()), 1, kKindVector});
  }
}

template <class Model>
void restore_params(Model& model, const std::string& prefix,
                    std::map<std::string, Blob>& blobs, const std::string& path) {
  model.for_each_param(prefix, [&](const std::string& name, auto& p, auto&) {
    auto it = blobs.find(name);
    if (it == blobs.end())
      fail_runtime("checkpoint", "missing parameter blob '" + name + "' in " + path);
    const Blob& b = it->second;
    using P = std::decay_t<decltype(p)>;
    const auto want_rows = static_cast<std::uint64_t>(p.rows());
    const auto want_cols = static_cast<std::uint64_t>(p.cols());
    const std::uint8_t want_kind = P::ColsAtCompileTime == 1 ? kKindVector : kKindMatrix;
    if (b.kind != want_kind || b.rows != want_rows || b.cols != want_cols)
      fail_runtime("checkpoint", "parameter blob '" + name + "' has shape " +
                                     std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                                     ", expected " + std::to_string(want_rows) + "x" +
                                     std::to_string(want_cols) + " in " + path);
    std::memcpy(p.data(), b.data.data(), b.data.size() * sizeof(Scalar));
    blobs.erase(it);
  });
}

void restore_opt(nn::Adam& opt, const std::string& prefix,
                 std::map<std::string, Blob>& blobs, const std::string& path) {
  // Optimizer slots are self-describing: collect name -> (m, v) pairs.
  std::vector<std::string> consumed;
  for (auto& [name, blob] : blobs) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    bool is_m = false;
    if (rest.size() > 2 && rest.compare(rest.size() - 2, 2, ".m") == 0) {
      is_m = true;
    } else if (rest.size() > 2 && rest.compare(rest.size() - 2, 2, ".v") == 0) {
      is_m = false;
    } else {
      fail_runtime("checkpoint", "unrecognized optimizer blob '" + name + "' in " + path);
    }
    const std::string param = rest.substr(0, rest.size() - 2);
    nn::Adam::Slot& slot = opt.slots()[param];
    Vec& dst = is_m ? slot.m : slot.v;
    dst = Eigen::Map<const Vec>(blob.data.data(), static_cast<Eigen::Index>(blob.data.size()));
    consumed.push_back(name);
  }
  for (const std::string& name : consumed) blobs.erase(name);
  for (const auto& [param, slot] : opt.slots()) {
    if (slot.m.size() != slot.v.size())
      fail_runtime("checkpoint",
                   "optimizer slot '" + prefix + param + "' has mismatched m/v sizes in " + path);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  std::vector<BlobRef> blobs;
  collect_params(state.gen, "g.", blobs);
  collect_params(state.d1, "d1.", blobs);
  collect_params(state.d2, "d2.", blobs);
  collect_opt(state.opt_g, "opt_g.", blobs);
  collect_opt(state.opt_d1, "opt_d1.", blobs);
  collect_opt(state.opt_d2, "opt_d2.", blobs);

  nlohmann::json header;
  header["format_version"] = 1;
  header["image_size"] = state.meta.image_size;
  header["gen_base"] = state.meta.gen_base;
  header["gen_res"] = state.meta.gen_res;
  header["d1_base"] = state.meta.d1_base;
  header["d2_base"] = state.meta.d2_base;
  header["seed"] = state.meta.seed;
  header["step"] = state.meta.step;
  header["epoch"] = state.meta.epoch;
  header["beta1"] = state.meta.beta1;
  header["beta2"] = state.meta.beta2;
  header["opt_steps"] = {{"g", state.opt_g.step_count()},
                         {"d1", state.opt_d1.step_count()},
                         {"d2", state.opt_d2.step_count()}};
  header["gen_id"] = state.gen.arch.id();
  header["d1_id"] = state.d1.arch.id();
  header["d2_id"] = state.d2.arch.id();
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_runtime("checkpoint", "cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, static_cast<std::uint64_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  write_raw(out, static_cast<std::uint64_t>(blobs.size()));
  for (const BlobRef& b : blobs) {
    write_raw(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    write_raw(out, b.kind);
    write_raw(out, b.rows);
    write_raw(out, b.cols);
    out.write(reinterpret_cast<const char*>(b.data),
              static_cast<std::streamsize>(b.rows * b.cols * sizeof(Scalar)));
  }
  out.flush();
  if (!out) fail_runtime("checkpoint", "write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_runtime("checkpoint", "cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail_runtime("checkpoint", "bad magic (not a checkpoint file): " + path);

  const auto header_len = read_raw<std::uint64_t>(in, path);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail_runtime("checkpoint", "truncated header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    fail_runtime("checkpoint", "corrupt header in " + path + ": " + e.what());
  }

  TrainState state;
  try {
    state.meta.image_size = header.at("image_size").get<int>();
    state.meta.gen_base = header.at("gen_base").get<int>();
    state.meta.gen_res = header.at("gen_res").get<int>();
    state.meta.d1_base = header.at("d1_base").get<int>();
    state.meta.d2_base = header.at("d2_base").get<int>();
    state.meta.seed = header.at("seed").get<std::uint64_t>();
    state.meta.step = header.at("step").get<long>();
    state.meta.epoch = header.at("epoch").get<int>();
    state.meta.beta1 = header.at("beta1").get<Scalar>();
    state.meta.beta2 = header.at("beta2").get<Scalar>();
  } catch (const nlohmann::json::exception& e) {
    fail_runtime("checkpoint", "incomplete header in " + path + ": " + e.what());
  }

  std::map<std::string, Blob> blobs;
  const auto n_blobs = read_raw<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < n_blobs; ++i) {
    const auto name_len = read_raw<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) fail_runtime("checkpoint", "truncated blob name: " + path);
    Blob b;
    b.kind = read_raw<std::uint8_t>(in, path);
    b.rows = read_raw<std::uint64_t>(in, path);
    b.cols = read_raw<std::uint64_t>(in, path);
    b.data.resize(b.rows * b.cols);
    in.read(reinterpret_cast<char*>(b.data.data()),
            static_cast<std::streamsize>(b.data.size() * sizeof(Scalar)));
    if (!in) fail_runtime("checkpoint", "truncated blob data for '" + name + "': " + path);
    if (!blobs.emplace(std::move(name), std::move(b)).second)
      fail_runtime("checkpoint", "duplicate blob in " + path);
  }

  state.gen = Generator::init(
      GeneratorArch::custom(state.meta.image_size, state.meta.gen_base, state.meta.gen_res), 0);
  state.d1 = GlobalDiscriminator::init(
      GlobalDiscArch::custom(state.meta.image_size, state.meta.d1_base), 0);
  state.d2 = LocalDiscriminator::init(
      LocalDiscArch::custom(state.meta.image_size, state.meta.d2_base), 0);
  restore_params(state.gen, "g.", blobs, path);
  restore_params(state.d1, "d1.", blobs, path);
  restore_params(state.d2, "d2.", blobs, path);

  state.opt_g = nn::Adam(state.meta.beta1, state.meta.beta2);
  state.opt_d1 = nn::Adam(state.meta.beta1, state.meta.beta2);
  state.opt_d2 = nn::Adam(state.meta.beta1, state.meta.beta2);
  if (header.contains("opt_steps")) {
    state.opt_g.set_step_count(header["opt_steps"].at("g").get<long>());
    state.opt_d1.set_step_count(header["opt_steps"].at("d1").get<long>());
    state.opt_d2.set_step_count(header["opt_steps"].at("d2").get<long>());
  }
  restore_opt(state.opt_g, "opt_g.", blobs, path);
  restore_opt(state.opt_d1, "opt_d1.", blobs, path);
  restore_opt(state.opt_d2, "opt_d2.", blobs, path);

  if (!blobs.empty())
    fail_runtime("checkpoint", "unrecognized blob '" + blobs.begin()->first + "' in " + path);
  return state;
}

std::string latest_pointer_path(const std::string& dir) {
  return (std::filesystem::path(dir) / "LATEST").string();
}

void write_latest_pointer(const std::string& dir, const std::string& checkpoint_filename) {
  const std::string path = latest_pointer_path(dir);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_runtime("checkpoint", "cannot open for writing: " + path);
  out << checkpoint_filename << "\n";
  out.flush();
  if (!out) fail_runtime("checkpoint", "write failed: " + path);
}

std::string read_latest_checkpoint_path(const std::string& dir) {
  const std::string path = latest_pointer_path(dir);
  std::ifstream in(path);
  if (!in) fail_runtime("checkpoint", "no LATEST pointer in " + dir);
  std::string name;
  std::getline(in, name);
  while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
  if (name.empty()) fail_runtime("checkpoint", "empty LATEST pointer in " + dir);
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace frontal
