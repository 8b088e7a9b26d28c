#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace frontal {

// All numerics run in 64-bit; gradient checks and bit-exactness guarantees
// depend on it.
using Scalar = double;

using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Five facial keypoints in pixel coordinates, rows ordered:
// left eye, right eye, nose tip, left mouth corner, right mouth corner.
// Column 0 is x (rightward), column 1 is y (downward).
using Landmarks5 = Eigen::Matrix<Scalar, 5, 2>;

// Error categories; the CLI maps them to exit codes
// (usage = 1, validation = 2, runtime = 3; success = 0).
enum class ErrorKind { usage = 1, validation = 2, runtime = 3 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) {
  throw Error(ErrorKind::usage, msg);
}
[[noreturn]] inline void fail_validation(const std::string& where, const std::string& msg) {
  throw Error(ErrorKind::validation, where + ": " + msg);
}
[[noreturn]] inline void fail_runtime(const std::string& where, const std::string& msg) {
  throw Error(ErrorKind::runtime, where + ": " + msg);
}

// Deterministic PRNG. The engine is std::mt19937_64 (fully specified by the
// standard); every derived draw below uses an explicit mapping, so sequences
// are identical across platforms and toolchains. The std::*_distribution
// adapters are deliberately avoided: their algorithms are
// implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1): top 53 bits scaled by 2^-53.
  Scalar uniform() { return static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53; }

  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo mapping: the tiny bias is irrelevant
  // here, determinism is not.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  // Standard normal via Box-Muller, one spare cached.
  Scalar normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    Scalar u1 = uniform();
    Scalar u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const Scalar r = std::sqrt(-2.0 * std::log(u1));
    const Scalar a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates shuffle, descending index, using this engine only.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  Scalar spare_ = 0.0;
};

// FNV-1a over raw bytes; used for content digests (determinism checks,
// cache keys). Not cryptographic.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<std::uint64_t>(p[i]);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 14695981039346656037ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace frontal
