#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ksfront {

// Stream identifiers used with derive_seed. Values are part of the on-disk
// reproducibility contract; do not renumber.
enum class Stream : std::uint32_t {
  initial_config = 0,
  paths = 1,
  resample = 2,
  bound_check = 3,
  coupling_suite = 4,
};

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Bit-exact seed mixing:
//   a = mix64(master)
//   b = mix64(a ^ (replica * 0x9E3779B97F4A7C15 + 0x632BE59BD9B4E019))
//   c = mix64(b ^ (stream  * 0xD1B54A32D192ED03 + 0x8CB92BA72F3D8DD7))
// All arithmetic is modulo 2^64. For fixed (master, stream) the map
// replica -> seed is injective, so replica seeds never collide.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replica,
                                    std::uint32_t stream) {
  std::uint64_t x = mix64(master);
  x = mix64(x ^ (replica * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
  x = mix64(x ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL +
                 0x8CB92BA72F3D8DD7ULL));
  return x;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replica, Stream stream) {
  return derive_seed(master, replica, static_cast<std::uint32_t>(stream));
}

// A random stream backed by mt19937_64. All derived variates (uniform,
// exponential, Poisson, signs) are computed here rather than through
// <random> distributions so that output is identical across standard
// library implementations.
//
// A scripted stream replays a fixed list of raw 64-bit words and yields 0
// once exhausted; tests use it to force specific branches.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  static RandomStream scripted(std::vector<std::uint64_t> words) {
    RandomStream s(0);
    s.scripted_ = true;
    s.script_ = std::move(words);
    return s;
  }

  std::uint64_t next_u64() {
    if (scripted_) {
      return pos_ < script_.size() ? script_[pos_++] : 0;
    }
    return engine_();
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open_low() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double exponential(double rate);

  // Standard normal by Box-Muller; consumes two words, caches nothing.
  double normal();

  // +1 or -1 with probability 1/2 each.
  int sign() { return (next_u64() >> 63) != 0 ? 1 : -1; }

  // Poisson variate by sequential inversion; large means are split into
  // chunks so that exp(-mean) never underflows.
  unsigned poisson(double mean);

 private:
  std::mt19937_64 engine_;
  bool scripted_ = false;
  std::vector<std::uint64_t> script_;
  std::size_t pos_ = 0;
};

}  // namespace ksfront
