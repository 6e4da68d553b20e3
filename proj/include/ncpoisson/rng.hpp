#pragma once

#include <cstdint>
#include <random>

namespace ncp {

// Stream tags keep independent consumers of one experiment seed apart.
enum class StreamTag : std::uint64_t {
  BernoulliSum = 1,
  MarkovPath = 2,
  SubshiftPath = 3,
  HittingTime = 4,
  PointSample = 5,
  Refinement = 6,
  TupleSampling = 7,
  RandomInstance = 8,
  ChainFamily = 9,
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed derivation: the stream of replicate i depends only on
// (seed, i, tag), so serial and parallel runs draw identical numbers.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t replicate,
                                    StreamTag tag) noexcept {
  std::uint64_t x = mix64(seed);
  x = mix64(x ^ (replicate * 0xd1b54a32d192ed03ULL));
  return mix64(x ^ (static_cast<std::uint64_t>(tag) * 0x8cb92ba72f3d8dd7ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t replicate, StreamTag tag)
      : engine_(derive_seed(seed, replicate, tag)) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits; identical on every platform.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    __uint128_t m = static_cast<__uint128_t>(engine_()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<__uint128_t>(engine_()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ncp
