#pragma once

#include <cstdint>
#include <initializer_list>

namespace gdf {

// Counter-based generator "splitmix64-ctr": every draw is a pure function of
// (key, stream, counter), so entries can be generated in any order.
namespace rng {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash(std::uint64_t key, std::uint64_t stream,
                             std::uint64_t counter) noexcept {
  return mix64(mix64(mix64(key) ^ stream) ^ counter);
}

// Uniform on [0,1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr double uniform(std::uint64_t key, std::uint64_t stream,
                         std::uint64_t counter) noexcept {
  return to_unit(hash(key, stream, counter));
}

// Seed derivation tree: root -> stage -> replica -> ...
constexpr std::uint64_t derive(std::uint64_t parent, std::uint64_t child) noexcept {
  return mix64(parent ^ mix64(child + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive(std::uint64_t parent,
                            std::initializer_list<std::uint64_t> path) noexcept {
  for (auto c : path) parent = derive(parent, c);
  return parent;
}

// Stream identifiers used by the array sampler.
inline constexpr std::uint64_t kStreamRowLatent = 1;
inline constexpr std::uint64_t kStreamPairLatent = 2;

// Stage identifiers for the derivation tree.
enum Stage : std::uint64_t {
  kStageSimulate = 11,
  kStageExchangeability = 12,
  kStageDependence = 13,
  kStagePositivity = 14,
  kStageUStat = 15,
  kStageAlignment = 16,
  kStagePlanted = 17,
};

}  // namespace rng

// Sequential stream on top of the counter hash. Satisfies
// UniformRandomBitGenerator so it works with <algorithm> shuffles.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0) noexcept
      : key_(key), stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return rng::hash(key_, stream_, counter_++); }

  double uniform() noexcept { return rng::to_unit((*this)()); }

  // Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % bound;
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace gdf
