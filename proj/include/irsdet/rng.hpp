#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace irsdet {

// Deterministic random source (xoshiro256** seeded through SplitMix64).
//
// Streams are derived, not shared: every consumer asks for
// Rng::derive(master, {tag, index, ...}) and owns its generator. Parallel
// Monte Carlo trials therefore produce identical draws no matter how they
// are scheduled across workers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  static std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased integer on [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller; pairs are cached.
  double gaussian();

  // Circularly-symmetric complex normal with unit total variance.
  std::complex<double> cgaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

 private:
  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags used when deriving sub-generators from a master seed.
namespace stream {
inline constexpr std::uint64_t kSignatures = 0x5349;
inline constexpr std::uint64_t kPhaseShifts = 0x5448;
inline constexpr std::uint64_t kScenario = 0x5343;
inline constexpr std::uint64_t kActivity = 0x4143;
inline constexpr std::uint64_t kChannels = 0x4348;
inline constexpr std::uint64_t kNoise = 0x4e4f;
inline constexpr std::uint64_t kTrial = 0x5452;
inline constexpr std::uint64_t kDataset = 0x4441;
inline constexpr std::uint64_t kMixture = 0x4d58;
inline constexpr std::uint64_t kInit = 0x494e;
inline constexpr std::uint64_t kShuffle = 0x5348;
inline constexpr std::uint64_t kCoordinate = 0x434f;
}  // namespace stream

}  // namespace irsdet
