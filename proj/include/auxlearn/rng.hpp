#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace auxlearn {

namespace detail {

// splitmix64 finalizer; full avalanche, cheap enough to call per stream.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Derives an independent stream seed from a master seed plus up to three
// labels (stream tag, replication index, inner index).  Streams derived with
// distinct labels never collide in practice, so adding a consumer does not
// shift the draws seen by existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = detail::mix64(master);
  s = detail::mix64(s ^ detail::mix64(a));
  s = detail::mix64(s ^ detail::mix64(b));
  s = detail::mix64(s ^ detail::mix64(c));
  return s;
}

// Stream tags for derive_seed.  Each random quantity in a replication gets
// its own stream, so matched seeds produce matched draws across settings
// that share dimensions.
namespace stream {
inline constexpr std::uint64_t coefficients = 1;
inline constexpr std::uint64_t noise_cov = 2;
inline constexpr std::uint64_t design = 3;
inline constexpr std::uint64_t noise = 4;
inline constexpr std::uint64_t response = 5;
inline constexpr std::uint64_t split = 6;
inline constexpr std::uint64_t shared_truth = 7;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double normal(double stddev) { return stddev * normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace auxlearn
