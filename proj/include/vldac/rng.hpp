#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace vldac {

// splitmix64 step; used for seed mixing and stream derivation.
std::uint64_t mix64(std::uint64_t x);

// Derive a child seed from a master seed and a path of tags, e.g.
// derive_seed(master, {TAG_ENV, slot, episode}). Deterministic, well-spread.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// xoshiro256** with fully specified output; serializable, cheap, and
// identical across platforms (unlike std::mt19937_64's distributions).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform int in [0, n), n >= 1, unbiased via rejection.
  int uniform_int(int n);

  // Index sampled from an unnormalized nonnegative weight vector.
  int categorical(std::span<const double> weights);

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// In-place Fisher-Yates; spelled out so shuffles are identical everywhere
// (std::shuffle's draw pattern is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    int j = rng.uniform_int(i + 1);
    std::swap(v[i], v[static_cast<size_t>(j)]);
  }
}

}  // namespace vldac
