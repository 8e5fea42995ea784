#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ctxgen/tensor.hpp"

namespace ctxgen {

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic mt19937_64 generator with a counted draw position, so a
// (seed, position) pair fully identifies the state inside a checkpoint.
// Uniform doubles are derived from raw 64-bit draws rather than
// std::uniform_real_distribution, whose output is implementation-defined.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  static Rng restore(std::uint64_t seed, std::uint64_t position);
  // Independent stream for a named purpose or an indexed worker.
  static Rng fork(std::uint64_t seed, std::string_view stream_name,
                  std::uint64_t stream_index = 0);

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }
  // [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // [0, n)
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uint64_t position_ = 0;
};

// Seeded Fisher-Yates; std::shuffle is implementation-defined so it cannot
// back any reproducibility contract.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    std::size_t j = rng.index(i + 1);
    std::swap(items[i], items[j]);
  }
}

struct RngState {
  std::string name;
  std::string algorithm = Rng::kAlgorithm;
  std::uint64_t seed = 0;
  std::uint64_t position = 0;
};

// The four purposes that consume randomness. One stream per purpose keeps
// the draws seen by one consumer unchanged when another is toggled.
struct RngSet {
  Rng init;
  Rng dropout;
  Rng batching;
  Rng sampling;

  explicit RngSet(std::uint64_t seed);

  std::vector<RngState> states() const;
  static RngSet restore(const std::vector<RngState>& states);
};

// Inverse-CDF draw from a categorical distribution; consumes exactly one
// uniform draw. Probabilities must be nonnegative and sum to 1 within 1e-6.
std::size_t sample_categorical(const Tensor& probs, Rng& rng);

}  // namespace ctxgen
