#include "ctxgen/rng.hpp"

#include <cmath>

namespace ctxgen {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::restore(std::uint64_t seed, std::uint64_t position) {
  Rng rng(seed);
  for (std::uint64_t i = 0; i < position; ++i) rng.next_u64();
  return rng;
}

Rng Rng::fork(std::uint64_t seed, std::string_view stream_name,
              std::uint64_t stream_index) {
  return Rng(splitmix64(seed ^ fnv1a64(stream_name) ^
                        splitmix64(stream_index + 1)));
}

RngSet::RngSet(std::uint64_t seed)
    : init(Rng::fork(seed, "init")),
      dropout(Rng::fork(seed, "dropout")),
      batching(Rng::fork(seed, "batching")),
      sampling(Rng::fork(seed, "sampling")) {}

std::vector<RngState> RngSet::states() const {
  return {
      {"init", Rng::kAlgorithm, init.seed(), init.position()},
      {"dropout", Rng::kAlgorithm, dropout.seed(), dropout.position()},
      {"batching", Rng::kAlgorithm, batching.seed(), batching.position()},
      {"sampling", Rng::kAlgorithm, sampling.seed(), sampling.position()},
  };
}

RngSet RngSet::restore(const std::vector<RngState>& states) {
  RngSet set(0);
  for (const RngState& s : states) {
    if (s.algorithm != Rng::kAlgorithm) {
      throw DataError("unknown rng algorithm '" + s.algorithm + "'");
    }
    Rng restored = Rng::restore(s.seed, s.position);
    if (s.name == "init") set.init = restored;
    else if (s.name == "dropout") set.dropout = restored;
    else if (s.name == "batching") set.batching = restored;
    else if (s.name == "sampling") set.sampling = restored;
    else throw DataError("unknown rng stream '" + s.name + "'");
  }
  return set;
}

std::size_t sample_categorical(const Tensor& probs, Rng& rng) {
  if (probs.rank() != 1 || probs.size() == 0) {
    throw ShapeError("sample_categorical: need a nonempty vector");
  }
  double total = 0.0;
  for (double p : probs.data) {
    if (!(p >= 0.0)) {
      throw NumericError("sample_categorical: negative or NaN probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw NumericError("sample_categorical: probabilities sum to " +
                       std::to_string(total));
  }
  const double u = rng.uniform01() * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cum += probs[i];
    if (u < cum) return i;
  }
  return last_positive;
}

}  // namespace ctxgen
