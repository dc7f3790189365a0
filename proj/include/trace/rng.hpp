#ifndef TRACE_RNG_HPP
#define TRACE_RNG_HPP

#include <cstdint>
#include <string_view>

namespace trace {

/// Counter-based deterministic random stream (splitmix64). The i-th draw is a
/// pure function of (seed, i), so identical seed and draw order reproduce the
/// same values on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  /// Standard normal via Box-Muller (two uniform draws per sample).
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// 64-bit FNV-1a of a label, mixed with a base seed. Used to fan one user seed
/// out into independent named sub-streams (data, init, dropout, gumbel).
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace trace

#endif
