#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace pirlab {

// Deterministic, platform-independent PRNG (splitmix64 stream). The same
// seed yields the same draw sequence on every platform. Single-owner: do
// not share one instance across threads, fan out with derive().
class SeededRandomness
{
public:
  explicit SeededRandomness(std::uint64_t seed)
    : state_(seed)
  {
  }

  std::uint64_t next_u64()
  {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Unbiased uniform draw from [0, bound); rejection keeps it exact.
  std::uint64_t next_below(std::uint64_t bound)
  {
    if (bound <= 1) {
      return 0;
    }
    const std::uint64_t threshold = (0ULL - bound) % bound;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r < threshold);
    return r % bound;
  }

  // Fisher-Yates permutation of [0, n), uniform over all n! orderings.
  std::vector<std::uint32_t> permutation(std::uint32_t n)
  {
    std::vector<std::uint32_t> p(n);
    std::iota(p.begin(), p.end(), 0U);
    for (std::uint32_t i = n; i > 1; --i) {
      const std::uint64_t j = next_below(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  // Independent child generator; the fan-out mechanism for concurrent use.
  SeededRandomness derive(std::uint64_t index) const
  {
    SeededRandomness mix(state_ ^ (0x6a09e667f3bcc909ULL + index * 0x3c6ef372fe94f82bULL));
    mix.next_u64();
    return SeededRandomness(mix.next_u64());
  }

private:
  std::uint64_t state_;
};

} // namespace pirlab
