#pragma once

#include <cstdint>
#include <random>

namespace lesiondet {

// splitmix64 step; used to hash seeds and derive independent child streams.
std::uint64_t splitmix64_next(std::uint64_t& state);

// Deterministic random source. Wraps std::mt19937_64 (whose raw output
// sequence is fully specified by the standard) but implements all
// distributions by hand, because std::uniform_*_distribution and
// std::normal_distribution are implementation-defined and would break
// bit-reproducibility across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_below(std::uint64_t n);

    // Uniform double in [0, 1) with 53-bit resolution.
    double uniform01();

    // Uniform double in [lo, hi). Requires lo < hi.
    double uniform(double lo, double hi);

    // Bernoulli draw with probability p of true.
    bool bernoulli(double p);

    // Standard normal deviate (Box-Muller; caches the spare value).
    double gaussian();

    // Independent stream derived from this generator's seed and a tag.
    // Children with distinct tags are decorrelated; deriving a child does
    // not advance this generator.
    Rng child(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable composite seed for per-index substreams (epochs, samples, ...).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

} // namespace lesiondet
