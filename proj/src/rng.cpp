#include "lesiondet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace lesiondet {

std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    // Scramble the user seed so that nearby seeds (0,1,2,...) give
    // unrelated engine states.
    std::uint64_t s = seed;
    engine_.seed(splitmix64_next(s));
}

std::uint64_t Rng::next_u64() {
    return engine_();
}

std::uint64_t Rng::uniform_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_below: n must be positive");
    // Lemire multiply-shift; the modulo bias is rejected away.
    while (true) {
        std::uint64_t x = next_u64();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        std::uint64_t lo = static_cast<std::uint64_t>(m);
        if (lo >= n || lo >= std::uint64_t(-n) % n) {
            return static_cast<std::uint64_t>(m >> 64);
        }
    }
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("Rng::uniform: requires lo < hi");
    return lo + (hi - lo) * uniform01();
}

bool Rng::bernoulli(double p) {
    return uniform01() < p;
}

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

Rng Rng::child(std::uint64_t tag) const {
    return Rng(derive_seed(seed_, tag));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64_next(s);
    s ^= a + 0x9e3779b97f4a7c15ull;
    h ^= splitmix64_next(s);
    s ^= b + 0xd1b54a32d192ed03ull;
    h ^= splitmix64_next(s);
    return h;
}

} // namespace lesiondet
