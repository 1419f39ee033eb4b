#include "litevae/rng.hpp"

#include <cmath>

namespace litevae {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng Rng::fork(uint64_t seed, uint64_t stream, uint64_t step) {
    uint64_t s = seed;
    uint64_t a = splitmix64(s);
    s ^= stream * 0x2545f4914f6cdd1dULL;
    uint64_t b = splitmix64(s);
    s ^= step * 0xda942042e4dd58b5ULL;
    uint64_t c = splitmix64(s);
    return Rng(a ^ (b + 0x9e3779b97f4a7c15ULL) ^ (c << 1));
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace litevae
