#pragma once

#include <cstdint>

namespace litevae {

// Deterministic, platform-independent RNG (splitmix64 core, Box-Muller normals).
// All randomness in the library flows through this type so that fixed seeds
// reproduce runs bit-exactly, independent of libstdc++ distribution details.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    // Derives an independent stream from (seed, stream, step). Used to make
    // per-step randomness (batch indices, latent noise) reconstructible when
    // resuming from a checkpoint.
    static Rng fork(uint64_t seed, uint64_t stream, uint64_t step = 0);

    uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();

    // Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n);

    // Standard normal via Box-Muller (no cached spare; two uniforms per call).
    double normal();

private:
    uint64_t state_;
};

}  // namespace litevae
