#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace nastl {

using Rng = std::mt19937_64;

uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull);
uint64_t splitmix64(uint64_t x);

// Named sub-stream seed: every stochastic element of a run draws from its own
// stream so that changing one consumer does not shift another.
uint64_t derive_seed(uint64_t master, std::string_view name);
uint64_t derive_seed(uint64_t master, std::string_view name, uint64_t index);

inline Rng make_rng(uint64_t master, std::string_view name) {
    return Rng(derive_seed(master, name));
}

// Uniform integer in [0, n) using rejection on the raw 64-bit output. Kept
// independent of <random> distributions so streams are stable across
// standard library implementations.
uint64_t uniform_index(Rng& rng, uint64_t n);

// Uniform double in [0, 1) with 53 bits of randomness.
double uniform01(Rng& rng);

// Standard normal via Box-Muller; consumes exactly two draws per call.
double standard_normal(Rng& rng);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

}  // namespace nastl
