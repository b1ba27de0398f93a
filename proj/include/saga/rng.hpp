#pragma once

#include <cstdint>
#include <random>

namespace saga {

// All randomness in the library flows through this engine. Child streams are
// derived from (seed, a, b) so concurrent or reordered work cannot change
// results.
using Rng = std::mt19937_64;

// splitmix64-style mixing of a base seed with up to two stream selectors.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a = 0,
                       std::uint64_t b = 0);

Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

// Uniform draw in [0, 1) with 53 bits of randomness.
double uniform_unit(Rng& rng);

double uniform_in(Rng& rng, double lo, double hi);

// Standard normal via Box-Muller; consumes exactly two engine draws.
double gaussian(Rng& rng);

// Unbiased integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace saga
