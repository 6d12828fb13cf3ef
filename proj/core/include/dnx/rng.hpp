#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dnx {

// All randomness is std::mt19937_64. A named sub-stream is seeded from the
// run seed and an FNV-1a hash of the stream name through std::seed_seq, so
// each pipeline stage draws from an independent, reproducible stream.
using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view bytes);

Rng make_stream(std::uint64_t seed, std::string_view name);
Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index);

}  // namespace dnx
