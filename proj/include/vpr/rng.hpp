#pragma once

#include <cstdint>
#include <random>

namespace vpr {

// splitmix64 finalizer; used to derive independent, reproducible
// sub-streams from a single run seed.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index = 0) {
    return mix64(seed ^ mix64(stream ^ mix64(index)));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed, uint64_t stream = 0, uint64_t index = 0) {
    return Rng(derive_seed(seed, stream, index));
}

// Stream tags so independent consumers of one run seed never collide.
namespace stream {
inline constexpr uint64_t kInit = 1;
inline constexpr uint64_t kDataset = 2;
inline constexpr uint64_t kSplit = 3;
inline constexpr uint64_t kPretrain = 4;
inline constexpr uint64_t kFinetune = 5;
inline constexpr uint64_t kPrune = 6;
inline constexpr uint64_t kKmeans = 7;
inline constexpr uint64_t kProbe = 8;
}  // namespace stream

}  // namespace vpr
