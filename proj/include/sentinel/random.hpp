#pragma once

#include <cstdint>
#include <random>

namespace sentinel {

// Independent, reproducible generator for (seed, stream, index). Every source
// of randomness in a run draws from its own stream.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
}

namespace streams {
inline constexpr std::uint64_t kSynthData = 1;
inline constexpr std::uint64_t kPartition = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kClientInit = 4;
inline constexpr std::uint64_t kClientTrain = 5;
inline constexpr std::uint64_t kGlobalInit = 6;
inline constexpr std::uint64_t kSelection = 7;
inline constexpr std::uint64_t kDropout = 8;
}  // namespace streams

}  // namespace sentinel
