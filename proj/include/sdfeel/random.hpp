#pragma once

#include <cstdint>
#include <random>

namespace sdfeel {

using Rng = std::mt19937_64;

// Named substreams so that each consumer (dataset, partition, client
// sampler, ...) draws from its own sequence regardless of call order.
enum class StreamTag : std::uint32_t {
  kDataset = 1,
  kPartition = 2,
  kClientSampler = 3,
  kInitialModel = 4,
  kLatencyJitter = 5,
  kProbe = 6,
  kTestSet = 7,
};

inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace sdfeel
