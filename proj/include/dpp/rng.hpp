#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dpp {

using Rng = std::mt19937_64;

/// Independent stream keyed by a base seed plus any number of tags (epoch, phase, ...).
/// Changing one tag never perturbs streams with other tags.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq keyed(words.begin(), words.end());
  return Rng(keyed);
}

// Stream tags shared across modules.
enum class StreamTag : std::uint64_t {
  kBlobs = 1,
  kLabelNoise = 2,
  kEmbeddings = 3,
  kModelInit = 4,
  kAdapterShuffle = 5,
  kEpochShuffle = 6,
  kRandomSelection = 7,
};

inline Rng make_rng(std::uint64_t seed, StreamTag tag) {
  return make_rng(seed, {static_cast<std::uint64_t>(tag)});
}

inline Rng make_rng(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  return make_rng(seed, {static_cast<std::uint64_t>(tag), index});
}

}  // namespace dpp
