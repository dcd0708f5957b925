#pragma once

#include <cstdint>
#include <random>

namespace slotid {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

/// Engine for the (master seed, stream id) pair. Streams never overlap in
/// practice, so results do not depend on call order across streams.
inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0) {
  return Rng(stream_seed(master, stream));
}

/// Named stream ids, kept in one place so that they stay distinct.
namespace streams {
inline constexpr std::uint64_t kGeneratorWeights = 1;
inline constexpr std::uint64_t kWishart = 2;
inline constexpr std::uint64_t kTrainLatents = 3;
inline constexpr std::uint64_t kValLatents = 4;
inline constexpr std::uint64_t kTestLatents = 5;
inline constexpr std::uint64_t kModelInit = 6;
inline constexpr std::uint64_t kShuffle = 7;
inline constexpr std::uint64_t kReadoutSubsample = 8;
inline constexpr std::uint64_t kProbes = 9;
inline constexpr std::uint64_t kPartitions = 10;
}  // namespace streams

}  // namespace slotid
