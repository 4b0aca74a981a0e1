#pragma once

#include <cstdint>
#include <initializer_list>

namespace odcal {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Order-sensitive hash of a seed path, e.g. (run seed, epoch, batch index).
// Evaluation seeds derived this way do not depend on evaluation order, so a
// batch may be simulated in parallel.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

// Stream tags keep independent random streams apart for the same run seed.
enum class Stream : std::uint64_t {
  kInitialDesign = 1,
  kEvaluation = 2,
  kSpsaPerturbation = 3,
  kRandomSearch = 4,
  kAcquisition = 5,
  kGpFit = 6,
  kTurbo = 7,
  kGroundTruth = 8,
  kRunSeed = 9,
  kDemand = 10,
};

constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream s,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return derive_seed({seed, static_cast<std::uint64_t>(s), a, b});
}

}  // namespace odcal
