#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "odcal/kernel.hpp"

namespace odcal {

// Sobol sequence with Joe-Kuo direction numbers and optional linear matrix
// scrambling plus digital shift. Unscrambled sequences start at index 1 (the
// origin is skipped); scrambled sequences start at index 0.
class SobolEngine {
 public:
  static constexpr int kBits = 32;

  SobolEngine(std::size_t dim, bool scramble, std::uint64_t seed = 0);

  static std::size_t max_dimension();

  std::size_t dimension() const { return dim_; }

  // Next `count` points, one per row.
  PointMatrix draw(std::size_t count);

  // Point at an absolute sequence index (natural, not Gray-code, order).
  Eigen::VectorXd point(std::uint64_t index) const;

 private:
  std::size_t dim_;
  bool scrambled_;
  std::uint64_t next_;
  std::vector<std::array<std::uint32_t, kBits>> directions_;
  std::vector<std::uint32_t> shift_;
};

enum class CandidateScheme { kSobol, kStratified };

// Source of space-filling points in [0,1]^D: scrambled Sobol when D fits the
// direction-number table, otherwise seeded Latin hypercube strata.
class CandidateGenerator {
 public:
  CandidateGenerator(std::size_t dim, std::uint64_t seed);

  CandidateScheme scheme() const { return scheme_; }
  std::size_t dimension() const { return dim_; }

  PointMatrix generate(std::size_t count);

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  CandidateScheme scheme_;
};

}  // namespace odcal
