#include "odcal/sobol.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <random>

#include "odcal/error.hpp"
#include "odcal/seed.hpp"

namespace odcal {

namespace {

struct DirectionRow {
  std::uint32_t poly;
  std::vector<std::uint32_t> m;
};

const std::vector<DirectionRow>& direction_table() {
  static const std::vector<DirectionRow> table = {
#include "sobol_table.inc"
  };
  return table;
}

std::array<std::uint32_t, SobolEngine::kBits> direction_numbers(std::size_t dim) {
  constexpr int L = SobolEngine::kBits;
  std::array<std::uint32_t, L> m{};
  if (dim == 0) {
    m.fill(1);
  } else {
    const DirectionRow& row = direction_table()[dim];
    const int s = std::bit_width(row.poly) - 1;
    for (int i = 0; i < s; ++i) m[static_cast<std::size_t>(i)] = row.m[static_cast<std::size_t>(i)];
    for (int i = s; i < L; ++i) {
      std::uint32_t v = m[static_cast<std::size_t>(i - s)];
      std::uint32_t pow2 = 1;
      for (int k = 0; k < s; ++k) {
        pow2 <<= 1;
        if ((row.poly >> (s - 1 - k)) & 1U) v ^= pow2 * m[static_cast<std::size_t>(i - k - 1)];
      }
      m[static_cast<std::size_t>(i)] = v;
    }
  }
  std::array<std::uint32_t, L> v{};
  for (int i = 0; i < L; ++i) v[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i)] << (L - 1 - i);
  return v;
}

}  // namespace

std::size_t SobolEngine::max_dimension() { return direction_table().size(); }

SobolEngine::SobolEngine(std::size_t dim, bool scramble, std::uint64_t seed)
    : dim_(dim), scrambled_(scramble), next_(scramble ? 0 : 1) {
  if (dim == 0) throw ValidationError("Sobol dimension must be at least 1");
  if (dim > max_dimension()) {
    throw ValidationError("Sobol dimension " + std::to_string(dim) + " exceeds table size " +
                          std::to_string(max_dimension()));
  }
  directions_.reserve(dim);
  for (std::size_t j = 0; j < dim; ++j) directions_.push_back(direction_numbers(j));
  shift_.assign(dim, 0);
  if (!scramble) return;

  // Random lower-triangular binary matrix per dimension applied to the
  // direction numbers, then a random digital shift.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (std::size_t j = 0; j < dim; ++j) {
    std::array<std::uint32_t, kBits> rows{};
    for (int i = 0; i < kBits; ++i) {
      // Row i touches columns 0..i (bit 31 is column 0).
      const std::uint32_t upper = 0xffffffffU << (kBits - 1 - i);
      const std::uint32_t diag = 1U << (kBits - 1 - i);
      rows[static_cast<std::size_t>(i)] = (bits(rng) & upper) | diag;
    }
    for (auto& v : directions_[j]) {
      std::uint32_t out = 0;
      for (int i = 0; i < kBits; ++i) {
        if (std::popcount(rows[static_cast<std::size_t>(i)] & v) & 1) out |= 1U << (kBits - 1 - i);
      }
      v = out;
    }
    shift_[j] = bits(rng);
  }
}

Eigen::VectorXd SobolEngine::point(std::uint64_t index) const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(dim_));
  for (std::size_t j = 0; j < dim_; ++j) {
    std::uint32_t x = shift_[j];
    std::uint64_t i = index;
    for (int k = 0; i != 0 && k < kBits; ++k, i >>= 1) {
      if (i & 1U) x ^= directions_[j][static_cast<std::size_t>(k)];
    }
    p[static_cast<Eigen::Index>(j)] = static_cast<double>(x) / 4294967296.0;
  }
  return p;
}

PointMatrix SobolEngine::draw(std::size_t count) {
  PointMatrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < count; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = point(next_++).transpose();
  }
  return out;
}

CandidateGenerator::CandidateGenerator(std::size_t dim, std::uint64_t seed)
    : dim_(dim),
      seed_(seed),
      scheme_(dim <= SobolEngine::max_dimension() ? CandidateScheme::kSobol
                                                  : CandidateScheme::kStratified) {
  if (dim == 0) throw ValidationError("candidate generator needs dimension >= 1");
}

PointMatrix CandidateGenerator::generate(std::size_t count) {
  if (count == 0) throw ValidationError("candidate count must be at least 1");
  const std::uint64_t call_seed = derive_seed({seed_, calls_++});
  if (scheme_ == CandidateScheme::kSobol) {
    SobolEngine engine(dim_, true, call_seed);
    return engine.draw(count);
  }
  std::mt19937_64 rng(call_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim_));
  std::vector<std::size_t> strata(count);
  for (std::size_t j = 0; j < dim_; ++j) {
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    for (std::size_t i = 0; i < count; ++i) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (static_cast<double>(strata[i]) + u(rng)) / static_cast<double>(count);
    }
  }
  return out;
}

}  // namespace odcal
