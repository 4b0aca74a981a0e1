#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "odcal/error.hpp"
#include "odcal/sobol.hpp"

using namespace odcal;

namespace {

// Independent recursions for the first two Sobol coordinates: the first is
// the van der Corput sequence, the second uses v_k = v_{k-1} ^ (v_{k-1} >> 1).
double reference_dim(int d, std::uint64_t i) {
  std::uint32_t v = 1u << 31;
  std::uint32_t x = 0;
  for (int bit = 0; i >> bit; ++bit) {
    if ((i >> bit) & 1u) x ^= v;
    v = d == 0 ? v >> 1 : v ^ (v >> 1);
  }
  return x / 4294967296.0;
}

// Star discrepancy of a 2-D set over anchored boxes with corners on the point
// coordinates (closed and open variants).
double star_discrepancy(const PointMatrix& p) {
  const Eigen::Index n = p.rows();
  std::vector<double> xs{1.0}, ys{1.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    xs.push_back(p(i, 0));
    ys.push_back(p(i, 1));
  }
  double worst = 0.0;
  for (double a : xs) {
    for (double b : ys) {
      int open = 0, closed = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (p(i, 0) < a && p(i, 1) < b) ++open;
        if (p(i, 0) <= a && p(i, 1) <= b) ++closed;
      }
      const double vol = a * b;
      worst = std::max({worst, std::abs(open / double(n) - vol), std::abs(closed / double(n) - vol)});
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("unscrambled prefix matches the canonical sequence") {
  SobolEngine e(1, false);
  const PointMatrix p = e.draw(4);
  CHECK(p(0, 0) == 0.5);
  CHECK(p(1, 0) == 0.25);
  CHECK(p(2, 0) == 0.75);
  CHECK(p(3, 0) == 0.125);
}

TEST_CASE("first two coordinates follow the reference recursion") {
  SobolEngine e(2, false);
  for (std::uint64_t i = 1; i < 2000; ++i) {
    const Eigen::VectorXd x = e.point(i);
    CHECK(x(0) == reference_dim(0, i));
    CHECK(x(1) == reference_dim(1, i));
  }
}

TEST_CASE("each unscrambled coordinate is a (0,m,1) net") {
  // First 2^m points (after the skipped origin) plus the origin hit every
  // dyadic interval of length 2^-m exactly once.
  const std::size_t dim = std::min<std::size_t>(SobolEngine::max_dimension(), 40);
  SobolEngine e(dim, false);
  const int m = 7;
  for (std::size_t d = 0; d < dim; ++d) {
    std::vector<int> hit(1 << m, 0);
    hit[0] = 1;  // index 0
    for (std::uint64_t i = 1; i < (1u << m); ++i) ++hit[static_cast<std::size_t>(e.point(i)(d) * (1 << m))];
    CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
  }
}

TEST_CASE("scrambled points are reproducible and in range") {
  SobolEngine a(5, true, 42), b(5, true, 42), c(5, true, 43);
  const PointMatrix pa = a.draw(300), pb = b.draw(300), pc = c.draw(300);
  CHECK(pa == pb);
  CHECK(pa != pc);
  CHECK(pa.minCoeff() >= 0.0);
  CHECK(pa.maxCoeff() < 1.0);
  // Drawing in pieces continues the same sequence.
  SobolEngine d(5, true, 42);
  PointMatrix first = d.draw(100);
  PointMatrix rest = d.draw(200);
  CHECK(first == pa.topRows(100));
  CHECK(rest == pa.bottomRows(200));
}

TEST_CASE("Sobol discrepancy is below uniform random on average") {
  double sobol = 0.0, uniform = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CandidateGenerator g(2, seed);
    sobol += star_discrepancy(g.generate(256));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PointMatrix r(256, 2);
    for (Eigen::Index i = 0; i < 256; ++i) r(i, 0) = u(rng), r(i, 1) = u(rng);
    uniform += star_discrepancy(r);
  }
  CHECK(sobol < uniform);
}

TEST_CASE("candidate generator falls back to strata above the table size") {
  const std::size_t dim = SobolEngine::max_dimension() + 3;
  CandidateGenerator g(dim, 9);
  CHECK(g.scheme() == CandidateScheme::kStratified);
  const PointMatrix p = g.generate(64);
  CHECK(p.rows() == 64);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(p.maxCoeff() < 1.0);
  for (Eigen::Index d = 0; d < p.cols(); d += 17) {
    std::vector<int> hit(64, 0);
    for (Eigen::Index i = 0; i < 64; ++i) ++hit[static_cast<std::size_t>(p(i, d) * 64)];
    CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
  }
  CandidateGenerator h(dim, 9);
  CHECK(h.generate(64) == p);

  CHECK(CandidateGenerator(4, 0).scheme() == CandidateScheme::kSobol);
}

TEST_CASE("invalid dimensions and counts are rejected") {
  CHECK_THROWS_AS(SobolEngine(0, false), ValidationError);
  CHECK_THROWS_AS(SobolEngine(SobolEngine::max_dimension() + 1, false), ValidationError);
  CHECK_THROWS_AS(CandidateGenerator(0, 1), ValidationError);
  CandidateGenerator g(2, 1);
  CHECK_THROWS_AS(g.generate(0), ValidationError);
}
