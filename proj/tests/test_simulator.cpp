#include "doctest.h"

#include <cmath>
#include <random>

#include "odcal/error.hpp"
#include "odcal/metrics.hpp"
#include "odcal/network.hpp"
#include "odcal/simulator.hpp"

using namespace odcal;

namespace {

struct Ramp {
  Scenario sc = build_archetype(Archetype::kSimpleRamp);
  ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  ODBounds bounds = ODBounds::uniform(3, 0.0, 2500.0);

  Simulator sim(SimMode mode) const {
    SimulatorConfig c;
    c.mode = mode;
    return Simulator(sc, pairs, c);
  }
  ODVector od(double a, double b, double c) const { return {{a, b, c}, bounds}; }
};

}  // namespace

TEST_CASE("logit split") {
  const std::vector<double> two{100.0, 160.0};
  const auto p = logit_probabilities(two, 60.0);
  CHECK(p[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  const auto hard = logit_probabilities(two, 0.0);
  CHECK(hard[0] == 1.0);
  CHECK(hard[1] == 0.0);
  const std::vector<double> tie{5.0, 5.0, 9.0};
  CHECK(logit_probabilities(tie, 0.0)[0] == 1.0);
  const std::vector<double> far{0.0, 1e6};
  const auto q = logit_probabilities(far, 1.0);
  CHECK(q[0] == 1.0);
  CHECK(std::isfinite(q[1]));
}

TEST_CASE("simple ramp counts follow the demand by hand") {
  const Ramp r;
  REQUIRE(r.pairs.dimension() == 3);
  CHECK(r.pairs.pairs[0] == ODPair{0, 1});
  CHECK(r.pairs.pairs[1] == ODPair{0, 2});
  CHECK(r.pairs.pairs[2] == ODPair{1, 2});
  const Simulator sim = r.sim(SimMode::kDeterministic);
  // upstream: 0->1, 0->2; between: all; downstream: 0->2, 1->2
  const SimulationResult res = sim.run(r.od(20, 100, 50), 1);
  CHECK(res.counts == std::vector<std::int64_t>{120, 170, 150});
  const SimulationResult zero = sim.run(r.od(0, 0, 0), 1);
  CHECK(zero.counts == std::vector<std::int64_t>{0, 0, 0});
  for (double v : zero.speeds) CHECK(v == doctest::Approx(29.0));
}

TEST_CASE("runs are pure in (od, seed)") {
  const Ramp r;
  const Simulator sim = r.sim(SimMode::kStochastic);
  const ODVector x = r.od(400, 900, 300);
  CHECK(sim.run(x, 5) == sim.run(x, 5));
  CHECK(sim.run(x, 5).counts != sim.run(x, 6).counts);
  const Simulator det = r.sim(SimMode::kDeterministic);
  CHECK(det.run(x, 5).counts == det.run(x, 6).counts);
  CHECK(simulate(sim, x, 5) == sim.run(x, 5));
}

TEST_CASE("counts never exceed demand and respect mainline conservation") {
  const Ramp r;
  const Simulator sim = r.sim(SimMode::kDeterministic);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 2500.0);
  for (int t = 0; t < 200; ++t) {
    const double a = u(rng), b = u(rng), c = u(rng);
    const auto res = sim.run(r.od(a, b, c), 0);
    // Slack for rounding each sensor count.
    CHECK(res.counts[0] <= std::llround(a + b) + 1);
    CHECK(res.counts[1] <= std::llround(a + b + c) + 1);
    CHECK(res.counts[2] <= std::llround(b + c) + 1);
    CHECK(res.counts[1] >= res.counts[0] - 1);   // merge adds
    CHECK(res.counts[2] <= res.counts[1] + 1);   // diverge removes
    for (double v : res.speeds) {
      CHECK(v > 0.0);
      CHECK(v <= 29.0);
    }
  }
}

TEST_CASE("more demand never lowers a count and never raises a speed") {
  const Ramp r;
  const Simulator sim = r.sim(SimMode::kDeterministic);
  for (int k = 0; k < 3; ++k) {
    std::vector<double> x{300, 300, 300};
    auto prev = sim.run({x, r.bounds}, 0);
    for (int step = 0; step < 40; ++step) {
      x[static_cast<std::size_t>(k)] += 50;
      const auto next = sim.run({x, r.bounds}, 0);
      for (std::size_t s = 0; s < 3; ++s) {
        CHECK(next.counts[s] >= prev.counts[s]);
        CHECK(next.speeds[s] <= prev.speeds[s]);
      }
      prev = next;
    }
  }
}

TEST_CASE("heavy demand saturates the link") {
  Ramp r;
  r.bounds = ODBounds::uniform(3, 0.0, 50000.0);
  const Simulator sim = r.sim(SimMode::kDeterministic);
  const auto res = sim.run(r.od(0, 40000, 0), 0);
  const double cap = sim.network().links()[1].capacity;  // upstream mainline
  CHECK(static_cast<double>(res.counts[0]) <= cap + 1);
}

TEST_CASE("stochastic mean tracks the deterministic count") {
  const Ramp r;
  const Simulator sto = r.sim(SimMode::kStochastic), det = r.sim(SimMode::kDeterministic);
  const ODVector x = r.od(250, 800, 450);
  const auto expect = det.run(x, 0).counts;
  std::vector<double> sum(3, 0.0);
  const int n = 1000;
  for (int s = 0; s < n; ++s) {
    const auto c = sto.run(x, static_cast<std::uint64_t>(s)).counts;
    for (std::size_t i = 0; i < 3; ++i) sum[i] += static_cast<double>(c[i]);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    // Poisson sd of the mean is sqrt(lambda / n); allow 4 of them plus rounding.
    const double tol = 4.0 * std::sqrt(static_cast<double>(expect[i]) / n) + 0.5;
    CHECK(std::abs(sum[i] / n - static_cast<double>(expect[i])) < tol);
  }
}

TEST_CASE("ground truth replications and zero error at the truth") {
  const Ramp r;
  const Simulator det = r.sim(SimMode::kDeterministic);
  const GroundTruth g = generate_ground_truth(det, r.bounds, 3, 20);
  CHECK(g.replications == 1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g.x_star[i] >= 625.0);
    CHECK(g.x_star[i] <= 1875.0);
  }
  const auto sim = det.run({g.x_star, r.bounds}, 99).counts;
  std::vector<double> y(sim.begin(), sim.end());
  CHECK(nrmse(g.counts(), y) == 0.0);
  CHECK(generate_ground_truth(det, r.bounds, 3, 20).x_star == g.x_star);

  const Simulator sto = r.sim(SimMode::kStochastic);
  const GroundTruth avg = ground_truth_at(sto, r.od(100, 100, 100), 4, 100);
  CHECK(avg.replications == 100);
  CHECK(avg.mode == SimMode::kStochastic);
  CHECK(std::abs(avg.counts()[1] - 300.0) < 4.0 * std::sqrt(300.0 / 100.0) + 0.5);
  CHECK(std::abs(ground_truth_at(sto, r.od(100, 100, 100), 4, 100).counts()[0] - 200.0) < 5.0);
  CHECK_THROWS_AS(ground_truth_at(sto, r.od(1, 1, 1), 4, 0), ConfigError);
}

TEST_CASE("simulator validation") {
  const Ramp r;
  const Simulator sim = r.sim(SimMode::kDeterministic);
  CHECK_THROWS_AS(sim.run({{1.0, 2.0}, ODBounds::uniform(2, 0, 10)}, 0), ValidationError);
  CHECK_THROWS_AS(sim.run(r.od(-5, 1, 1), 0), DomainError);
  SimulatorConfig bad;
  bad.od = {100.0, 50.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SimulatorConfig neg;
  neg.theta = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  // A pair with no path cannot be routed.
  ODPairSet backwards{{{2, 0}}};
  CHECK_THROWS_AS(Simulator(r.sc, backwards, SimulatorConfig{}), RoutingError);
}
