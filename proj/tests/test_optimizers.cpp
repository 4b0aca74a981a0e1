#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>

#include "odcal/error.hpp"
#include "odcal/optimizers.hpp"
#include "odcal/seed.hpp"

using namespace odcal;

namespace {

double sphere(const Eigen::VectorXd& x, std::uint64_t) { return (x.array() - 0.3).square().sum(); }

bool non_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) return false;
  }
  return true;
}

OptimizerConfig small_config(Method m, std::uint64_t seed) {
  OptimizerConfig c;
  c.method = m;
  c.init_points = 6;
  c.epochs = 8;
  c.batch_size = 2;
  c.num_restarts = 2;
  c.raw_samples = 32;
  c.sample_shape = 16;
  c.gp_restarts = 2;
  c.gp_max_iters = 30;
  c.seed = seed;
  return c;
}

// Independent model of the trust-region rules used as the oracle below.
struct RefRegion {
  double length = 0.8;
  int succ = 0, fail = 0, tol = 0;
  bool restart = false;

  void step(bool success) {
    restart = false;
    if (success) {
      succ += 1;
      fail = 0;
    } else {
      fail += 1;
      succ = 0;
    }
    if (succ == 3) {
      length = std::min(1.6, length * 2);
      succ = 0;
    }
    if (fail == tol) {
      length = length / 2;
      fail = 0;
    }
    if (length < std::pow(0.5, 7)) {
      length = 0.8;
      succ = fail = 0;
      restart = true;
    }
  }
};

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_method("random") == Method::kRandom);
  CHECK(parse_method("spsa") == Method::kSpsa);
  CHECK(parse_method("vanilla-bo") == Method::kVanillaBo);
  CHECK(parse_method("saasbo") == Method::kSaasBo);
  CHECK(parse_method("turbo") == Method::kTurbo);
  for (Method m : {Method::kRandom, Method::kSpsa, Method::kVanillaBo, Method::kSaasBo, Method::kTurbo}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("cmaes"), ConfigError);
}

TEST_CASE("config validation") {
  OptimizerConfig c;
  CHECK_NOTHROW(c.validate());
  for (auto mutate : std::vector<std::function<void(OptimizerConfig&)>>{
           [](OptimizerConfig& x) { x.init_points = 0; },
           [](OptimizerConfig& x) { x.epochs = 0; },
           [](OptimizerConfig& x) { x.batch_size = 0; },
           [](OptimizerConfig& x) { x.num_restarts = 0; },
           [](OptimizerConfig& x) { x.raw_samples = 0; },
           [](OptimizerConfig& x) { x.sample_shape = 0; }}) {
    OptimizerConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("initial design is shared, uniform and bounded") {
  const PointMatrix a = initial_design(4, 10, 77), b = initial_design(4, 10, 77);
  CHECK(a == b);
  CHECK(a != initial_design(4, 10, 78));

  ODBounds one = ODBounds::uniform(1, 1.0, 2500.0);
  const PointMatrix p = initial_design(one, 1, 3);
  CHECK(p.rows() == 1);
  CHECK(p(0, 0) >= 1.0);
  CHECK(p(0, 0) <= 2500.0);

  const PointMatrix big = initial_design(3, 10000, 5);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(big.col(j).mean() - 0.5) < 0.015);
  CHECK_THROWS_AS(initial_design(3, 0, 1), ConfigError);
}

TEST_CASE("evaluation log keeps the earliest of tied minima") {
  EvaluationLog log;
  CHECK_THROWS_AS(log.incumbent_index(), StateError);
  for (double v : {3.0, 1.0, 2.0, 1.0, 5.0}) log.add({Eigen::VectorXd::Zero(1), v, 0, 0});
  CHECK(log.incumbent_index() == 1);
  CHECK(log.incumbent_value() == 1.0);
  CHECK(log.values(2).size() == 3);
  CHECK(log.points(1).rows() == 4);
}

TEST_CASE("SPSA constants follow the recommended settings") {
  const SpsaConstants s = spsa_constants(50);
  CHECK(s.A == 5.0);
  CHECK(s.a == 0.29);
  CHECK(s.c == 0.1);
  CHECK(s.alpha == 0.602);
  CHECK(s.gamma == 0.101);
  CHECK(s.a_k(0) == doctest::Approx(0.29 / std::pow(6.0, 0.602)).epsilon(1e-14));
  CHECK(s.a_k(0) == doctest::Approx(0.0986).epsilon(1e-3));
  CHECK(s.c_k(0) == 0.1);
  CHECK(s.c_k(9) == doctest::Approx(0.1 / std::pow(10.0, 0.101)));
  CHECK(spsa_constants(100).A == 10.0);
  CHECK(spsa_constants(200).a == doctest::Approx(std::round(0.1 * std::pow(21.0, 0.602) * 100) / 100));
}

TEST_CASE("SPSA is exact on a 1-D quadratic") {
  Eigen::VectorXd delta(1);
  delta << 1.0;
  const Eigen::VectorXd g = spsa_gradient(0.6 * 0.6, 0.4 * 0.4, 0.1, delta);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("SPSA gradient estimator is unbiased on a quadratic") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd b(5, 5);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n01(rng);
  const Eigen::MatrixXd a = b.transpose() * b;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(5, 0.4);
  const Eigen::VectorXd truth = 2.0 * a * x0;
  auto f = [&](const Eigen::VectorXd& x) { return x.dot(a * x); };
  const int n = 10000;
  const double ck = 0.1;
  Eigen::MatrixXd draws(5, n);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd d = spsa_delta(5, stream_seed(1, Stream::kSpsaPerturbation, k));
    draws.col(k) = spsa_gradient(f(x0 + ck * d), f(x0 - ck * d), ck, d);
  }
  const Eigen::VectorXd mean = draws.rowwise().mean();
  for (int i = 0; i < 5; ++i) {
    const double var = (draws.row(i).array() - mean[i]).square().sum() / (n - 1);
    CHECK(std::abs(mean[i] - truth[i]) <= 3.0 * std::sqrt(var / n));
  }
}

TEST_CASE("SPSA step clips and attaches the failing point") {
  SpsaState s{Eigen::VectorXd::Constant(3, 0.98), 0};
  const SpsaConstants c = spsa_constants(10);
  const SpsaState next = spsa_step(
      s, c, [](const Eigen::VectorXd& p, const Eigen::VectorXd& m) { return std::make_pair(-1e6 * p.sum(), 1e6 * m.sum()); }, 4);
  CHECK(next.k == 1);
  CHECK(next.d.minCoeff() >= 0.0);
  CHECK(next.d.maxCoeff() <= 1.0);

  try {
    spsa_step(s, c, [](const Eigen::VectorXd&, const Eigen::VectorXd&) -> std::pair<double, double> {
      throw std::runtime_error("simulator crashed");
    }, 4);
    FAIL("expected an oracle error");
  } catch (const OracleError& e) {
    CHECK(e.point().size() == 3);
    for (double v : e.point()) CHECK(v <= 1.0);
  }
}

TEST_CASE("trust-region failure tolerance spot values") {
  CHECK(turbo_failure_tolerance(151, 5) == 31);
  CHECK(turbo_failure_tolerance(3, 2) == 2);
  CHECK(turbo_failure_tolerance(1, 1) == 4);
  CHECK(turbo_failure_tolerance(21, 3) == 7);
  CHECK(make_trust_region(151, 5).failure_tolerance == 31);
  CHECK(make_trust_region(3, 2).length == 0.8);
}

TEST_CASE("trust-region transitions match the reference over every short history") {
  for (auto [dim, batch] : std::vector<std::pair<int, int>>{{3, 2}, {1, 1}, {10, 4}, {2, 8}}) {
    const int tol = turbo_failure_tolerance(dim, batch);
    for (int len = 1; len <= 14; ++len) {
      for (int mask = 0; mask < (1 << len); ++mask) {
        TrustRegionState s = make_trust_region(dim, batch);
        s.best_value = 100.0;
        RefRegion ref;
        ref.tol = tol;
        double best = 100.0;
        for (int t = 0; t < len; ++t) {
          const bool success = (mask >> t) & 1;
          // Equal to the incumbent is not an improvement.
          const double v = success ? best - 1.0 : best;
          s = turbo_update(s, {v + 0.5, v});
          ref.step(success);
          best = ref.restart ? std::numeric_limits<double>::infinity() : std::min(best, v);
          if (ref.restart) s.best_value = best = 100.0, ref.restart = true;
          REQUIRE(s.length == ref.length);
          REQUIRE(s.success_count == ref.succ);
          REQUIRE(s.failure_count == ref.fail);
          REQUIRE(s.restart == ref.restart);
          REQUIRE((s.success_count == 0 || s.failure_count == 0));
        }
      }
    }
  }
}

TEST_CASE("trust-region named rules") {
  TrustRegionState s = make_trust_region(3, 2);
  s.best_value = 10.0;
  s = turbo_update(s, {9.0});
  s = turbo_update(s, {8.0});
  CHECK(s.length == 0.8);
  s = turbo_update(s, {7.0});
  CHECK(s.length == 1.6);
  for (double v : {6.0, 5.0, 4.0}) s = turbo_update(s, {v});
  CHECK(s.length == 1.6);  // capped

  TrustRegionState f = make_trust_region(3, 2);
  f.best_value = 1.0;
  f = turbo_update(f, {1.0});
  CHECK(f.failure_count == 1);
  f = turbo_update(f, {2.0});
  CHECK(f.length == 0.4);
  CHECK(f.failure_count == 0);

  TrustRegionState r = make_trust_region(3, 2);
  r.best_value = 0.0;
  r.length = 0.0078125;  // 0.5^7: still allowed
  r.failure_count = 1;
  r = turbo_update(r, {1.0});
  CHECK(r.restart);
  CHECK(r.length == 0.8);
  CHECK(std::isinf(r.best_value));
  CHECK_THROWS_AS(turbo_update(r, {}), ValidationError);
}

TEST_CASE("trust-region weights and perturbation probability") {
  const Eigen::VectorXd w = turbo_weights(Eigen::Vector2d(1.0, 4.0));
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(2.0).epsilon(1e-14));
  const Eigen::VectorXd w3 = turbo_weights(Eigen::Vector3d(0.2, 0.9, 3.1));
  CHECK(std::exp(w3.array().log().mean()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(turbo_perturbation_probability(3) == 1.0);
  CHECK(turbo_perturbation_probability(100) == 0.2);
  CHECK_THROWS_AS(turbo_weights(Eigen::Vector2d(1.0, 0.0)), ValidationError);
}

TEST_CASE("trust-region candidates respect the region and the mask density") {
  const Eigen::VectorXd center = Eigen::VectorXd::Constant(100, 0.5);
  const TurboRegion region = turbo_region(center, Eigen::VectorXd::Ones(100), 0.8);
  const PointMatrix c = turbo_candidates(center, region, 10000, 3);
  double perturbed = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    int row = 0;
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      CHECK_FALSE((c(i, j) < region.lower[j] || c(i, j) > region.upper[j]));
      if (c(i, j) != center[j]) ++row;
    }
    CHECK(row >= 1);
    perturbed += row;
  }
  CHECK(std::abs(perturbed / (c.rows() * 100.0) - 0.2) < 0.012);

  // Region edges clip at the cube.
  const Eigen::Vector2d corner(0.95, 0.02);
  const TurboRegion clipped = turbo_region(corner, Eigen::Vector2d(1.0, 1.0), 0.8);
  CHECK(clipped.upper[0] == 1.0);
  CHECK(clipped.lower[1] == 0.0);
  CHECK(clipped.lower[0] == doctest::Approx(0.55));

  // At least one coordinate moves even in low mask probability.
  const PointMatrix small = turbo_candidates(Eigen::VectorXd::Constant(3, 0.5),
                                             turbo_region(Eigen::VectorXd::Constant(3, 0.5), Eigen::VectorXd::Ones(3), 0.4),
                                             50, 1);
  for (Eigen::Index i = 0; i < small.rows(); ++i) CHECK((small.row(i).array() != 0.5).all());
}

TEST_CASE("Thompson proposals are distinct, in region, and signal collapse") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix x(12, 2);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) {
    x(i, 0) = u(rng), x(i, 1) = u(rng);
    y[i] = sphere(x.row(i).transpose(), 0);
  }
  const GpModel m = GpModel::fit(x, y, {});
  TrustRegionState s = make_trust_region(2, 3);
  const Eigen::Vector2d center(0.3, 0.3);
  const TurboProposal p = turbo_propose(m, s, center, 3, 64, 9);
  CHECK_FALSE(p.collapsed);
  CHECK(p.points.rows() == 3);
  const TurboRegion region = turbo_region(center, m.kernel().lengthscales, s.length);
  std::set<std::pair<double, double>> seen;
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(p.points(i, 0) >= region.lower[0]);
    CHECK(p.points(i, 1) <= region.upper[1]);
    seen.insert({p.points(i, 0), p.points(i, 1)});
  }
  CHECK(seen.size() == 3);
  CHECK(turbo_propose(m, s, center, 3, 64, 9).points == p.points);

  s.length = 1e-14;
  CHECK(turbo_propose(m, s, center, 3, 64, 9).collapsed);
  CHECK_THROWS_AS(turbo_propose(m, s, center, 3, 2, 9), ConfigError);
}

TEST_CASE("budget accounting, monotone traces and determinism for every method") {
  for (Method method : {Method::kRandom, Method::kSpsa, Method::kVanillaBo, Method::kSaasBo, Method::kTurbo}) {
    CAPTURE(to_string(method));
    FunctionObjective obj(3, sphere);
    OptimizerConfig c = small_config(method, 5);
    const RunResult r = run_optimizer(c, obj);
    REQUIRE(r.completed);
    CHECK(r.log.size() == 6u + 8u * 2u);  // SPSA spends 2 per epoch, b = 2 here
    CHECK(r.trace.size() == 9u);
    CHECK(non_increasing(r.trace));
    CHECK(r.trace.back() == r.log.incumbent_value());
    for (const auto& rec : r.log.records()) {
      CHECK(rec.point.minCoeff() >= 0.0);
      CHECK(rec.point.maxCoeff() <= 1.0);
    }
    const RunResult again = run_optimizer(c, obj);
    CHECK(again.trace == r.trace);
    if (method == Method::kTurbo) CHECK(r.tr_lengths.size() == 8u);
  }
}

TEST_CASE("batch methods spend init + T b evaluations") {
  FunctionObjective obj(3, sphere);
  OptimizerConfig c = small_config(Method::kRandom, 1);
  c.init_points = 10;
  c.epochs = 50;
  c.batch_size = 2;
  CHECK(run_optimizer(c, obj).log.size() == 110u);
  c.method = Method::kSpsa;
  c.batch_size = 3;
  CHECK(run_optimizer(c, obj).log.size() == 110u);  // SPSA: 2 per epoch regardless of b
}

TEST_CASE("proposals stay in bounds under random configurations") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    const Method m = static_cast<Method>(trial % 5);
    OptimizerConfig c = small_config(m, rng());
    c.batch_size = 1 + static_cast<int>(rng() % 3);
    c.epochs = 3 + static_cast<int>(rng() % 4);
    c.kernel = static_cast<KernelKind>(rng() % 3);
    c.mc_batch = rng() % 2;
    const std::size_t dim = 1 + rng() % 4;
    FunctionObjective obj(dim, [](const Eigen::VectorXd& x, std::uint64_t s) {
      return std::abs(std::sin(7 * x.sum())) + 1e-3 * static_cast<double>(s % 7);
    });
    const RunResult r = run_optimizer(c, obj);
    REQUIRE(r.completed);
    for (const auto& rec : r.log.records()) {
      CHECK(rec.point.minCoeff() >= 0.0);
      CHECK(rec.point.maxCoeff() <= 1.0);
    }
    CHECK(non_increasing(r.trace));
  }
}

TEST_CASE("shared initial pool gives identical first rows for every method") {
  const PointMatrix pool = initial_design(2, 5, 42);
  FunctionObjective obj(2, sphere);
  std::vector<double> first;
  for (Method m : {Method::kRandom, Method::kVanillaBo, Method::kTurbo}) {
    const RunResult r = run_optimizer(small_config(m, 42), obj, pool);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(r.log[static_cast<std::size_t>(i)].point == pool.row(i).transpose());
    first.push_back(r.trace.front());
  }
  CHECK(first[0] == first[1]);
  CHECK(first[1] == first[2]);
}

TEST_CASE("objective failure keeps the partial log") {
  int calls = 0;
  FunctionObjective obj(2, [&](const Eigen::VectorXd& x, std::uint64_t) {
    if (++calls > 9) throw std::runtime_error("simulator crashed");
    return x.sum();
  });
  const RunResult r = run_optimizer(small_config(Method::kRandom, 1), obj);
  CHECK_FALSE(r.completed);
  CHECK(r.error.find("simulator crashed") != std::string::npos);
  CHECK(r.log.size() == 8u);  // 6 init + one full batch of 2

  FunctionObjective nan_obj(2, [](const Eigen::VectorXd&, std::uint64_t) { return std::nan(""); });
  const RunResult n = run_optimizer(small_config(Method::kVanillaBo, 1), nan_obj);
  CHECK_FALSE(n.completed);
  CHECK(n.log.size() == 0u);

  OptimizerConfig bad = small_config(Method::kTurbo, 1);
  bad.epochs = 0;
  CHECK_THROWS_AS(run_optimizer(bad, obj), ConfigError);
}

TEST_CASE("trust region restarts when it collapses on a flat objective") {
  FunctionObjective flat(2, [](const Eigen::VectorXd&, std::uint64_t) { return 1.0; });
  OptimizerConfig c = small_config(Method::kTurbo, 3);
  c.batch_size = 4;  // failure tolerance 1: halves every epoch
  c.epochs = 12;
  const RunResult r = run_optimizer(c, flat);
  REQUIRE(r.completed);
  CHECK(r.turbo_restarts >= 1);
  CHECK(r.log.size() == 6u + 12u * 4u);
  bool saw_reset = false;
  for (std::size_t i = 1; i < r.tr_lengths.size(); ++i) saw_reset = saw_reset || r.tr_lengths[i] > r.tr_lengths[i - 1];
  CHECK(saw_reset);
}

TEST_CASE("sparsity penalty isolates the active dimension") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix x(60, 10);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 10; ++j) x(i, j) = u(rng);
    y[i] = std::sin(5 * x(i, 3)) + x(i, 3);
  }
  FitOptions saas;
  saas.prior = {1.0, 0.1};
  saas.seed = 2;
  const GpModel m = GpModel::fit(x, y, saas);
  const Eigen::VectorXd inv = m.kernel().lengthscales.cwiseInverse();
  for (int j = 0; j < 10; ++j) {
    if (j != 3) CHECK(inv[3] >= 5.0 * inv[j]);
  }

  FitOptions plain, zero;
  plain.seed = zero.seed = 2;
  zero.prior = {0.0, 0.1};
  const GpModel a = GpModel::fit(x, y, plain), b = GpModel::fit(x, y, zero);
  CHECK((a.hyper().pack() - b.hyper().pack()).cwiseAbs().maxCoeff() < 1e-9);
}
