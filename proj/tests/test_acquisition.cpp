#include "doctest.h"

#include <cmath>
#include <random>

#include "odcal/acquisition.hpp"
#include "odcal/error.hpp"
#include "odcal/sobol.hpp"

using namespace odcal;

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

GpModel toy_model(std::uint64_t seed, int n = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    y[i] = std::sin(9 * x(i, 0)) + 0.5 * x(i, 0);
  }
  GpHyper h;
  h.log_lengthscales = Eigen::VectorXd::Constant(1, std::log(0.15));
  h.log_signal_var = 0.0;
  h.log_noise_var = std::log(1e-6);
  return GpModel::with_hyper(x, y, KernelKind::kMatern52, h);
}

}  // namespace

TEST_CASE("log EI closed-form values") {
  CHECK(log_ei(0.0, 1.0, 0.0) == doctest::Approx(std::log(0.3989422804014327)).epsilon(1e-13));
  CHECK(log_ei(0.0, 1.0, 0.0) == doctest::Approx(-0.9189385332046728).epsilon(1e-13));
  CHECK(log_ei(1.0, 0.0, 3.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_ei(3.0, 0.0, 1.0) == kLogZero);
  // Direct formula in the moderate range.
  for (double z : {-0.9, -0.3, 0.4, 1.7, 3.2}) {
    const double s = 0.7, m = 1.0 - z * s;
    const double ei = s * (z * normal_cdf(z) + normal_pdf(z));
    CHECK(log_ei(m, s, 1.0) == doctest::Approx(std::log(ei)).epsilon(1e-10));
  }
  // Through the erfcx branch, against a long-double evaluation.
  for (double z : {-1.5, -4.0, -9.0, -15.0}) {
    const long double zl = z;
    const long double ei = zl * 0.5L * std::erfc(-zl / std::sqrt(2.0L)) +
                           std::exp(-0.5L * zl * zl) / std::sqrt(2.0L * 3.14159265358979323846L);
    CHECK(log_ei(-z, 1.0, 0.0) == doctest::Approx(static_cast<double>(std::log(ei))).epsilon(1e-6));
  }
}

TEST_CASE("log EI stays finite deep in the tail and follows the asymptote") {
  double prev = log_ei(0.0, 1.0, 0.0);
  for (double m = 0.5; m <= 200.0; m += 0.5) {
    const double v = log_ei(m, 1.0, 0.0);
    CHECK(std::isfinite(v));
    CHECK(v < prev);
    prev = v;
    if (m >= 30.0) {
      const double z = -m;
      const double asym = -0.5 * z * z - 0.5 * std::log(2 * M_PI) - 2 * std::log(-z);
      CHECK(std::abs(v - asym) < 4.0 / (z * z));
    }
  }
  // Branch boundaries are continuous.
  for (double zb : {-1.0, -20.0}) {
    CHECK(std::abs(log_ei(-zb + 1e-9, 1.0, 0.0) - log_ei(-zb - 1e-9, 1.0, 0.0)) < 1e-6);
  }
}

TEST_CASE("log EI is monotone in mean and in std above the incumbent") {
  for (double s : {0.1, 0.5, 1.0, 3.0}) {
    double prev = 1e300;
    for (double m = -5.0; m <= 5.0; m += 0.05) {
      const double v = log_ei(m, s, 0.0);
      CHECK(v < prev);
      prev = v;
    }
  }
  for (double m : {0.01, 0.5, 2.0, 8.0}) {
    double prev = -1e300;
    for (double s = 0.05; s <= 5.0; s += 0.05) {
      const double v = log_ei(m, s, 0.0);
      CHECK(v > prev);
      prev = v;
    }
  }
}

TEST_CASE("log EI at z = -3 agrees with an importance-sampled Monte Carlo estimate") {
  // Improvement (z - u)^+ for u ~ N(0,1), sampled from N(z,1) with weights
  // phi(u)/phi(u - z).
  const double z = -3.0;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = z + n01(rng);
    if (u < z) sum += (z - u) * std::exp(-z * u + 0.5 * z * z);
  }
  const double mc = sum / n;
  const double ei = std::exp(log_ei(3.0, 1.0, 0.0));
  CHECK(std::abs(ei - mc) / mc < 0.02);
  CHECK(ei == doctest::Approx(normal_pdf(3.0) - 3.0 * normal_cdf(-3.0)).epsilon(1e-10));
}

TEST_CASE("erfcx matches the direct product and the asymptotic branch") {
  for (double x : {-2.0, 0.0, 0.5, 3.0, 10.0, 24.0}) {
    CHECK(erfcx(x) == doctest::Approx(std::exp(x * x) * std::erfc(x)).epsilon(1e-12));
  }
  for (double x : {25.0, 40.0, 1e3}) {
    CHECK(erfcx(x) == doctest::Approx(1.0 / (x * std::sqrt(M_PI)) * (1 - 0.5 / (x * x))).epsilon(1e-6));
  }
}

TEST_CASE("Monte Carlo qEI of one point matches analytic EI") {
  const GpModel m = toy_model(3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd base(2, 200000);
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = n01(rng);
  PointMatrix q(1, 1);
  for (double x : {0.05, 0.33, 0.61, 0.97}) {
    q(0, 0) = x;
    const Posterior p = m.posterior(q);
    const double analytic = log_ei(p.mean[0], std::sqrt(p.var[0]), m.best_observed_std());
    if (analytic < std::log(1e-2)) continue;  // softplus bias dominates below
    const double mc = log_qei_mc(m, q, base, m.best_observed_std());
    CHECK(std::abs(std::exp(mc) - std::exp(analytic)) / std::exp(analytic) < 0.03);
  }
}

TEST_CASE("Monte Carlo qEI never decreases when the batch grows") {
  const GpModel m = toy_model(5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd base(3, 512);
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = n01(rng);
  PointMatrix one(1, 1), two(2, 1), three(3, 1);
  one << 0.2;
  two << 0.2, 0.8;
  three << 0.2, 0.8, 0.5;
  const double best = m.best_observed_std();
  const double a = log_qei_mc(m, one, base, best), b = log_qei_mc(m, two, base, best),
               c = log_qei_mc(m, three, base, best);
  CHECK(b >= a);
  CHECK(c >= b);
  CHECK(std::isfinite(log_qei_mc(m, one, base, -1e6)));
  CHECK_THROWS_AS(log_qei_mc(m, three, base.topRows(2), best), ValidationError);
}

TEST_CASE("parallel scoring equals the serial reference") {
  const GpModel m = toy_model(7);
  const AcquisitionFn fn = [&](const Eigen::VectorXd& x) {
    PointMatrix q(1, 1);
    q(0, 0) = x[0];
    const Posterior p = m.posterior(q);
    return log_ei(p.mean[0], std::sqrt(p.var[0]), m.best_observed_std());
  };
  CandidateGenerator g(1, 2);
  const PointMatrix pts = g.generate(777);
  CHECK(score_candidates(fn, pts) == score_candidates_serial(fn, pts));
}

TEST_CASE("single-point proposal finds the grid argmax of EI") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const GpModel m = toy_model(seed);
    double best_v = -1e300, best_x = 0.0;
    PointMatrix grid(10000, 1);
    for (int i = 0; i < 10000; ++i) grid(i, 0) = (i + 0.5) / 10000.0;
    const Posterior p = m.posterior(grid);
    for (int i = 0; i < 10000; ++i) {
      const double v = log_ei(p.mean[i], std::sqrt(p.var[i]), m.best_observed_std());
      if (v > best_v) best_v = v, best_x = grid(i, 0);
    }
    const BatchProposal b = propose_batch_ei(m, 1, {}, false, 11);
    CHECK(b.warnings.empty());
    CHECK(std::abs(b.points(0, 0) - best_x) < 1e-2);
  }
}

TEST_CASE("batch proposals are in bounds, distinct and seeded") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix x(15, 3);
  Eigen::VectorXd y(15);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
    y[i] = (x.row(i).array() - 0.3).square().sum();
  }
  const GpModel m = GpModel::fit(x, y, {});
  for (bool mc : {false, true}) {
    AcquisitionOptions o;
    o.raw_samples = 64;
    o.num_restarts = 4;
    o.sample_shape = 32;
    const BatchProposal a = propose_batch_ei(m, 3, o, mc, 5);
    const BatchProposal b = propose_batch_ei(m, 3, o, mc, 5);
    CHECK(a.points == b.points);
    CHECK(a.points.minCoeff() >= 0.0);
    CHECK(a.points.maxCoeff() <= 1.0);
    CHECK((a.points.row(0) - a.points.row(1)).norm() > 1e-6);
    CHECK((a.points.row(1) - a.points.row(2)).norm() > 1e-6);
  }
}

TEST_CASE("flat posterior falls back to a seeded uniform batch") {
  PointMatrix x(3, 2);
  x << 0.1, 0.1, 0.5, 0.5, 0.9, 0.2;
  GpHyper h;
  h.log_lengthscales = Eigen::Vector2d::Constant(std::log(0.5));
  h.log_signal_var = std::log(1e-15);
  h.log_noise_var = std::log(1e-8);
  const GpModel m = GpModel::with_hyper(x, Eigen::Vector3d(1.0, 2.0, 3.0), KernelKind::kMatern52, h);
  const BatchProposal a = propose_batch_ei(m, 2, {}, false, 3);
  const BatchProposal b = propose_batch_ei(m, 2, {}, false, 3);
  CHECK(a.warnings.size() == 1);
  CHECK(a.points == b.points);
  CHECK(a.points.minCoeff() >= 0.0);
  CHECK(a.points.maxCoeff() <= 1.0);
}

TEST_CASE("pattern search respects its evaluation cap") {
  const AcquisitionFn fn = [](const Eigen::VectorXd& x) { return -(x.array() - 0.37).square().sum(); };
  AcquisitionOptions o;
  o.raw_samples = 16;
  o.num_restarts = 2;
  o.max_evals_per_restart = 50;
  const AcquisitionResult r = maximize_acquisition(fn, 4, o, 1);
  CHECK(r.evaluations <= 16 + 2 * 50);
  o.max_evals_per_restart = 200;
  const AcquisitionResult full = maximize_acquisition(fn, 4, o, 1);
  CHECK((full.x.array() - 0.37).abs().maxCoeff() < 2e-3);
  o.raw_samples = 0;
  CHECK_THROWS_AS(maximize_acquisition(fn, 4, o, 1), ConfigError);
}
