#include "odcal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "odcal/error.hpp"
#include "odcal/seed.hpp"
#include "odcal/sobol.hpp"

namespace odcal {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kLogSqrt2Pi = 0.9189385332046728;
constexpr double kQeiTemperature = 1e-3;

// log(phi(z) + z Phi(z)) with phi/Phi the standard normal pdf/cdf.
double log_h(double z) {
  if (z > -1.0) {
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
    return std::log(pdf + z * cdf);
  }
  if (z > -20.0) {
    // h(z) = exp(-z^2/2) [1/sqrt(2 pi) + (z/2) erfcx(-z/sqrt 2)]
    const double bracket = kInvSqrt2Pi + 0.5 * z * erfcx(-z / std::numbers::sqrt2);
    return -0.5 * z * z + std::log(bracket);
  }
  // Asymptotic: bracket = (1/sqrt(2 pi)) sum_k (-1)^(k+1) (2k-1)!! / z^(2k).
  const double inv_z2 = 1.0 / (z * z);
  double term = inv_z2;
  double sum = 0.0;
  for (int k = 1; k <= 10; ++k) {
    sum += (k % 2 == 1 ? term : -term);
    term *= static_cast<double>(2 * k + 1) * inv_z2;
  }
  return -0.5 * z * z - kLogSqrt2Pi + std::log(sum);
}

}  // namespace

double erfcx(double x) {
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  // 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k
  const double inv = 1.0 / (2.0 * x * x);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -static_cast<double>(2 * k - 1) * inv;
    sum += term;
  }
  return sum / (x * std::sqrt(std::numbers::pi));
}

double log_ei(double mean, double std, double best) {
  if (!(std > 0.0)) {
    const double gap = best - mean;
    return gap > 0.0 ? std::log(gap) : kLogZero;
  }
  const double z = (best - mean) / std;
  return std::log(std) + log_h(z);
}

double log_qei_mc(const GpModel& model, const PointMatrix& batch,
                  const Eigen::MatrixXd& base_samples, double best) {
  const Eigen::Index q = batch.rows();
  if (base_samples.rows() < q) throw ValidationError("too few base-sample rows for batch");
  const JointPosterior jp = model.joint_posterior(batch);
  Eigen::MatrixXd lower;
  if (!cholesky_with_jitter(jp.cov, lower)) {
    throw NumericalError("batch posterior covariance not factorizable");
  }
  const Eigen::MatrixXd f =
      (lower.triangularView<Eigen::Lower>() * base_samples.topRows(q)).colwise() + jp.mean;
  // Improvements pass through a softplus with a small temperature so the
  // estimate stays positive (and informative in log space) where no draw
  // improves; samples are combined with log-mean-exp.
  const Eigen::Index ns = f.cols();
  Eigen::VectorXd logs(ns);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const double t = (best - f.col(s).minCoeff()) / kQeiTemperature;
    const double log_softplus = t > 30.0 ? std::log(t) : (t < -30.0 ? t : std::log(std::log1p(std::exp(t))));
    logs[s] = std::log(kQeiTemperature) + log_softplus;
  }
  const double mx = logs.maxCoeff();
  return mx + std::log((logs.array() - mx).exp().sum() / static_cast<double>(ns));
}

Eigen::VectorXd score_candidates(const AcquisitionFn& fn, const PointMatrix& points) {
  const Eigen::Index n = points.rows();
  Eigen::VectorXd out(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index i = 0; i < n; ++i) out[i] = fn(points.row(i).transpose());
  return out;
}

Eigen::VectorXd score_candidates_serial(const AcquisitionFn& fn, const PointMatrix& points) {
  const Eigen::Index n = points.rows();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = fn(points.row(i).transpose());
  return out;
}

namespace {

AcquisitionResult pattern_search(const AcquisitionFn& fn, Eigen::VectorXd x, double fx,
                                 const AcquisitionOptions& opts, std::uint64_t seed) {
  const auto dim = static_cast<std::size_t>(x.size());
  std::vector<Eigen::Index> order(dim);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  AcquisitionResult res;
  double step = opts.initial_step;
  int evals = 0;
  while (step >= opts.min_step && evals < opts.max_evals_per_restart) {
    if (dim > 1) std::shuffle(order.begin(), order.end(), rng);
    bool improved = false;
    for (Eigen::Index d : order) {
      if (evals >= opts.max_evals_per_restart) break;
      for (double sign : {1.0, -1.0}) {
        const double v = std::clamp(x[d] + sign * step, 0.0, 1.0);
        if (v == x[d]) continue;
        Eigen::VectorXd trial = x;
        trial[d] = v;
        const double ft = fn(trial);
        ++evals;
        if (ft > fx) {
          x = std::move(trial);
          fx = ft;
          improved = true;
          break;
        }
        if (evals >= opts.max_evals_per_restart) break;
      }
    }
    if (!improved) step *= 0.5;
  }
  res.x = std::move(x);
  res.value = fx;
  res.evaluations = evals;
  return res;
}

}  // namespace

AcquisitionResult maximize_acquisition(const AcquisitionFn& fn, std::size_t dim,
                                       const AcquisitionOptions& opts, std::uint64_t seed) {
  if (opts.raw_samples < 1 || opts.num_restarts < 1) {
    throw ConfigError("raw_samples and num_restarts must be at least 1");
  }
  CandidateGenerator gen(dim, seed);
  const PointMatrix raw = gen.generate(static_cast<std::size_t>(opts.raw_samples));
  const Eigen::VectorXd scores = score_candidates(fn, raw);

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(raw.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  const int starts = std::min<int>(opts.num_restarts, static_cast<int>(raw.rows()));

  std::vector<AcquisitionResult> results(static_cast<std::size_t>(starts));
#pragma omp parallel for schedule(dynamic, 1)
  for (int s = 0; s < starts; ++s) {
    const Eigen::Index i = idx[static_cast<std::size_t>(s)];
    results[static_cast<std::size_t>(s)] =
        pattern_search(fn, raw.row(i).transpose(), scores[i], opts,
                       derive_seed({seed, 0x5eedULL, static_cast<std::uint64_t>(s)}));
  }
  AcquisitionResult best = results.front();
  int total = opts.raw_samples + best.evaluations;
  for (std::size_t s = 1; s < results.size(); ++s) {
    total += results[s].evaluations;
    if (results[s].value > best.value) best = results[s];
  }
  best.evaluations = total;
  return best;
}

BatchProposal propose_batch_ei(const GpModel& model, int batch, const AcquisitionOptions& opts,
                               bool monte_carlo, std::uint64_t seed) {
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  const auto dim = static_cast<std::size_t>(model.inputs().cols());
  BatchProposal out;
  out.points.resize(batch, static_cast<Eigen::Index>(dim));

  {
    CandidateGenerator probe(dim, derive_seed({seed, 0xdeadULL}));
    const PointMatrix raw = probe.generate(static_cast<std::size_t>(opts.raw_samples));
    if (model.posterior(raw).var.maxCoeff() < 1e-12) {
      std::mt19937_64 rng(derive_seed({seed, 0xfa11ULL}));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < out.points.size(); ++i) out.points.data()[i] = u(rng);
      out.warnings.emplace_back("degenerate posterior: zero variance at all raw samples, uniform proposal");
      return out;
    }
  }

  const double best = model.best_observed_std();
  if (!monte_carlo) {
    GpModel m = model;
    for (int j = 0; j < batch; ++j) {
      const AcquisitionFn fn = [&m, best](const Eigen::VectorXd& x) {
        PointMatrix q(1, x.size());
        q.row(0) = x.transpose();
        const Posterior p = m.posterior(q);
        return log_ei(p.mean[0], std::sqrt(p.var[0]), best);
      };
      const AcquisitionResult r =
          maximize_acquisition(fn, dim, opts, derive_seed({seed, static_cast<std::uint64_t>(j)}));
      out.points.row(j) = r.x.transpose();
      if (j + 1 < batch) {
        PointMatrix q(1, static_cast<Eigen::Index>(dim));
        q.row(0) = r.x.transpose();
        m = m.condition_on(r.x, m.posterior(q).mean[0]);
      }
    }
    return out;
  }

  std::mt19937_64 rng(derive_seed({seed, 0xba5eULL}));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd base(batch, std::max(1, opts.sample_shape));
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = normal(rng);
  for (int j = 0; j < batch; ++j) {
    const AcquisitionFn fn = [&, j](const Eigen::VectorXd& x) {
      PointMatrix q(j + 1, static_cast<Eigen::Index>(dim));
      if (j > 0) q.topRows(j) = out.points.topRows(j);
      q.row(j) = x.transpose();
      return log_qei_mc(model, q, base, best);
    };
    const AcquisitionResult r =
        maximize_acquisition(fn, dim, opts, derive_seed({seed, static_cast<std::uint64_t>(j)}));
    out.points.row(j) = r.x.transpose();
  }
  return out;
}

}  // namespace odcal
