#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "odcal/gp.hpp"

namespace odcal {

// Stand-in for log(0).
inline constexpr double kLogZero = -1e100;

// exp(x^2) erfc(x).
double erfcx(double x);

// Log expected improvement below `best` for a Gaussian with mean m and std s
// (minimization). Stable for z = (best - m)/s far into the left tail. s = 0
// gives log(max(best - m, 0)) with kLogZero for zero.
double log_ei(double mean, double std, double best);

// Monte Carlo batch expected improvement, log scale: log E[max_j (best - f_j)^+]
// over joint posterior draws f = mu + L z for the given standard-normal base
// samples (rows = batch slots, at least batch size; columns = draws). The
// positive part is softened (temperature 1e-3) so the value is always finite.
double log_qei_mc(const GpModel& model, const PointMatrix& batch,
                  const Eigen::MatrixXd& base_samples, double best);

// Scalar acquisition to maximize over [0,1]^D. Must be safe to call
// concurrently.
using AcquisitionFn = std::function<double(const Eigen::VectorXd&)>;

// Scores every row of `points`. The OpenMP version splits rows across threads.
Eigen::VectorXd score_candidates(const AcquisitionFn& fn, const PointMatrix& points);
Eigen::VectorXd score_candidates_serial(const AcquisitionFn& fn, const PointMatrix& points);

struct AcquisitionOptions {
  int raw_samples = 128;
  int num_restarts = 8;
  int sample_shape = 64;
  bool monte_carlo = false;  // vanilla only; SAAS always uses Monte Carlo
  int max_evals_per_restart = 200;
  double initial_step = 0.1;
  double min_step = 1e-4;
};

struct AcquisitionResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
};

// Multi-start maximization: scores `raw_samples` scrambled Sobol points, then
// refines the best `num_restarts` by coordinate pattern search (step halving,
// per-restart evaluation cap). Ties go to the lower candidate index.
AcquisitionResult maximize_acquisition(const AcquisitionFn& fn, std::size_t dim,
                                       const AcquisitionOptions& opts, std::uint64_t seed);

struct BatchProposal {
  PointMatrix points;
  std::vector<std::string> warnings;
};

// Sequential-greedy batch by analytic log EI with posterior-mean fantasies,
// or (monte_carlo) by greedily growing the batch under Monte Carlo qEI with
// fixed base samples. Falls back to seeded uniform points with a warning when
// the posterior variance is zero at every raw sample.
BatchProposal propose_batch_ei(const GpModel& model, int batch, const AcquisitionOptions& opts,
                               bool monte_carlo, std::uint64_t seed);

}  // namespace odcal
