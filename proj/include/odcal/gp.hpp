#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "odcal/kernel.hpp"

namespace odcal {

inline constexpr double kLengthscaleMin = 0.005;
inline constexpr double kLengthscaleMax = 4.0;
inline constexpr double kNoiseMin = 1e-8;
inline constexpr double kNoiseMax = 1e-3;
inline constexpr double kSignalMin = 1e-2;
inline constexpr double kSignalMax = 1e2;

// Hyperparameters in log space.
struct GpHyper {
  Eigen::VectorXd log_lengthscales;
  double log_signal_var = 0.0;
  double log_noise_var = std::log(1e-4);

  std::size_t dimension() const { return static_cast<std::size_t>(log_lengthscales.size()); }
  Eigen::VectorXd pack() const;
  static GpHyper unpack(const Eigen::VectorXd& theta);
  // Packed box constraints.
  static Eigen::VectorXd lower_bounds(std::size_t dim);
  static Eigen::VectorXd upper_bounds(std::size_t dim);
  // Dimension-scaled starting point: l = max(0.05 sqrt(D), 0.1), clipped.
  static GpHyper initial(std::size_t dim);
};

// Affine map of raw outputs to zero mean, unit (population) std. A constant
// output vector keeps std = 1.
struct Standardizer {
  double mean = 0.0;
  double scale = 1.0;

  static Standardizer from(const Eigen::VectorXd& y);
  Eigen::VectorXd forward(const Eigen::VectorXd& y) const;
  Eigen::VectorXd backward(const Eigen::VectorXd& z) const;
  double forward(double y) const { return (y - mean) / scale; }
  double backward(double z) const { return z * scale + mean; }
};

// Half-Cauchy shrinkage on inverse lengthscales, log p(rho) = -w * log(1 + rho^2/tau^2)
// up to a constant. weight = 0 disables it.
struct SparsityPrior {
  double weight = 0.0;
  double tau = 0.1;
};

struct MllResult {
  double value = 0.0;      // log marginal likelihood + log prior
  Eigen::VectorXd grad;    // w.r.t. packed hyperparameters
  bool ok = false;
};

// Log marginal likelihood of standardized outputs under the given kernel kind
// and hyperparameters, optionally with the analytic gradient.
MllResult log_marginal_likelihood(const PointMatrix& x, const Eigen::VectorXd& y,
                                  KernelKind kind, const GpHyper& hyper,
                                  const SparsityPrior& prior = {}, bool with_grad = true);

struct FitOptions {
  KernelKind kernel = KernelKind::kMatern52;
  int restarts = 4;
  int max_iters = 100;
  std::uint64_t seed = 0;
  SparsityPrior prior;
  std::optional<GpHyper> warm_start;
};

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

struct JointPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Exact GP regression on inputs in [0,1]^D with standardized outputs and a
// zero prior mean in standardized space. A fitted model is immutable.
class GpModel {
 public:
  GpModel() = default;

  // Maximizes log marginal likelihood (+ prior) over the hyperparameter box.
  static GpModel fit(const PointMatrix& x, const Eigen::VectorXd& y, const FitOptions& opts);

  // Conditions on data with fixed hyperparameters.
  static GpModel with_hyper(const PointMatrix& x, const Eigen::VectorXd& y, KernelKind kind,
                            const GpHyper& hyper);

  bool fitted() const { return fitted_; }

  // Standardized-space posterior of the latent function.
  Posterior posterior(const PointMatrix& q) const;
  // Same in raw output units.
  Posterior posterior_raw(const PointMatrix& q) const;
  JointPosterior joint_posterior(const PointMatrix& q) const;

  // Joint draws (rows = query points, columns = draws) in standardized space.
  Eigen::MatrixXd sample_posterior(const PointMatrix& q, int draws, std::uint64_t seed) const;

  // Adds a pseudo-observation (standardized value) with a rank-one extension
  // of the Cholesky factor; hyperparameters are kept.
  GpModel condition_on(const Eigen::VectorXd& point, double value_std) const;

  const Kernel& kernel() const { return kernel_; }
  double noise_var() const { return noise_; }
  double jitter() const { return jitter_; }
  const GpHyper& hyper() const { return hyper_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const PointMatrix& inputs() const { return x_; }
  const Eigen::VectorXd& outputs_std() const { return y_; }
  // Smallest standardized output among real (non-fantasy) observations.
  double best_observed_std() const { return best_std_; }
  double log_marginal() const { return mll_; }

 private:
  void require_fitted() const;
  void factorize();

  bool fitted_ = false;
  PointMatrix x_;
  Eigen::VectorXd y_;
  Standardizer standardizer_;
  Kernel kernel_;
  GpHyper hyper_;
  double noise_ = 0.0;
  double jitter_ = 0.0;
  double best_std_ = 0.0;
  double mll_ = 0.0;
  Eigen::MatrixXd chol_;  // lower factor of K + (noise + jitter) I
  Eigen::VectorXd alpha_;
};

// Cholesky with a diagonal jitter ladder 0, 1e-8, 1e-7, ..., 1e-4. Returns the
// jitter used, or nullopt when every rung fails.
std::optional<double> cholesky_with_jitter(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower);

}  // namespace odcal
