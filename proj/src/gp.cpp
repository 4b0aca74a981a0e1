#include "odcal/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "odcal/box_minimize.hpp"
#include "odcal/error.hpp"
#include "odcal/seed.hpp"
#include "odcal/sobol.hpp"

namespace odcal {

Eigen::VectorXd GpHyper::pack() const {
  const Eigen::Index d = log_lengthscales.size();
  Eigen::VectorXd theta(d + 2);
  theta.head(d) = log_lengthscales;
  theta[d] = log_signal_var;
  theta[d + 1] = log_noise_var;
  return theta;
}

GpHyper GpHyper::unpack(const Eigen::VectorXd& theta) {
  if (theta.size() < 3) throw ValidationError("hyperparameter vector too short");
  const Eigen::Index d = theta.size() - 2;
  GpHyper h;
  h.log_lengthscales = theta.head(d);
  h.log_signal_var = theta[d];
  h.log_noise_var = theta[d + 1];
  return h;
}

Eigen::VectorXd GpHyper::lower_bounds(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::VectorXd lo(d + 2);
  lo.head(d).setConstant(std::log(kLengthscaleMin));
  lo[d] = std::log(kSignalMin);
  lo[d + 1] = std::log(kNoiseMin);
  return lo;
}

Eigen::VectorXd GpHyper::upper_bounds(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::VectorXd hi(d + 2);
  hi.head(d).setConstant(std::log(kLengthscaleMax));
  hi[d] = std::log(kSignalMax);
  hi[d + 1] = std::log(kNoiseMax);
  return hi;
}

GpHyper GpHyper::initial(std::size_t dim) {
  const double l0 = std::clamp(std::max(0.05 * std::sqrt(static_cast<double>(dim)), 0.1),
                               kLengthscaleMin, kLengthscaleMax);
  GpHyper h;
  h.log_lengthscales = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), std::log(l0));
  h.log_signal_var = 0.0;
  h.log_noise_var = std::log(1e-4);
  return h;
}

Standardizer Standardizer::from(const Eigen::VectorXd& y) {
  Standardizer s;
  if (y.size() == 0) return s;
  s.mean = y.mean();
  const double var = (y.array() - s.mean).square().mean();
  const double sd = std::sqrt(var);
  s.scale = sd < 1e-12 ? 1.0 : sd;
  return s;
}

Eigen::VectorXd Standardizer::forward(const Eigen::VectorXd& y) const {
  return (y.array() - mean) / scale;
}

Eigen::VectorXd Standardizer::backward(const Eigen::VectorXd& z) const {
  return z.array() * scale + mean;
}

std::optional<double> cholesky_with_jitter(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower) {
  static constexpr double kLadder[] = {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};
  const Eigen::Index n = a.rows();
  for (double jitter : kLadder) {
    Eigen::MatrixXd m = a;
    if (jitter > 0.0) m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) continue;
    lower = llt.matrixL();
    bool finite = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) {
        finite = false;
        break;
      }
    }
    if (finite) return jitter;
  }
  return std::nullopt;
}

namespace {

Kernel make_kernel(KernelKind kind, const GpHyper& h) {
  Kernel k;
  k.kind = kind;
  k.lengthscales = h.log_lengthscales.array().exp();
  k.signal_var = std::exp(h.log_signal_var);
  return k;
}

double log_prior(const GpHyper& h, const SparsityPrior& prior, Eigen::VectorXd* grad) {
  if (prior.weight <= 0.0) return 0.0;
  const double tau2 = prior.tau * prior.tau;
  double lp = 0.0;
  for (Eigen::Index d = 0; d < h.log_lengthscales.size(); ++d) {
    const double rho2 = std::exp(-2.0 * h.log_lengthscales[d]);
    lp -= prior.weight * std::log1p(rho2 / tau2);
    // d/dlog l of -w log(1 + rho^2/tau^2), rho = exp(-log l).
    if (grad) (*grad)[d] += prior.weight * 2.0 * rho2 / (tau2 + rho2);
  }
  return lp;
}

// Solves (L L^T) z = b in place.
template <typename Rhs>
void chol_solve_in_place(const Eigen::MatrixXd& lower, Rhs& b) {
  lower.triangularView<Eigen::Lower>().solveInPlace(b);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(b);
}

void check_training_data(const PointMatrix& x, const Eigen::VectorXd& y) {
  if (x.rows() < 2) throw ValidationError("GP fit needs at least 2 training points");
  if (x.rows() != y.size()) throw ValidationError("GP inputs and outputs differ in length");
  if (x.cols() < 1) throw ValidationError("GP inputs need at least one dimension");
  if (!y.allFinite()) throw ValidationError("GP outputs must be finite");
  if (!x.allFinite()) throw ValidationError("GP inputs must be finite");
}

}  // namespace

MllResult log_marginal_likelihood(const PointMatrix& x, const Eigen::VectorXd& y,
                                  KernelKind kind, const GpHyper& hyper,
                                  const SparsityPrior& prior, bool with_grad) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  if (hyper.log_lengthscales.size() != dim) throw ValidationError("hyperparameter dimension mismatch");
  MllResult res;
  const Kernel k = make_kernel(kind, hyper);
  const double noise = std::exp(hyper.log_noise_var);
  const Eigen::MatrixXd r = scaled_distances(k.lengthscales, x, x);

  Eigen::MatrixXd kf(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) kf(i, j) = k.signal_var * kernel_profile(kind, r(i, j));
  }
  Eigen::MatrixXd kn = kf;
  kn.diagonal().array() += noise;
  Eigen::MatrixXd lower;
  if (!cholesky_with_jitter(kn, lower)) return res;

  Eigen::VectorXd alpha = y;
  chol_solve_in_place(lower, alpha);
  const double logdet_half = lower.diagonal().array().log().sum();
  res.value = -0.5 * y.dot(alpha) - logdet_half -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  res.grad = Eigen::VectorXd::Zero(dim + 2);
  if (with_grad) {
    Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
    chol_solve_in_place(lower, kinv);
    const Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;

    // Lengthscales: dK_ij/dlog l_d = sigma^2 g(r_ij) (dx_ijd / l_d)^2.
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        m(i, j) = w(i, j) * k.signal_var * kernel_profile_slope(kind, r(i, j));
      }
    }
    const Eigen::VectorXd rowsum = m.rowwise().sum();
    const Eigen::MatrixXd mx = m * x;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const auto xd = x.col(d);
      const double s = 2.0 * (xd.array().square() * rowsum.array()).sum() -
                       2.0 * (xd.array() * mx.col(d).array()).sum();
      const double l = k.lengthscales[d];
      res.grad[d] = 0.5 * s / (l * l);
    }
    res.grad[dim] = 0.5 * (w.array() * kf.array()).sum();
    res.grad[dim + 1] = 0.5 * noise * w.trace();
  }
  res.value += log_prior(hyper, prior, with_grad ? &res.grad : nullptr);
  res.ok = std::isfinite(res.value) && res.grad.allFinite();
  return res;
}

void GpModel::require_fitted() const {
  if (!fitted_) throw StateError("GP model is not fitted");
}

void GpModel::factorize() {
  kernel_ = make_kernel(kernel_.kind, hyper_);
  noise_ = std::exp(hyper_.log_noise_var);
  Eigen::MatrixXd kn = cross_covariance(kernel_, x_, x_);
  kn.diagonal().array() += noise_;
  auto jitter = cholesky_with_jitter(kn, chol_);
  if (!jitter) throw NumericalError("kernel matrix is not positive definite after jitter ladder");
  jitter_ = *jitter;
  alpha_ = y_;
  chol_solve_in_place(chol_, alpha_);
  mll_ = -0.5 * y_.dot(alpha_) - chol_.diagonal().array().log().sum() -
         0.5 * static_cast<double>(y_.size()) * std::log(2.0 * std::numbers::pi);
  fitted_ = true;
}

GpModel GpModel::with_hyper(const PointMatrix& x, const Eigen::VectorXd& y, KernelKind kind,
                            const GpHyper& hyper) {
  check_training_data(x, y);
  if (hyper.log_lengthscales.size() != x.cols()) {
    throw ValidationError("hyperparameter dimension mismatch");
  }
  GpModel m;
  m.x_ = x;
  m.standardizer_ = Standardizer::from(y);
  m.y_ = m.standardizer_.forward(y);
  m.best_std_ = m.y_.minCoeff();
  m.kernel_.kind = kind;
  m.hyper_ = hyper;
  m.factorize();
  return m;
}

GpModel GpModel::fit(const PointMatrix& x, const Eigen::VectorXd& y, const FitOptions& opts) {
  check_training_data(x, y);
  const auto dim = static_cast<std::size_t>(x.cols());
  const Standardizer st = Standardizer::from(y);
  const Eigen::VectorXd ys = st.forward(y);
  const Eigen::VectorXd lo = GpHyper::lower_bounds(dim);
  const Eigen::VectorXd hi = GpHyper::upper_bounds(dim);

  std::vector<Eigen::VectorXd> starts;
  if (opts.warm_start && opts.warm_start->dimension() == dim) {
    starts.push_back(opts.warm_start->pack().cwiseMax(lo).cwiseMin(hi));
  }
  const GpHyper init = GpHyper::initial(dim);
  const int total = std::max(1, opts.restarts);
  if (static_cast<int>(starts.size()) < total) starts.push_back(init.pack());
  if (static_cast<int>(starts.size()) < total) {
    const int extra = total - static_cast<int>(starts.size());
    CandidateGenerator gen(dim + 2, stream_seed(opts.seed, Stream::kGpFit));
    const PointMatrix u = gen.generate(static_cast<std::size_t>(extra));
    const double l0 = std::exp(init.log_lengthscales[0]);
    const auto d = static_cast<Eigen::Index>(dim);
    for (int s = 0; s < extra; ++s) {
      Eigen::VectorXd theta(d + 2);
      auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
      for (Eigen::Index j = 0; j < d; ++j) {
        theta[j] = lerp(std::log(l0 / 5.0), std::log(l0 * 5.0), u(s, j));
      }
      theta[d] = lerp(std::log(0.2), std::log(5.0), u(s, d));
      theta[d + 1] = lerp(std::log(1e-6), std::log(1e-3), u(s, d + 1));
      starts.push_back(theta.cwiseMax(lo).cwiseMin(hi));
    }
  }

  SmoothObjective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    const MllResult r =
        log_marginal_likelihood(x, ys, opts.kernel, GpHyper::unpack(theta), opts.prior, true);
    if (!r.ok) return std::numeric_limits<double>::infinity();
    grad = -r.grad;
    return -r.value;
  };

  BoxMinimizeOptions bo;
  bo.max_iters = opts.max_iters;
  double best_f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  for (const auto& s : starts) {
    const BoxMinimizeResult r = minimize_box(objective, s, lo, hi, bo);
    if (r.f < best_f) {
      best_f = r.f;
      best_theta = r.x;
    }
  }
  if (!std::isfinite(best_f)) {
    throw NumericalError("GP hyperparameter fit failed at every restart");
  }
  GpModel m;
  m.x_ = x;
  m.standardizer_ = st;
  m.y_ = ys;
  m.best_std_ = ys.minCoeff();
  m.kernel_.kind = opts.kernel;
  m.hyper_ = GpHyper::unpack(best_theta);
  m.factorize();
  return m;
}

Posterior GpModel::posterior(const PointMatrix& q) const {
  require_fitted();
  if (q.cols() != x_.cols()) throw ValidationError("query dimension mismatch");
  const Eigen::MatrixXd kxq = cross_covariance(kernel_, x_, q);
  Posterior p;
  p.mean = kxq.transpose() * alpha_;
  Eigen::MatrixXd v = kxq;
  chol_.triangularView<Eigen::Lower>().solveInPlace(v);
  p.var = (kernel_.signal_var - v.colwise().squaredNorm().array()).cwiseMax(0.0).matrix();
  return p;
}

Posterior GpModel::posterior_raw(const PointMatrix& q) const {
  Posterior p = posterior(q);
  p.mean = standardizer_.backward(p.mean);
  p.var *= standardizer_.scale * standardizer_.scale;
  return p;
}

JointPosterior GpModel::joint_posterior(const PointMatrix& q) const {
  require_fitted();
  if (q.cols() != x_.cols()) throw ValidationError("query dimension mismatch");
  const Eigen::MatrixXd kxq = cross_covariance(kernel_, x_, q);
  JointPosterior p;
  p.mean = kxq.transpose() * alpha_;
  Eigen::MatrixXd v = kxq;
  chol_.triangularView<Eigen::Lower>().solveInPlace(v);
  p.cov = cross_covariance(kernel_, q, q) - v.transpose() * v;
  p.cov = 0.5 * (p.cov + p.cov.transpose());
  for (Eigen::Index i = 0; i < p.cov.rows(); ++i) p.cov(i, i) = std::max(0.0, p.cov(i, i));
  return p;
}

Eigen::MatrixXd GpModel::sample_posterior(const PointMatrix& q, int draws,
                                          std::uint64_t seed) const {
  if (q.rows() == 0) throw ValidationError("sample_posterior needs at least one query point");
  if (draws < 1) throw ValidationError("sample_posterior needs at least one draw");
  const JointPosterior jp = joint_posterior(q);
  const Eigen::Index m = q.rows();

  // Points with (numerically) zero variance are returned at their mean.
  const double tiny = 1e-14 * kernel_.signal_var;
  std::vector<Eigen::Index> live;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (jp.cov(i, i) > tiny) live.push_back(i);
  }
  Eigen::MatrixXd out = jp.mean.replicate(1, draws);
  if (live.empty()) return out;

  const auto k = static_cast<Eigen::Index>(live.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = jp.cov(live[a], live[b]);
  }
  Eigen::MatrixXd lower;
  if (!cholesky_with_jitter(sub, lower)) {
    throw NumericalError("posterior covariance is not positive semidefinite after jitter ladder");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(k, draws);
  for (Eigen::Index c = 0; c < draws; ++c) {
    for (Eigen::Index a = 0; a < k; ++a) z(a, c) = normal(rng);
  }
  const Eigen::MatrixXd corr = lower.triangularView<Eigen::Lower>() * z;
  for (Eigen::Index a = 0; a < k; ++a) out.row(live[a]) += corr.row(a);
  return out;
}

GpModel GpModel::condition_on(const Eigen::VectorXd& point, double value_std) const {
  require_fitted();
  if (point.size() != x_.cols()) throw ValidationError("fantasy point dimension mismatch");
  const Eigen::Index n = x_.rows();
  GpModel m = *this;
  m.x_.conservativeResize(n + 1, Eigen::NoChange);
  m.x_.row(n) = point.transpose();
  m.y_.conservativeResize(n + 1);
  m.y_[n] = value_std;

  Eigen::VectorXd kx(n);
  for (Eigen::Index i = 0; i < n; ++i) kx[i] = kernel_eval(kernel_, x_.row(i).transpose(), point);
  const Eigen::VectorXd l = chol_.triangularView<Eigen::Lower>().solve(kx);
  const double diag = kernel_.signal_var + noise_ + jitter_ - l.squaredNorm();
  m.chol_.conservativeResize(n + 1, n + 1);
  m.chol_.row(n).head(n) = l.transpose();
  m.chol_.col(n).head(n).setZero();
  m.chol_(n, n) = std::sqrt(std::max(diag, 1e-12));

  m.alpha_ = m.y_;
  chol_solve_in_place(m.chol_, m.alpha_);
  return m;
}

}  // namespace odcal
