#include "odcal/kernel.hpp"

#include <cmath>
#include <string>

#include "odcal/error.hpp"

namespace odcal {

namespace {
const double kSqrt3 = std::sqrt(3.0);
const double kSqrt5 = std::sqrt(5.0);
}  // namespace

std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::kMatern32: return "matern32";
    case KernelKind::kMatern52: return "matern52";
    case KernelKind::kRbf: return "rbf";
  }
  return "matern52";
}

KernelKind parse_kernel(std::string_view name) {
  if (name == "matern32") return KernelKind::kMatern32;
  if (name == "matern52") return KernelKind::kMatern52;
  if (name == "rbf") return KernelKind::kRbf;
  throw ConfigError("unknown kernel '" + std::string(name) + "'");
}

double kernel_profile(KernelKind kind, double r) {
  switch (kind) {
    case KernelKind::kMatern32:
      return (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
    case KernelKind::kMatern52:
      return (1.0 + kSqrt5 * r + 5.0 * r * r / 3.0) * std::exp(-kSqrt5 * r);
    case KernelKind::kRbf:
      return std::exp(-0.5 * r * r);
  }
  return 0.0;
}

double kernel_profile_slope(KernelKind kind, double r) {
  switch (kind) {
    case KernelKind::kMatern32:
      return 3.0 * std::exp(-kSqrt3 * r);
    case KernelKind::kMatern52:
      return (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
    case KernelKind::kRbf:
      return std::exp(-0.5 * r * r);
  }
  return 0.0;
}

double kernel_eval(const Kernel& k, const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2) {
  if (x1.size() != x2.size() || x1.size() != k.lengthscales.size()) {
    throw ValidationError("kernel_eval: dimension mismatch");
  }
  const double r = ((x1 - x2).array() / k.lengthscales.array()).matrix().norm();
  return k.signal_var * kernel_profile(k.kind, r);
}

namespace {

void check_dims(const Eigen::VectorXd& ls, const PointMatrix& a, const PointMatrix& b) {
  if (a.cols() != ls.size() || b.cols() != ls.size()) {
    throw ValidationError("cross_covariance: dimension mismatch");
  }
}

inline double scaled_distance(const double* a, const double* b, const double* inv_ls,
                              Eigen::Index dim) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < dim; ++d) {
    const double z = (a[d] - b[d]) * inv_ls[d];
    s += z * z;
  }
  return std::sqrt(s);
}

}  // namespace

Eigen::MatrixXd scaled_distances(const Eigen::VectorXd& lengthscales, const PointMatrix& a,
                                 const PointMatrix& b) {
  check_dims(lengthscales, a, b);
  const Eigen::VectorXd inv = lengthscales.cwiseInverse();
  Eigen::MatrixXd r(a.rows(), b.rows());
  const Eigen::Index dim = a.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      r(i, j) = scaled_distance(a.row(i).data(), b.row(j).data(), inv.data(), dim);
    }
  }
  return r;
}

Eigen::MatrixXd cross_covariance(const Kernel& k, const PointMatrix& a, const PointMatrix& b) {
  check_dims(k.lengthscales, a, b);
  const Eigen::VectorXd inv = k.lengthscales.cwiseInverse();
  Eigen::MatrixXd out(a.rows(), b.rows());
  const Eigen::Index dim = a.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double r = scaled_distance(a.row(i).data(), b.row(j).data(), inv.data(), dim);
      out(i, j) = k.signal_var * kernel_profile(k.kind, r);
    }
  }
  return out;
}

Eigen::MatrixXd cross_covariance_serial(const Kernel& k, const PointMatrix& a,
                                        const PointMatrix& b) {
  check_dims(k.lengthscales, a, b);
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = kernel_eval(k, a.row(i).transpose(), b.row(j).transpose());
    }
  }
  return out;
}

}  // namespace odcal
