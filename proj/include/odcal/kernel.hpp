#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace odcal {

// Point sets are stored one point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class KernelKind { kMatern32, kMatern52, kRbf };

std::string_view to_string(KernelKind k);
KernelKind parse_kernel(std::string_view name);

// Unit-variance kernel profile as a function of scaled distance r.
double kernel_profile(KernelKind kind, double r);

// -(1/r) d profile / dr, finite at r = 0. Multiplying by (dx_d / l_d)^2
// gives d profile / d log l_d.
double kernel_profile_slope(KernelKind kind, double r);

struct Kernel {
  KernelKind kind = KernelKind::kMatern52;
  Eigen::VectorXd lengthscales;  // ARD, one per input dimension
  double signal_var = 1.0;
};

// sigma^2 * profile(r), r = || (x1 - x2) / l ||. Throws ValidationError on a
// dimension mismatch.
double kernel_eval(const Kernel& k, const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2);

// Cross-covariance K(A, B), A: n x D, B: m x D. The OpenMP version splits rows
// across threads; the serial version is the reference it is tested against.
Eigen::MatrixXd cross_covariance(const Kernel& k, const PointMatrix& a, const PointMatrix& b);
Eigen::MatrixXd cross_covariance_serial(const Kernel& k, const PointMatrix& a,
                                        const PointMatrix& b);

// Matrix of scaled distances r_ij (symmetric inputs only need one triangle,
// but both are filled).
Eigen::MatrixXd scaled_distances(const Eigen::VectorXd& lengthscales, const PointMatrix& a,
                                 const PointMatrix& b);

}  // namespace odcal
