#include "odcal/box_minimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "odcal/error.hpp"

namespace odcal {

BoxMinimizeResult minimize_box(const SmoothObjective& fn, const Eigen::VectorXd& x0,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const BoxMinimizeOptions& opts) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw ValidationError("minimize_box: bad bounds");
  auto project = [&](const Eigen::VectorXd& v) { return v.cwiseMax(lower).cwiseMin(upper); };

  BoxMinimizeResult res;
  Eigen::VectorXd x = project(x0);
  Eigen::VectorXd g(n);
  double f = fn(x, g);
  res.evaluations = 1;
  if (!std::isfinite(f)) {
    res.x = x;
    res.f = std::numeric_limits<double>::infinity();
    return res;
  }

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  Eigen::VectorXd gn(n);
  Eigen::VectorXd free_g(n);
  Eigen::VectorXd d(n);
  std::vector<char> active(static_cast<std::size_t>(n));

  for (res.iterations = 0; res.iterations < opts.max_iters; ++res.iterations) {
    const Eigen::VectorXd pg = x - project(x - g);
    if (pg.lpNorm<Eigen::Infinity>() < opts.pg_tol) break;

    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = x[i] <= lower[i] && g[i] > 0.0;
      const bool at_hi = x[i] >= upper[i] && g[i] < 0.0;
      active[static_cast<std::size_t>(i)] = at_lo || at_hi;
      free_g[i] = active[static_cast<std::size_t>(i)] ? 0.0 : g[i];
    }

    // Two-loop recursion.
    d = -free_g;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
      const double rho = 1.0 / y_hist[k].dot(s_hist[k]);
      alpha[k] = rho * s_hist[k].dot(d);
      d -= alpha[k] * y_hist[k];
    }
    if (m > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < m; ++k) {
      const double rho = 1.0 / y_hist[k].dot(s_hist[k]);
      const double beta = rho * y_hist[k].dot(d);
      d += s_hist[k] * (alpha[k] - beta);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active[static_cast<std::size_t>(i)]) d[i] = 0.0;
    }
    if (!(d.dot(g) < 0.0)) {
      d = -free_g;
      s_hist.clear();
      y_hist.clear();
    }

    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(1e-12, d.lpNorm<Eigen::Infinity>()));
    bool accepted = false;
    Eigen::VectorXd xn(n);
    double fn_val = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      xn = project(x + step * d);
      fn_val = fn(xn, gn);
      ++res.evaluations;
      if (std::isfinite(fn_val) && fn_val <= f + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
      continue;
    }

    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd y = gn - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    const double drop = f - fn_val;
    x = xn;
    f = fn_val;
    g = gn;
    if (drop <= opts.f_rel_tol * (1.0 + std::abs(f))) break;
  }
  res.x = x;
  res.f = f;
  return res;
}

}  // namespace odcal
