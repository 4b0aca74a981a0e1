#include "odcal/metrics.hpp"

#include <cmath>
#include <string>

#include "odcal/error.hpp"

namespace odcal {

std::string_view to_string(Measure m) { return m == Measure::kCount ? "count" : "speed"; }

Measure parse_measure(std::string_view name) {
  if (name == "count") return Measure::kCount;
  if (name == "speed") return Measure::kSpeed;
  throw ConfigError("unknown evaluation measure '" + std::string(name) + "'");
}

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("length mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw ValidationError("metric needs at least one sensor");
}

}  // namespace

double loss(std::span<const double> y_gt, std::span<const double> y_sim) {
  check_pair(y_gt, y_sim);
  double s = 0.0;
  for (std::size_t i = 0; i < y_gt.size(); ++i) {
    const double d = y_gt[i] - y_sim[i];
    s += d * d;
  }
  return s;
}

double nrmse(std::span<const double> y_gt, std::span<const double> y_sim) {
  check_pair(y_gt, y_sim);
  const double n = static_cast<double>(y_gt.size());
  const double mean = mean_of(y_gt);
  if (!(mean > 0.0)) throw DomainError("NRMSE undefined for non-positive mean ground truth");
  return std::sqrt(loss(y_gt, y_sim) / n) / mean;
}

double improvement(double nrmse_init_min, double nrmse_best) {
  if (!(nrmse_init_min > 0.0)) throw DomainError("improvement needs a positive baseline NRMSE");
  return (nrmse_init_min - nrmse_best) / nrmse_init_min * 100.0;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<SensorFit> fit_to_gt(std::span<const double> y_gt,
                                 const std::vector<std::vector<double>>& sim_per_seed) {
  if (sim_per_seed.empty()) throw ValidationError("fit_to_gt needs at least one seed");
  std::vector<SensorFit> out(y_gt.size());
  std::vector<double> column(sim_per_seed.size());
  for (std::size_t i = 0; i < y_gt.size(); ++i) {
    for (std::size_t k = 0; k < sim_per_seed.size(); ++k) {
      if (sim_per_seed[k].size() != y_gt.size()) {
        throw ValidationError("fit_to_gt: seed record has wrong sensor count");
      }
      column[k] = sim_per_seed[k][i];
    }
    out[i] = {y_gt[i], mean_of(column), population_std(column)};
  }
  return out;
}

}  // namespace odcal
