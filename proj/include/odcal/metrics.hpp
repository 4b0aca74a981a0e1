#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace odcal {

enum class Measure { kCount, kSpeed };

std::string_view to_string(Measure m);
Measure parse_measure(std::string_view name);

// Sum of squared differences.
double loss(std::span<const double> y_gt, std::span<const double> y_sim);

// Root mean squared error over the mean ground truth. Throws DomainError when
// mean(y_gt) is not positive.
double nrmse(std::span<const double> y_gt, std::span<const double> y_sim);

// Percentage reduction of the best NRMSE relative to the best initial one.
double improvement(double nrmse_init_min, double nrmse_best);

struct EvaluationRecord {
  std::vector<double> od;
  double loss = 0.0;
  double nrmse = 0.0;
  std::vector<double> y_gt;
  std::vector<double> y_sim;
  int epoch = 0;
  std::uint64_t seed = 0;
  Measure measure = Measure::kCount;
};

struct SensorFit {
  double gt = 0.0;
  double sim_mean = 0.0;
  double sim_std = 0.0;  // population convention (divide by N)
};

// One entry per seed: the simulated values at that seed's best OD.
std::vector<SensorFit> fit_to_gt(std::span<const double> y_gt,
                                 const std::vector<std::vector<double>>& sim_per_seed);

// Population mean / standard deviation helpers shared by the reports.
double mean_of(std::span<const double> v);
double population_std(std::span<const double> v);

}  // namespace odcal
