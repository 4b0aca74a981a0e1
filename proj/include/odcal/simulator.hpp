#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "odcal/network.hpp"

namespace odcal {

enum class SimMode { kDeterministic, kStochastic };

struct TimeWindow {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
};

// Holds the auxiliary simulator parameters (road attributes live on the
// network itself).
struct SimulatorConfig {
  SimMode mode = SimMode::kDeterministic;
  TimeWindow simulation{0.0, 3600.0};
  TimeWindow sensor{0.0, 3600.0};
  TimeWindow od{0.0, 3300.0};
  double theta = 0.0;        // logit dispersion in seconds; 0 = shortest path only
  double bpr_alpha = 0.15;
  double bpr_beta = 4.0;
  int max_routes = 3;        // K in the K-shortest-path route set

  void validate() const;
};

struct SimulationResult {
  std::vector<std::int64_t> counts;  // per sensor, network sensor order
  std::vector<double> speeds;        // per sensor, m/s
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;

  // Equality ignores wall time.
  bool operator==(const SimulationResult& o) const {
    return counts == o.counts && speeds == o.speeds && seed == o.seed;
  }
};

// Up to config.max_routes loop-free shortest paths (free-flow time) per pair
// with logit choice probabilities. Throws RoutingError for a pair with no path.
std::vector<RouteSet> compute_routes(const Scenario& scenario, const ODPairSet& pairs,
                                     const SimulatorConfig& config);

// Logit split of route costs: p_i proportional to exp(-cost_i / theta). With
// theta = 0 the first minimum-cost route takes all mass.
std::vector<double> logit_probabilities(std::span<const double> costs, double theta);

// Mesoscopic link-flow simulator. Immutable after construction; run() is
// pure given (od, seed) and may be called concurrently.
class Simulator {
 public:
  Simulator(Scenario scenario, ODPairSet pairs, SimulatorConfig config);
  // Reuses precomputed routes (must match pairs).
  Simulator(Scenario scenario, ODPairSet pairs, SimulatorConfig config,
            std::vector<RouteSet> routes);

  SimulationResult run(const ODVector& od, std::uint64_t seed) const;

  const Scenario& scenario() const { return scenario_; }
  const RoadNetwork& network() const { return scenario_.network; }
  const ODPairSet& pairs() const { return pairs_; }
  const SimulatorConfig& config() const { return config_; }
  const std::vector<RouteSet>& routes() const { return routes_; }
  std::size_t num_sensors() const { return scenario_.network.sensors().size(); }

 private:
  Scenario scenario_;
  ODPairSet pairs_;
  SimulatorConfig config_;
  std::vector<RouteSet> routes_;
};

SimulationResult simulate(const Simulator& sim, const ODVector& od, std::uint64_t seed);

struct SensorTarget {
  int sensor_id = 0;
  double count = 0.0;
  double speed = 0.0;
};

struct GroundTruth {
  std::vector<double> x_star;  // diagnostics only; never shown to optimizers
  std::vector<SensorTarget> targets;
  std::uint64_t gt_seed = 0;
  int replications = 1;
  SimMode mode = SimMode::kDeterministic;

  std::vector<double> counts() const;
  std::vector<double> speeds() const;
};

// Draws x* uniformly in the middle half of each bound range and averages R
// seeded simulations at x*.
GroundTruth generate_ground_truth(const Simulator& sim, const ODBounds& bounds,
                                  std::uint64_t gt_seed, int replications);

// Same, with a caller-chosen true OD vector.
GroundTruth ground_truth_at(const Simulator& sim, const ODVector& x_star,
                            std::uint64_t gt_seed, int replications);

}  // namespace odcal
