#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "odcal/metrics.hpp"
#include "odcal/network.hpp"
#include "odcal/optimizers.hpp"
#include "odcal/simulator.hpp"

namespace odcal {

// Per-archetype defaults (simulation windows, bounds, budget, runs).
struct ArchetypeDefaults {
  SimulatorConfig simulator;
  OptimizerConfig optimizer;
  double od_lower = 1.0;
  double od_upper = 2000.0;
  int runs = 10;
};

ArchetypeDefaults archetype_defaults(Archetype kind);

// Target values of a ground truth in network sensor order.
std::vector<double> gt_targets(const RoadNetwork& network, const GroundTruth& gt, Measure measure);

// NRMSE of simulated counts (or speeds) against fixed targets, over the unit
// cube mapped into OD bounds.
class CalibrationObjective : public Objective {
 public:
  CalibrationObjective(std::shared_ptr<const Simulator> sim, ODBounds bounds,
                       std::vector<double> targets, Measure measure);

  std::size_t dimension() const override { return bounds_.dimension(); }

  // Rows run concurrently on the OpenMP team.
  std::vector<double> evaluate(const PointMatrix& points,
                               const std::vector<std::uint64_t>& seeds) override;
  // Reference implementation, one row after another.
  std::vector<double> evaluate_serial(const PointMatrix& points,
                                      const std::vector<std::uint64_t>& seeds) const;

  double evaluate_one(const Eigen::VectorXd& unit, std::uint64_t seed) const;
  // Simulated measure values at a unit-cube point.
  std::vector<double> simulate_measure(const Eigen::VectorXd& unit, std::uint64_t seed) const;

  const ODBounds& bounds() const { return bounds_; }
  const std::vector<double>& targets() const { return targets_; }
  Measure measure() const { return measure_; }
  const Simulator& simulator() const { return *sim_; }

 private:
  std::shared_ptr<const Simulator> sim_;
  ODBounds bounds_;
  std::vector<double> targets_;
  Measure measure_;
};

// Sensor filters -----------------------------------------------------------

enum class SensorVerdict { kRetained, kConservationViolation, kTazGranularity };
std::string_view to_string(SensorVerdict v);

struct SensorStatus {
  int sensor_id = 0;
  SensorVerdict verdict = SensorVerdict::kRetained;
  double violation_fraction = 0.0;  // worst over the comparisons it takes part in
  double max_margin = 0.0;          // largest violation amount seen
};

struct SensorDiagnostics {
  std::vector<SensorStatus> sensors;  // network sensor order

  static SensorDiagnostics all_retained(const RoadNetwork& network);
  std::set<int> with_verdict(SensorVerdict v) const;
  std::set<int> retained() const { return with_verdict(SensorVerdict::kRetained); }
};

// sensor id -> count per interval
using IntervalCounts = std::map<int, std::vector<double>>;

// Rows `interval,sensor_id,count`.
IntervalCounts read_interval_counts(const std::string& path);

struct ConservationOptions {
  double violation_threshold = 0.5;  // fraction of intervals
  double margin = 0.0;               // epsilon, vehicles
};

// Compares the nearest mainline sensors up- and downstream of every merge
// (on-ramp, connector in) and diverge (off-ramp, connector out). Merges expect
// up <= down, diverges up >= down. A pair violating by more than the margin in
// more than the threshold fraction of intervals has both sensors flagged.
// Sensors already flagged keep their verdict.
SensorDiagnostics filter_conservation(const RoadNetwork& network, const IntervalCounts& counts,
                                      const ConservationOptions& opts = {},
                                      std::optional<SensorDiagnostics> prior = std::nullopt);

// Sensors on a mainline strictly between the first and last on-ramp fed by
// one origin zone (or the first and last off-ramp draining to one destination
// zone). Only zones that are an origin (destination) of some pair count.
std::set<int> filter_taz_granularity(const RoadNetwork& network, const TazPartition& partition,
                                     const ODPairSet& pairs);

// Marks the given sensors as granularity-excluded unless already flagged.
SensorDiagnostics apply_taz_exclusions(SensorDiagnostics diag, const std::set<int>& excluded);

// Sensitivity ----------------------------------------------------------------

enum class VariableClass { kDominant, kSecondary, kNegligible };
std::string_view to_string(VariableClass c);

struct SensitivityOptions {
  int probes = 5;
  double dominant = 0.1;
  double secondary = 0.01;
  std::uint64_t seed = 0;
};

struct SensitivityResult {
  std::vector<VariableClass> classes;
  std::vector<double> effects;
  std::vector<std::string> warnings;

  int count(VariableClass c) const;
};

// Axis sweeps through the center of the unit cube; probe k of every
// dimension shares one evaluation seed (common random numbers).
SensitivityResult classify_variables(Objective& objective, const SensitivityOptions& opts);

// Experiments ---------------------------------------------------------------

struct ExperimentSpec {
  Archetype archetype = Archetype::kSimpleRamp;
  ArchetypeParams params;
  std::optional<std::string> network_path;
  std::optional<std::string> gt_path;
  std::vector<Method> methods{Method::kRandom};
  Measure measure = Measure::kCount;
  int runs = 1;
  OptimizerConfig optimizer;  // method field unused
  SimulatorConfig simulator;
  double od_lower = 1.0;
  double od_upper = 2000.0;
  bool exclude_unobservable = false;
  std::uint64_t seed = 0;        // experiment seed; run seeds derive from it
  std::uint64_t gt_seed = 1;
  int gt_replications = 20;      // stochastic mode; deterministic uses 1
  int workers = 0;               // 0 = OpenMP default
  std::string out_dir = "results";

  static ExperimentSpec defaults_for(Archetype kind);
  void validate() const;
  nlohmann::json to_json() const;
  // Keys missing from the document keep the archetype defaults.
  static ExperimentSpec from_json(const nlohmann::json& j);
};

struct EvalRow {
  int epoch = 0;
  int eval_index = 0;
  double nrmse = 0.0;
  double loss = 0.0;
  std::uint64_t seed = 0;
};

struct RunRecord {
  Method method = Method::kRandom;
  int run = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  std::vector<EvalRow> evals;
  std::vector<double> trace;
  std::vector<double> tr_lengths;
  std::vector<HyperSnapshot> hypers;
  std::vector<std::string> warnings;
  std::vector<std::vector<double>> proposals;  // unit-cube points after the initial design
  std::vector<double> best_od;
  std::vector<double> best_sim;  // measure values at the best OD
  double init_min = 0.0;
  double best = 0.0;
  double improvement = 0.0;
};

struct ResultsBundle {
  std::string archetype;
  Measure measure = Measure::kCount;
  std::size_t full_dimension = 0;
  std::size_t dimension = 0;
  std::vector<std::size_t> excluded_pairs;
  std::vector<int> sensor_ids;
  std::vector<double> y_gt;
  int epochs = 0;
  std::vector<Method> methods;
  std::vector<RunRecord> runs;
  bool partial = false;
};

// Builds the scenario, ground truth and shared initial pools, runs every
// method on every run seed (worker pool over runs), writes per-run files and
// the report into spec.out_dir.
ResultsBundle run_experiment(const ExperimentSpec& spec);

struct ReportFiles {
  std::vector<std::string> written;
};

// Writes summary.csv, runs.csv, convergence_<method>.csv, fit_<method>.csv.
ReportFiles write_report(const ResultsBundle& bundle, const std::string& dir);

// Rebuilds a bundle from the files a previous run wrote.
ResultsBundle load_bundle(const std::string& dir);

}  // namespace odcal
