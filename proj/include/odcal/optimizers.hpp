#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "odcal/acquisition.hpp"
#include "odcal/gp.hpp"
#include "odcal/kernel.hpp"
#include "odcal/network.hpp"

namespace odcal {

enum class Method { kRandom, kSpsa, kVanillaBo, kSaasBo, kTurbo };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct OptimizerConfig {
  Method method = Method::kVanillaBo;
  KernelKind kernel = KernelKind::kMatern52;
  int init_points = 10;
  int epochs = 50;
  int batch_size = 2;
  int num_restarts = 8;
  int raw_samples = 128;
  int sample_shape = 64;
  std::uint64_t seed = 0;

  bool mc_batch = false;        // vanilla: Monte Carlo q-batch instead of greedy fantasies
  double saas_weight = 1.0;     // sparsity penalty weight for saasbo
  double saas_tau = 0.1;
  int gp_restarts = 4;          // hyperparameter restarts on a full refit
  int gp_refit_every = 10;      // full refit period in epochs; warm start otherwise
  int gp_max_iters = 60;

  void validate() const;
  AcquisitionOptions acquisition() const;
};

struct EvalRecord {
  Eigen::VectorXd point;  // unit cube
  double value = 0.0;
  int epoch = 0;
  std::uint64_t seed = 0;
};

// Ordered evaluations; the incumbent is the minimum value, earliest on ties.
class EvaluationLog {
 public:
  void add(EvalRecord r);
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<EvalRecord>& records() const { return records_; }
  const EvalRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t incumbent_index() const;
  double incumbent_value() const;
  PointMatrix points(std::size_t from = 0) const;
  Eigen::VectorXd values(std::size_t from = 0) const;

 private:
  std::vector<EvalRecord> records_;
  std::size_t best_ = 0;
};

// Black-box objective over the unit cube. Evaluations of one call may run
// concurrently; seeds[i] is the evaluation seed of row i.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> evaluate(const PointMatrix& points,
                                       const std::vector<std::uint64_t>& seeds) = 0;
};

// Adapter for a plain function of a unit-cube point and a seed.
class FunctionObjective : public Objective {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&, std::uint64_t)>;
  FunctionObjective(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  std::size_t dimension() const override { return dim_; }
  std::vector<double> evaluate(const PointMatrix& points,
                               const std::vector<std::uint64_t>& seeds) override;

 private:
  std::size_t dim_;
  Fn fn_;
};

// Seed of evaluation `index` within `epoch` (epoch 0 is the initial design).
std::uint64_t evaluation_seed(std::uint64_t run_seed, int epoch, int index);

// n seeded uniform points in [0,1]^D; identical for a given (seed, D, n).
PointMatrix initial_design(std::size_t dim, int n, std::uint64_t run_seed);
// Same points mapped into demand space, one point per row.
PointMatrix initial_design(const ODBounds& bounds, int n, std::uint64_t run_seed);

// SPSA --------------------------------------------------------------------

struct SpsaConstants {
  double a = 0.0;
  double c = 0.1;
  double A = 0.0;
  double alpha = 0.602;
  double gamma = 0.101;

  double a_k(int k) const;
  double c_k(int k) const;
};

// A = ceil(0.1 T), c = 0.1, a = 0.1 (1 + A)^alpha rounded to two decimals.
SpsaConstants spsa_constants(int epochs);

struct SpsaState {
  Eigen::VectorXd d;
  int k = 0;
};

// Rademacher perturbation.
Eigen::VectorXd spsa_delta(std::size_t dim, std::uint64_t seed);

// (f+ - f-) / (2 c_k) * delta
Eigen::VectorXd spsa_gradient(double f_plus, double f_minus, double c_k,
                              const Eigen::VectorXd& delta);

// Evaluates f at clip(d +- c_k delta) through `oracle` (two points in, two
// values out) and returns the clipped update. Oracle failures are rethrown as
// OracleError with the perturbed point attached.
using PairOracle = std::function<std::pair<double, double>(const Eigen::VectorXd& plus,
                                                           const Eigen::VectorXd& minus)>;
SpsaState spsa_step(const SpsaState& state, const SpsaConstants& constants,
                    const PairOracle& oracle, std::uint64_t delta_seed,
                    Eigen::VectorXd* gradient = nullptr);

// Trust region ------------------------------------------------------------

struct TrustRegionState {
  double length = 0.8;
  int success_count = 0;
  int failure_count = 0;
  int success_tolerance = 3;
  int failure_tolerance = 1;
  double length_min = 0.0078125;  // 0.5^7
  double length_max = 1.6;
  double length_init = 0.8;
  double best_value = std::numeric_limits<double>::infinity();
  bool restart = false;
};

// ceil(max(4/b, D/b))
int turbo_failure_tolerance(std::size_t dim, int batch);
TrustRegionState make_trust_region(std::size_t dim, int batch);

// Pure transition: success iff min(values) < best_value (strict).
TrustRegionState turbo_update(const TrustRegionState& state, const std::vector<double>& values);

// l / mean(l), then divided by its geometric mean.
Eigen::VectorXd turbo_weights(const Eigen::VectorXd& lengthscales);

// min(20 / D, 1)
double turbo_perturbation_probability(std::size_t dim);

struct TurboRegion {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};
TurboRegion turbo_region(const Eigen::VectorXd& center, const Eigen::VectorXd& lengthscales,
                         double length);

// Candidates inside the region: low-discrepancy points, each coordinate
// kept at the center unless masked in (probability above, at least one).
PointMatrix turbo_candidates(const Eigen::VectorXd& center, const TurboRegion& region,
                             int count, std::uint64_t seed);

struct TurboProposal {
  PointMatrix points;
  bool collapsed = false;  // all region widths below 1e-12: restart
};

// Thompson sampling: one joint posterior draw per batch slot, each taking the
// best (lowest) candidate not already chosen.
TurboProposal turbo_propose(const GpModel& model, const TrustRegionState& state,
                            const Eigen::VectorXd& center, int batch, int raw_samples,
                            std::uint64_t seed);

// Run loop ----------------------------------------------------------------

struct HyperSnapshot {
  int epoch = 0;
  std::vector<double> lengthscales;
  double signal_var = 0.0;
  double noise_var = 0.0;
};

struct RunResult {
  Method method = Method::kRandom;
  EvaluationLog log;
  std::vector<double> trace;       // incumbent after init, then after each epoch
  std::vector<double> tr_lengths;  // TuRBO only, per epoch
  std::vector<HyperSnapshot> hypers;
  std::vector<std::string> warnings;
  int turbo_restarts = 0;
  bool completed = false;
  std::string error;
};

// Evaluates the initial design (given, or drawn from the run seed) and then
// runs `epochs` proposal rounds. Batch methods spend init + T b evaluations;
// SPSA spends 2 per epoch. An objective failure stops the run and is reported
// in `error` with the partial log kept.
RunResult run_optimizer(const OptimizerConfig& config, Objective& objective,
                        const std::optional<PointMatrix>& initial = std::nullopt);

}  // namespace odcal
