// Parallel kernels against their serial references.

#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "odcal/acquisition.hpp"
#include "odcal/harness.hpp"
#include "odcal/kernel.hpp"

using namespace odcal;

namespace {

PointMatrix uniform(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix p(n, d);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

const Kernel kKernel{KernelKind::kMatern52, Eigen::VectorXd::Constant(21, 0.4), 1.0};

void BM_CrossCovariance(benchmark::State& st) {
  const PointMatrix a = uniform(st.range(0), 21, 1), b = uniform(st.range(0), 21, 2);
  for (auto _ : st) benchmark::DoNotOptimize(cross_covariance(kKernel, a, b));
}

void BM_CrossCovarianceSerial(benchmark::State& st) {
  const PointMatrix a = uniform(st.range(0), 21, 1), b = uniform(st.range(0), 21, 2);
  for (auto _ : st) benchmark::DoNotOptimize(cross_covariance_serial(kKernel, a, b));
}

AcquisitionFn acquisition() {
  static const PointMatrix centers = uniform(64, 21, 3);
  return [](const Eigen::VectorXd& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < centers.rows(); ++i) {
      s += kernel_eval(kKernel, x, centers.row(i).transpose());
    }
    return s;
  };
}

void BM_ScoreCandidates(benchmark::State& st) {
  const PointMatrix p = uniform(st.range(0), 21, 4);
  const AcquisitionFn fn = acquisition();
  for (auto _ : st) benchmark::DoNotOptimize(score_candidates(fn, p));
}

void BM_ScoreCandidatesSerial(benchmark::State& st) {
  const PointMatrix p = uniform(st.range(0), 21, 4);
  const AcquisitionFn fn = acquisition();
  for (auto _ : st) benchmark::DoNotOptimize(score_candidates_serial(fn, p));
}

struct CorridorObjective {
  std::unique_ptr<CalibrationObjective> obj;
  PointMatrix points;
  std::vector<std::uint64_t> seeds;

  CorridorObjective() {
    const Scenario sc = build_archetype(Archetype::kOneWayCorridor);
    const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
    const ArchetypeDefaults d = archetype_defaults(Archetype::kOneWayCorridor);
    auto sim = std::make_shared<const Simulator>(sc, pairs, d.simulator);
    const ODBounds bounds = ODBounds::uniform(pairs.dimension(), d.od_lower, d.od_upper);
    const GroundTruth gt = generate_ground_truth(*sim, bounds, 1, 4);
    obj = std::make_unique<CalibrationObjective>(sim, bounds, gt_targets(sc.network, gt, Measure::kCount),
                                                 Measure::kCount);
    points = uniform(32, static_cast<Eigen::Index>(pairs.dimension()), 5);
    for (int i = 0; i < 32; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  }
};

void BM_ObjectiveEvaluate(benchmark::State& st) {
  static CorridorObjective c;
  for (auto _ : st) benchmark::DoNotOptimize(c.obj->evaluate(c.points, c.seeds));
}

void BM_ObjectiveEvaluateSerial(benchmark::State& st) {
  static CorridorObjective c;
  for (auto _ : st) benchmark::DoNotOptimize(c.obj->evaluate_serial(c.points, c.seeds));
}

}  // namespace

BENCHMARK(BM_CrossCovariance)->Arg(64)->Arg(256);
BENCHMARK(BM_CrossCovarianceSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_ScoreCandidates)->Arg(256)->Arg(1024);
BENCHMARK(BM_ScoreCandidatesSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_ObjectiveEvaluate);
BENCHMARK(BM_ObjectiveEvaluateSerial);

BENCHMARK_MAIN();
