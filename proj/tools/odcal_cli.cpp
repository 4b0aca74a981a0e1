// odcal: command-line front end for scenario generation, calibration runs,
// sensor diagnostics, sensitivity sweeps and reporting.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "odcal/error.hpp"
#include "odcal/harness.hpp"
#include "odcal/io.hpp"

namespace {

using namespace odcal;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitPartial = 3;

SimulatorConfig simulator_for(const Scenario& sc) {
  return sc.archetype ? archetype_defaults(*sc.archetype).simulator : SimulatorConfig{};
}

struct GenNetworkArgs {
  std::string archetype = "simple-ramp";
  std::optional<int> scale;
  int bypass = 0;
  std::string out;
};

int gen_network(const GenNetworkArgs& a) {
  ArchetypeParams p;
  p.scale = a.scale;
  p.bypass_pairs = a.bypass;
  const Scenario sc = build_archetype(parse_archetype(a.archetype), p);
  write_json_file(a.out, scenario_to_json(sc));
  const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  std::printf("nodes=%zu links=%zu sensors=%zu tazs=%zu od_pairs=%zu\n", sc.network.nodes().size(),
              sc.network.links().size(), sc.network.sensors().size(), sc.partition.size(),
              pairs.dimension());
  return kExitOk;
}

struct GenGtArgs {
  std::string network;
  std::uint64_t seed = 1;
  int replications = 20;
  std::string mode = "stoch";
  std::optional<double> od_upper;
  std::string out;
};

int gen_gt(const GenGtArgs& a) {
  const Scenario sc = scenario_from_json(read_json_file(a.network));
  SimulatorConfig cfg = simulator_for(sc);
  cfg.mode = parse_sim_mode(a.mode);
  const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  const Simulator sim(sc, pairs, cfg);
  double hi = sc.archetype ? archetype_defaults(*sc.archetype).od_upper : 2000.0;
  if (a.od_upper) hi = *a.od_upper;
  const ODBounds bounds = ODBounds::uniform(pairs.dimension(), 1.0, hi);
  const int reps = cfg.mode == SimMode::kDeterministic ? 1 : a.replications;
  const GroundTruth gt = generate_ground_truth(sim, bounds, a.seed, reps);
  write_json_file(a.out, ground_truth_to_json(gt));
  std::printf("od_pairs=%zu sensors=%zu replications=%d\n", pairs.dimension(), gt.targets.size(), reps);
  return kExitOk;
}

struct RunArgs {
  std::string config;
  std::string network;
  std::string gt;
  std::string archetype;
  std::vector<std::string> models;
  std::string kernel, measure, mode;
  int epochs = 0, batch = 0, init = 0, runs = 0, workers = 0;
  std::uint64_t seed = 0;
  bool exclude = false;
  std::string out;
};

int run(const RunArgs& a, const CLI::App& cmd) {
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  ExperimentSpec spec;
  if (!a.config.empty()) {
    spec = ExperimentSpec::from_json(read_json_file(a.config));
  } else {
    Archetype arch = Archetype::kSimpleRamp;
    if (given("--archetype")) {
      arch = parse_archetype(a.archetype);
    } else if (given("--network")) {
      const Scenario sc = scenario_from_json(read_json_file(a.network));
      if (sc.archetype) arch = *sc.archetype;
    }
    spec = ExperimentSpec::defaults_for(arch);
  }
  if (given("--network")) spec.network_path = a.network;
  if (given("--gt")) {
    spec.gt_path = a.gt;
    spec.simulator.mode = ground_truth_from_json(read_json_file(a.gt)).mode;
  }
  if (given("--model")) {
    spec.methods.clear();
    for (const auto& m : a.models) spec.methods.push_back(parse_method(m));
  }
  if (given("--kernel")) spec.optimizer.kernel = parse_kernel(a.kernel);
  if (given("--measure")) spec.measure = parse_measure(a.measure);
  if (given("--mode")) spec.simulator.mode = parse_sim_mode(a.mode);
  if (given("--epochs")) spec.optimizer.epochs = a.epochs;
  if (given("--batch-size")) spec.optimizer.batch_size = a.batch;
  if (given("--init-points")) spec.optimizer.init_points = a.init;
  if (given("--runs")) spec.runs = a.runs;
  if (given("--seed")) spec.seed = a.seed;
  if (given("--workers")) spec.workers = a.workers;
  if (given("--exclude-unobservable")) spec.exclude_unobservable = a.exclude;
  if (given("--out")) spec.out_dir = a.out;

  const ResultsBundle b = run_experiment(spec);
  std::printf("dimension=%zu (of %zu)", b.dimension, b.full_dimension);
  if (!b.excluded_pairs.empty()) std::printf(", excluded %zu unobservable pairs", b.excluded_pairs.size());
  std::printf("\n");
  for (const RunRecord& r : b.runs) {
    if (r.completed) {
      std::printf("%-10s run %d  init %.6g  best %.6g  improvement %.2f%%\n",
                  std::string(to_string(r.method)).c_str(), r.run, r.init_min, r.best, r.improvement);
    } else {
      std::printf("%-10s run %d  FAILED: %s\n", std::string(to_string(r.method)).c_str(), r.run,
                  r.error.c_str());
    }
  }
  std::printf("results in %s\n", spec.out_dir.c_str());
  return b.partial ? kExitPartial : kExitOk;
}

struct FilterArgs {
  std::string network;
  std::string counts;
  double threshold = 0.5;
  double margin = 0.0;
};

int filter_sensors(const FilterArgs& a) {
  const Scenario sc = scenario_from_json(read_json_file(a.network));
  const IntervalCounts counts = read_interval_counts(a.counts);
  SensorDiagnostics d = filter_conservation(sc.network, counts, {a.threshold, a.margin});
  const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  d = apply_taz_exclusions(std::move(d), filter_taz_granularity(sc.network, sc.partition, pairs));
  std::printf("sensor_id,link_id,verdict,violation_fraction,max_margin\n");
  for (std::size_t i = 0; i < d.sensors.size(); ++i) {
    const SensorStatus& s = d.sensors[i];
    std::printf("%d,%d,%s,%.17g,%.17g\n", s.sensor_id, sc.network.sensors()[i].link,
                std::string(to_string(s.verdict)).c_str(), s.violation_fraction, s.max_margin);
  }
  return kExitOk;
}

struct SensitivityArgs {
  std::string network;
  std::string gt;
  int probes = 5;
  double dominant = 0.1;
  double secondary = 0.01;
  std::uint64_t seed = 0;
  std::string measure = "count";
};

int sensitivity(const SensitivityArgs& a) {
  const Scenario sc = scenario_from_json(read_json_file(a.network));
  const GroundTruth gt = ground_truth_from_json(read_json_file(a.gt));
  SimulatorConfig cfg = simulator_for(sc);
  cfg.mode = gt.mode;
  const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  if (gt.x_star.size() != pairs.dimension()) {
    throw ValidationError("ground truth does not match the network's OD pairs");
  }
  const Measure measure = parse_measure(a.measure);
  const double hi = sc.archetype ? archetype_defaults(*sc.archetype).od_upper : 2000.0;
  auto sim = std::make_shared<const Simulator>(sc, pairs, cfg);
  CalibrationObjective obj(sim, ODBounds::uniform(pairs.dimension(), 1.0, hi),
                           gt_targets(sc.network, gt, measure), measure);
  const SensitivityResult r = classify_variables(obj, {a.probes, a.dominant, a.secondary, a.seed});
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("dim,origin,destination,effect,class\n");
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    std::printf("%zu,%d,%d,%.17g,%s\n", i, pairs.pairs[i].origin, pairs.pairs[i].destination,
                r.effects[i], std::string(to_string(r.classes[i])).c_str());
  }
  std::printf("# dominant=%d secondary=%d negligible=%d\n", r.count(VariableClass::kDominant),
              r.count(VariableClass::kSecondary), r.count(VariableClass::kNegligible));
  return kExitOk;
}

int report(const std::string& in, const std::string& out) {
  const ResultsBundle b = load_bundle(in);
  const ReportFiles files = write_report(b, out.empty() ? in : out);
  for (const auto& f : files.written) std::printf("%s\n", f.c_str());
  return b.partial ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OD demand calibration benchmark"};
  app.require_subcommand(1);

  GenNetworkArgs gn;
  auto* c_gn = app.add_subcommand("gen-network", "Build an archetype scenario");
  c_gn->add_option("--archetype", gn.archetype, "simple-ramp|corridor|junction|small-region|region");
  c_gn->add_option("--scale", gn.scale, "Size parameter (zones or grid side)");
  c_gn->add_option("--bypass-pairs", gn.bypass, "Inject sensor-bypassing zone connectors");
  c_gn->add_option("--out", gn.out, "Scenario JSON path")->required();

  GenGtArgs gg;
  auto* c_gg = app.add_subcommand("gen-gt", "Synthesize ground truth for a scenario");
  c_gg->add_option("--network", gg.network)->required()->check(CLI::ExistingFile);
  c_gg->add_option("--seed", gg.seed);
  c_gg->add_option("--replications", gg.replications);
  c_gg->add_option("--mode", gg.mode, "det|stoch");
  c_gg->add_option("--od-upper", gg.od_upper);
  c_gg->add_option("--out", gg.out)->required();

  RunArgs ra;
  auto* c_run = app.add_subcommand("run", "Run calibration experiments");
  c_run->add_option("--config", ra.config, "Experiment JSON; flags override it")->check(CLI::ExistingFile);
  c_run->add_option("--network", ra.network)->check(CLI::ExistingFile);
  c_run->add_option("--gt", ra.gt)->check(CLI::ExistingFile);
  c_run->add_option("--archetype", ra.archetype, "Build this archetype when no network is given");
  c_run->add_option("--model", ra.models, "random|spsa|vanilla-bo|saasbo|turbo (repeatable)");
  c_run->add_option("--kernel", ra.kernel, "matern32|matern52|rbf");
  c_run->add_option("--measure", ra.measure, "count|speed");
  c_run->add_option("--mode", ra.mode, "det|stoch");
  c_run->add_option("--epochs", ra.epochs);
  c_run->add_option("--batch-size", ra.batch);
  c_run->add_option("--init-points", ra.init);
  c_run->add_option("--runs", ra.runs);
  c_run->add_option("--seed", ra.seed);
  c_run->add_option("--workers", ra.workers, "Concurrent runs (0 = all cores)");
  c_run->add_flag("--exclude-unobservable", ra.exclude);
  c_run->add_option("--out", ra.out);

  FilterArgs fa;
  auto* c_f = app.add_subcommand("filter-sensors", "Sensor reliability diagnostics");
  c_f->add_option("--network", fa.network)->required()->check(CLI::ExistingFile);
  c_f->add_option("--counts", fa.counts, "CSV interval,sensor_id,count")->required()->check(CLI::ExistingFile);
  c_f->add_option("--threshold", fa.threshold, "Violating fraction of intervals");
  c_f->add_option("--margin", fa.margin, "Tolerated violation in vehicles");

  SensitivityArgs sa;
  auto* c_s = app.add_subcommand("sensitivity", "Classify OD variables by axis-sweep effect");
  c_s->add_option("--network", sa.network)->required()->check(CLI::ExistingFile);
  c_s->add_option("--gt", sa.gt)->required()->check(CLI::ExistingFile);
  c_s->add_option("--probes", sa.probes);
  c_s->add_option("--dominant", sa.dominant);
  c_s->add_option("--secondary", sa.secondary);
  c_s->add_option("--seed", sa.seed);
  c_s->add_option("--measure", sa.measure);

  std::string rin, rout;
  auto* c_r = app.add_subcommand("report", "Rebuild report tables from a results directory");
  c_r->add_option("--in", rin)->required()->check(CLI::ExistingDirectory);
  c_r->add_option("--out", rout, "Defaults to --in");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (c_gn->parsed()) return gen_network(gn);
    if (c_gg->parsed()) return gen_gt(gg);
    if (c_run->parsed()) return run(ra, *c_run);
    if (c_f->parsed()) return filter_sensors(fa);
    if (c_s->parsed()) return sensitivity(sa);
    if (c_r->parsed()) return report(rin, rout);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const OracleError& e) {
    std::fprintf(stderr, "objective failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
