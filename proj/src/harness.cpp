#include "odcal/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include <omp.h>

#include "odcal/error.hpp"
#include "odcal/io.hpp"
#include "odcal/seed.hpp"

namespace odcal {

using nlohmann::json;

ArchetypeDefaults archetype_defaults(Archetype kind) {
  ArchetypeDefaults d;
  SimulatorConfig& s = d.simulator;
  OptimizerConfig& o = d.optimizer;
  s.mode = SimMode::kStochastic;
  auto set = [&](double sim_end, double sensor_start, double od_end, int init, int epochs,
                 int batch, int restarts, int raw, int shape, int runs) {
    s.simulation = {0.0, sim_end};
    s.sensor = {sensor_start, sim_end};
    s.od = {0.0, od_end};
    o.init_points = init;
    o.epochs = epochs;
    o.batch_size = batch;
    o.num_restarts = restarts;
    o.raw_samples = raw;
    o.sample_shape = shape;
    d.runs = runs;
  };
  switch (kind) {
    case Archetype::kSimpleRamp:
      set(3600, 0, 3300, 10, 50, 2, 8, 128, 64, 10);
      d.od_upper = 2500.0;
      break;
    case Archetype::kOneWayCorridor:
      set(3900, 300, 3600, 20, 100, 3, 16, 256, 64, 10);
      break;
    case Archetype::kJunction:
      set(3900, 300, 3600, 30, 200, 4, 32, 512, 128, 10);
      s.theta = 60.0;
      break;
    case Archetype::kSmallRegion:
      set(4200, 600, 3600, 50, 600, 5, 64, 1024, 128, 3);
      break;
    case Archetype::kRegion:
      set(4800, 1200, 3600, 20, 5, 2, 32, 512, 128, 1);
      s.theta = 60.0;
      break;
  }
  return d;
}

std::vector<double> gt_targets(const RoadNetwork& network, const GroundTruth& gt, Measure measure) {
  std::map<int, const SensorTarget*> by_id;
  for (const SensorTarget& t : gt.targets) by_id[t.sensor_id] = &t;
  std::vector<double> out;
  out.reserve(network.sensors().size());
  for (const Sensor& s : network.sensors()) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw ValidationError("ground truth lacks sensor " + std::to_string(s.id));
    out.push_back(measure == Measure::kCount ? it->second->count : it->second->speed);
  }
  if (by_id.size() != network.sensors().size()) {
    throw ValidationError("ground truth has targets for sensors not in the network");
  }
  return out;
}

// Objective ------------------------------------------------------------------

CalibrationObjective::CalibrationObjective(std::shared_ptr<const Simulator> sim, ODBounds bounds,
                                           std::vector<double> targets, Measure measure)
    : sim_(std::move(sim)), bounds_(std::move(bounds)), targets_(std::move(targets)), measure_(measure) {
  if (!sim_) throw ValidationError("objective needs a simulator");
  if (bounds_.dimension() != sim_->pairs().dimension()) {
    throw ValidationError("bounds dimension does not match the OD pair count");
  }
  if (targets_.size() != sim_->num_sensors()) {
    throw ValidationError("target count does not match the sensor count");
  }
}

std::vector<double> CalibrationObjective::simulate_measure(const Eigen::VectorXd& unit,
                                                           std::uint64_t seed) const {
  ODVector od{bounds_.from_unit(std::vector<double>(unit.data(), unit.data() + unit.size())), bounds_};
  const SimulationResult r = sim_->run(od, seed);
  if (measure_ == Measure::kSpeed) return r.speeds;
  return std::vector<double>(r.counts.begin(), r.counts.end());
}

double CalibrationObjective::evaluate_one(const Eigen::VectorXd& unit, std::uint64_t seed) const {
  return nrmse(targets_, simulate_measure(unit, seed));
}

std::vector<double> CalibrationObjective::evaluate(const PointMatrix& points,
                                                   const std::vector<std::uint64_t>& seeds) {
  const Eigen::Index n = points.rows();
  if (seeds.size() != static_cast<std::size_t>(n)) throw ValidationError("one seed per point required");
  std::vector<double> out(static_cast<std::size_t>(n));
  std::exception_ptr failure;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] =
          evaluate_one(points.row(i).transpose(), seeds[static_cast<std::size_t>(i)]);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<double> CalibrationObjective::evaluate_serial(const PointMatrix& points,
                                                          const std::vector<std::uint64_t>& seeds) const {
  if (seeds.size() != static_cast<std::size_t>(points.rows())) {
    throw ValidationError("one seed per point required");
  }
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        evaluate_one(points.row(i).transpose(), seeds[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Sensor filters -----------------------------------------------------------

std::string_view to_string(SensorVerdict v) {
  switch (v) {
    case SensorVerdict::kRetained: return "retained";
    case SensorVerdict::kConservationViolation: return "conservation-violation";
    case SensorVerdict::kTazGranularity: return "taz-granularity-excluded";
  }
  return "unknown";
}

SensorDiagnostics SensorDiagnostics::all_retained(const RoadNetwork& network) {
  SensorDiagnostics d;
  for (const Sensor& s : network.sensors()) d.sensors.push_back({s.id});
  return d;
}

std::set<int> SensorDiagnostics::with_verdict(SensorVerdict v) const {
  std::set<int> out;
  for (const auto& s : sensors) {
    if (s.verdict == v) out.insert(s.sensor_id);
  }
  return out;
}

IntervalCounts read_interval_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty counts file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "interval,sensor_id,count") {
    throw ValidationError("counts file header must be 'interval,sensor_id,count'");
  }
  std::map<int, std::map<int, double>> raw;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw ValidationError("malformed counts row " + std::to_string(row));
    }
    try {
      raw[std::stoi(b)][std::stoi(a)] = std::stod(c);
    } catch (const std::exception&) {
      throw ValidationError("malformed counts row " + std::to_string(row));
    }
  }
  IntervalCounts out;
  for (const auto& [sensor, series] : raw) {
    auto& v = out[sensor];
    for (const auto& [interval, value] : series) v.push_back(value);
  }
  return out;
}

namespace {

struct MainlineIndex {
  // Per node index: mainline link entering / leaving, if any.
  std::vector<std::optional<std::size_t>> in;
  std::vector<std::optional<std::size_t>> out;
  // Per link index: chain id and position (mainline links only).
  std::vector<int> chain;
  std::vector<int> position;
};

MainlineIndex index_mainlines(const RoadNetwork& net) {
  MainlineIndex mi;
  const std::size_t nn = net.nodes().size();
  const std::size_t nl = net.links().size();
  mi.in.assign(nn, std::nullopt);
  mi.out.assign(nn, std::nullopt);
  mi.chain.assign(nl, -1);
  mi.position.assign(nl, -1);
  for (std::size_t l = 0; l < nl; ++l) {
    const Link& link = net.links()[l];
    if (link.kind != LinkKind::kMainline) continue;
    const std::size_t from = net.node_index(link.from);
    const std::size_t to = net.node_index(link.to);
    if (mi.out[from] || mi.in[to]) {
      throw ValidationError("mainline branches at a node; sensors cannot be ordered along it");
    }
    mi.out[from] = l;
    mi.in[to] = l;
  }
  int next_chain = 0;
  for (std::size_t l = 0; l < nl; ++l) {
    if (net.links()[l].kind != LinkKind::kMainline || mi.chain[l] >= 0) continue;
    // Walk back to the chain head (stop on a cycle).
    std::size_t head = l;
    for (std::size_t guard = 0; guard < nl; ++guard) {
      const auto prev = mi.in[net.node_index(net.links()[head].from)];
      if (!prev || *prev == l) break;
      head = *prev;
    }
    int pos = 0;
    std::optional<std::size_t> cur = head;
    while (cur && mi.chain[*cur] < 0) {
      mi.chain[*cur] = next_chain;
      mi.position[*cur] = pos++;
      cur = mi.out[net.node_index(net.links()[*cur].to)];
    }
    ++next_chain;
  }
  return mi;
}

std::optional<std::size_t> nearest_sensor(const RoadNetwork& net, const MainlineIndex& mi,
                                          std::optional<std::size_t> link, bool forward) {
  for (std::size_t guard = 0; link && guard < net.links().size(); ++guard) {
    if (auto s = net.sensor_on_link(*link)) return s;
    const Link& l = net.links()[*link];
    link = forward ? mi.out[net.node_index(l.to)] : mi.in[net.node_index(l.from)];
  }
  return std::nullopt;
}

}  // namespace

SensorDiagnostics filter_conservation(const RoadNetwork& network, const IntervalCounts& counts,
                                      const ConservationOptions& opts,
                                      std::optional<SensorDiagnostics> prior) {
  if (opts.violation_threshold < 0.0 || opts.violation_threshold > 1.0) {
    throw ConfigError("violation threshold must lie in [0, 1]");
  }
  for (const auto& [id, series] : counts) {
    bool found = false;
    for (const Sensor& s : network.sensors()) found = found || s.id == id;
    if (!found) throw ValidationError("sensor " + std::to_string(id) + " is not on any mainline");
  }
  SensorDiagnostics diag = prior ? std::move(*prior) : SensorDiagnostics::all_retained(network);
  if (diag.sensors.size() != network.sensors().size()) {
    throw ValidationError("diagnostics do not match the network sensors");
  }
  const MainlineIndex mi = index_mainlines(network);

  std::vector<char> flag(network.sensors().size(), 0);
  auto compare = [&](std::size_t up, std::size_t down, bool merge) {
    const auto iu = counts.find(network.sensors()[up].id);
    const auto id = counts.find(network.sensors()[down].id);
    if (iu == counts.end() || id == counts.end()) return;
    const std::size_t n = std::min(iu->second.size(), id->second.size());
    if (n == 0) return;
    std::size_t bad = 0;
    double worst = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double excess = merge ? iu->second[t] - id->second[t] : id->second[t] - iu->second[t];
      worst = std::max(worst, excess);
      if (excess > opts.margin) ++bad;
    }
    const double frac = static_cast<double>(bad) / static_cast<double>(n);
    for (std::size_t s : {up, down}) {
      diag.sensors[s].violation_fraction = std::max(diag.sensors[s].violation_fraction, frac);
      diag.sensors[s].max_margin = std::max(diag.sensors[s].max_margin, worst);
    }
    if (frac > opts.violation_threshold) flag[up] = flag[down] = 1;
  };

  for (std::size_t l = 0; l < network.links().size(); ++l) {
    const Link& link = network.links()[l];
    if (link.kind == LinkKind::kMainline) continue;
    const std::size_t to = network.node_index(link.to);
    const std::size_t from = network.node_index(link.from);
    // Merge: the link feeds a mainline node.
    if (link.kind != LinkKind::kOffRamp && (mi.in[to] || mi.out[to])) {
      const auto up = nearest_sensor(network, mi, mi.in[to], false);
      const auto down = nearest_sensor(network, mi, mi.out[to], true);
      if (up && down) compare(*up, *down, true);
    }
    // Diverge: the link leaves a mainline node.
    if (link.kind != LinkKind::kOnRamp && (mi.in[from] || mi.out[from])) {
      const auto up = nearest_sensor(network, mi, mi.in[from], false);
      const auto down = nearest_sensor(network, mi, mi.out[from], true);
      if (up && down) compare(*up, *down, false);
    }
  }
  for (std::size_t s = 0; s < flag.size(); ++s) {
    if (flag[s] && diag.sensors[s].verdict == SensorVerdict::kRetained) {
      diag.sensors[s].verdict = SensorVerdict::kConservationViolation;
    }
  }
  return diag;
}

std::set<int> filter_taz_granularity(const RoadNetwork& network, const TazPartition& partition,
                                     const ODPairSet& pairs) {
  const MainlineIndex mi = index_mainlines(network);
  std::set<int> origins;
  std::set<int> destinations;
  for (const ODPair& p : pairs.pairs) {
    origins.insert(p.origin);
    destinations.insert(p.destination);
  }
  // Chain position of the mainline link right after an attachment node.
  auto attach_pos = [&](std::size_t node) -> std::optional<std::pair<int, int>> {
    if (mi.out[node]) return std::pair{mi.chain[*mi.out[node]], mi.position[*mi.out[node]]};
    if (mi.in[node]) return std::pair{mi.chain[*mi.in[node]], mi.position[*mi.in[node]] + 1};
    return std::nullopt;
  };

  std::set<int> excluded;
  auto exclude_between = [&](const std::vector<std::pair<int, int>>& attachments) {
    std::map<int, std::pair<int, int>> span;  // chain -> (first, last)
    std::map<int, int> count;
    for (const auto& [chain, pos] : attachments) {
      auto [it, inserted] = span.try_emplace(chain, pos, pos);
      if (!inserted) {
        it->second.first = std::min(it->second.first, pos);
        it->second.second = std::max(it->second.second, pos);
      }
      ++count[chain];
    }
    for (const auto& [chain, range] : span) {
      if (count[chain] < 2) continue;
      for (const Sensor& s : network.sensors()) {
        const std::size_t li = network.link_index(s.link);
        if (mi.chain[li] == chain && mi.position[li] >= range.first && mi.position[li] < range.second) {
          excluded.insert(s.id);
        }
      }
    }
  };

  for (const Taz& zone : partition.zones) {
    if (origins.contains(zone.id)) {
      std::vector<std::pair<int, int>> att;
      for (int src : zone.sources) {
        for (std::size_t l : network.out_links(network.node_index(src))) {
          const Link& link = network.links()[l];
          if (link.kind != LinkKind::kOnRamp) continue;
          if (auto p = attach_pos(network.node_index(link.to))) att.push_back(*p);
        }
      }
      exclude_between(att);
    }
    if (destinations.contains(zone.id)) {
      std::vector<std::pair<int, int>> att;
      for (int dst : zone.sinks) {
        for (std::size_t l : network.in_links(network.node_index(dst))) {
          const Link& link = network.links()[l];
          if (link.kind != LinkKind::kOffRamp) continue;
          if (auto p = attach_pos(network.node_index(link.from))) att.push_back(*p);
        }
      }
      exclude_between(att);
    }
  }
  return excluded;
}

SensorDiagnostics apply_taz_exclusions(SensorDiagnostics diag, const std::set<int>& excluded) {
  for (auto& s : diag.sensors) {
    if (excluded.contains(s.sensor_id) && s.verdict == SensorVerdict::kRetained) {
      s.verdict = SensorVerdict::kTazGranularity;
    }
  }
  return diag;
}

// Sensitivity ----------------------------------------------------------------

std::string_view to_string(VariableClass c) {
  switch (c) {
    case VariableClass::kDominant: return "dominant";
    case VariableClass::kSecondary: return "secondary";
    case VariableClass::kNegligible: return "negligible";
  }
  return "unknown";
}

int SensitivityResult::count(VariableClass c) const {
  return static_cast<int>(std::count(classes.begin(), classes.end(), c));
}

SensitivityResult classify_variables(Objective& objective, const SensitivityOptions& opts) {
  if (opts.probes < 3) throw ConfigError("sensitivity sweep needs at least 3 probes");
  if (!(opts.dominant > opts.secondary) || opts.secondary < 0.0) {
    throw ConfigError("sensitivity thresholds must satisfy dominant > secondary >= 0");
  }
  const auto dim = static_cast<Eigen::Index>(objective.dimension());
  const int p = opts.probes;
  PointMatrix pts(dim * p, dim);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(dim * p));
  for (Eigen::Index d = 0; d < dim; ++d) {
    for (int k = 0; k < p; ++k) {
      const Eigen::Index row = d * p + k;
      pts.row(row).setConstant(0.5);
      pts(row, d) = static_cast<double>(k) / (p - 1);
      seeds[static_cast<std::size_t>(row)] = evaluation_seed(opts.seed, 0, k);
    }
  }
  const std::vector<double> v = objective.evaluate(pts, seeds);
  SensitivityResult res;
  for (Eigen::Index d = 0; d < dim; ++d) {
    const auto first = v.begin() + d * p;
    const auto [lo, hi] = std::minmax_element(first, first + p);
    res.effects.push_back(*hi - *lo);
  }
  const double top = dim > 0 ? *std::max_element(res.effects.begin(), res.effects.end()) : 0.0;
  if (!(top > 0.0)) res.warnings.emplace_back("objective is constant along every axis sweep");
  for (double e : res.effects) {
    if (top > 0.0 && e >= opts.dominant * top) {
      res.classes.push_back(VariableClass::kDominant);
    } else if (top > 0.0 && e >= opts.secondary * top) {
      res.classes.push_back(VariableClass::kSecondary);
    } else {
      res.classes.push_back(VariableClass::kNegligible);
    }
  }
  return res;
}

// Experiment spec ---------------------------------------------------------------

ExperimentSpec ExperimentSpec::defaults_for(Archetype kind) {
  const ArchetypeDefaults d = archetype_defaults(kind);
  ExperimentSpec s;
  s.archetype = kind;
  s.optimizer = d.optimizer;
  s.simulator = d.simulator;
  s.od_lower = d.od_lower;
  s.od_upper = d.od_upper;
  s.runs = d.runs;
  return s;
}

void ExperimentSpec::validate() const {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (!(od_lower < od_upper)) throw ConfigError("OD lower bound must be below the upper bound");
  if (gt_replications < 1) throw ConfigError("ground-truth replications must be at least 1");
  if (workers < 0) throw ConfigError("workers must be non-negative");
  if (out_dir.empty()) throw ConfigError("output directory must be set");
  optimizer.validate();
  simulator.validate();
}

namespace {

json window_json(const TimeWindow& w) { return json::array({w.start, w.end}); }

TimeWindow window_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("time windows are [start, end] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

json ExperimentSpec::to_json() const {
  json j;
  j["archetype"] = std::string(to_string(archetype));
  if (params.scale) j["scale"] = *params.scale;
  j["bypass_pairs"] = params.bypass_pairs;
  if (network_path) j["network"] = *network_path;
  if (gt_path) j["gt"] = *gt_path;
  j["methods"] = json::array();
  for (Method m : methods) j["methods"].push_back(std::string(to_string(m)));
  j["kernel"] = std::string(to_string(optimizer.kernel));
  j["measure"] = std::string(to_string(measure));
  j["runs"] = runs;
  j["epochs"] = optimizer.epochs;
  j["batch_size"] = optimizer.batch_size;
  j["init_points"] = optimizer.init_points;
  j["num_restarts"] = optimizer.num_restarts;
  j["raw_samples"] = optimizer.raw_samples;
  j["sample_shape"] = optimizer.sample_shape;
  j["mc_batch"] = optimizer.mc_batch;
  j["saas_weight"] = optimizer.saas_weight;
  j["saas_tau"] = optimizer.saas_tau;
  j["gp_restarts"] = optimizer.gp_restarts;
  j["gp_refit_every"] = optimizer.gp_refit_every;
  j["gp_max_iters"] = optimizer.gp_max_iters;
  j["mode"] = std::string(to_string(simulator.mode));
  j["simulation_window"] = window_json(simulator.simulation);
  j["sensor_window"] = window_json(simulator.sensor);
  j["od_window"] = window_json(simulator.od);
  j["theta"] = simulator.theta;
  j["bpr_alpha"] = simulator.bpr_alpha;
  j["bpr_beta"] = simulator.bpr_beta;
  j["max_routes"] = simulator.max_routes;
  j["od_lower"] = od_lower;
  j["od_upper"] = od_upper;
  j["exclude_unobservable"] = exclude_unobservable;
  j["seed"] = seed;
  j["gt_seed"] = gt_seed;
  j["gt_replications"] = gt_replications;
  j["workers"] = workers;
  j["out"] = out_dir;
  return j;
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    const Archetype arch = j.contains("archetype")
                               ? parse_archetype(j.at("archetype").get<std::string>())
                               : Archetype::kSimpleRamp;
    ExperimentSpec s = defaults_for(arch);
    for (const auto& [key, v] : j.items()) {
      if (key == "archetype") continue;
      else if (key == "scale") s.params.scale = v.get<int>();
      else if (key == "bypass_pairs") s.params.bypass_pairs = v.get<int>();
      else if (key == "network") s.network_path = v.get<std::string>();
      else if (key == "gt") s.gt_path = v.get<std::string>();
      else if (key == "methods" || key == "model") {
        s.methods.clear();
        if (v.is_string()) s.methods.push_back(parse_method(v.get<std::string>()));
        else for (const auto& m : v) s.methods.push_back(parse_method(m.get<std::string>()));
      }
      else if (key == "kernel") s.optimizer.kernel = parse_kernel(v.get<std::string>());
      else if (key == "measure") s.measure = parse_measure(v.get<std::string>());
      else if (key == "runs") s.runs = v.get<int>();
      else if (key == "epochs") s.optimizer.epochs = v.get<int>();
      else if (key == "batch_size") s.optimizer.batch_size = v.get<int>();
      else if (key == "init_points") s.optimizer.init_points = v.get<int>();
      else if (key == "num_restarts") s.optimizer.num_restarts = v.get<int>();
      else if (key == "raw_samples") s.optimizer.raw_samples = v.get<int>();
      else if (key == "sample_shape") s.optimizer.sample_shape = v.get<int>();
      else if (key == "mc_batch") s.optimizer.mc_batch = v.get<bool>();
      else if (key == "saas_weight") s.optimizer.saas_weight = v.get<double>();
      else if (key == "saas_tau") s.optimizer.saas_tau = v.get<double>();
      else if (key == "gp_restarts") s.optimizer.gp_restarts = v.get<int>();
      else if (key == "gp_refit_every") s.optimizer.gp_refit_every = v.get<int>();
      else if (key == "gp_max_iters") s.optimizer.gp_max_iters = v.get<int>();
      else if (key == "mode") s.simulator.mode = parse_sim_mode(v.get<std::string>());
      else if (key == "simulation_window") s.simulator.simulation = window_from(v);
      else if (key == "sensor_window") s.simulator.sensor = window_from(v);
      else if (key == "od_window") s.simulator.od = window_from(v);
      else if (key == "theta") s.simulator.theta = v.get<double>();
      else if (key == "bpr_alpha") s.simulator.bpr_alpha = v.get<double>();
      else if (key == "bpr_beta") s.simulator.bpr_beta = v.get<double>();
      else if (key == "max_routes") s.simulator.max_routes = v.get<int>();
      else if (key == "od_lower") s.od_lower = v.get<double>();
      else if (key == "od_upper") s.od_upper = v.get<double>();
      else if (key == "exclude_unobservable") s.exclude_unobservable = v.get<bool>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "gt_seed") s.gt_seed = v.get<std::uint64_t>();
      else if (key == "gt_replications") s.gt_replications = v.get<int>();
      else if (key == "workers") s.workers = v.get<int>();
      else if (key == "out") s.out_dir = v.get<std::string>();
      else throw ConfigError("unknown experiment config key '" + key + "'");
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config value: ") + e.what());
  }
}

// Experiment run -----------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string run_stem(Method m, int run) {
  return std::string(to_string(m)) + "_run" + std::to_string(run);
}

json hypers_json(const std::vector<HyperSnapshot>& hs) {
  json a = json::array();
  for (const auto& h : hs) {
    a.push_back({{"epoch", h.epoch},
                 {"lengthscales", h.lengthscales},
                 {"signal_var", h.signal_var},
                 {"noise_var", h.noise_var}});
  }
  return a;
}

json run_json(const RunRecord& r, const OptimizerConfig& cfg) {
  json j;
  j["method"] = std::string(to_string(r.method));
  j["run"] = r.run;
  j["seed"] = r.seed;
  j["completed"] = r.completed;
  j["error"] = r.error;
  j["config"] = {{"kernel", std::string(to_string(cfg.kernel))},
                 {"init_points", cfg.init_points},
                 {"epochs", cfg.epochs},
                 {"batch_size", cfg.batch_size},
                 {"num_restarts", cfg.num_restarts},
                 {"raw_samples", cfg.raw_samples},
                 {"sample_shape", cfg.sample_shape},
                 {"mc_batch", cfg.mc_batch}};
  j["incumbent_trace"] = r.trace;
  j["tr_lengths"] = r.tr_lengths;
  j["hyperparameters"] = hypers_json(r.hypers);
  j["warnings"] = r.warnings;
  j["proposals"] = r.proposals;
  j["best_od"] = r.best_od;
  j["best_sim"] = r.best_sim;
  j["init_min"] = r.init_min;
  j["best"] = r.best;
  j["improvement"] = r.improvement;
  return j;
}

std::string trace_csv(const RunRecord& r) {
  std::string s = "epoch,eval_index,nrmse,loss,seed\n";
  for (const EvalRow& e : r.evals) {
    s += std::to_string(e.epoch) + "," + std::to_string(e.eval_index) + "," + fmt(e.nrmse) + "," +
         fmt(e.loss) + "," + std::to_string(e.seed) + "\n";
  }
  return s;
}

void finish_record(RunRecord& rec) {
  if (rec.trace.empty()) return;
  rec.init_min = rec.trace.front();
  rec.best = *std::min_element(rec.trace.begin(), rec.trace.end());
  rec.improvement = rec.init_min > 0.0 ? improvement(rec.init_min, rec.best) : 0.0;
}

}  // namespace

ResultsBundle run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  Scenario sc = spec.network_path ? scenario_from_json(read_json_file(*spec.network_path))
                                  : build_archetype(spec.archetype, spec.params);
  const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  if (pairs.dimension() == 0) throw ValidationError("scenario has no feasible OD pairs");
  const std::vector<RouteSet> routes = compute_routes(sc, pairs, spec.simulator);
  auto full_sim = std::make_shared<const Simulator>(sc, pairs, spec.simulator, routes);
  const ODBounds full_bounds = ODBounds::uniform(pairs.dimension(), spec.od_lower, spec.od_upper);

  GroundTruth gt;
  if (spec.gt_path) {
    gt = ground_truth_from_json(read_json_file(*spec.gt_path));
    if (gt.x_star.size() != pairs.dimension()) {
      throw ValidationError("ground truth x_star does not match the scenario's OD pair count");
    }
  } else {
    const int reps = spec.simulator.mode == SimMode::kDeterministic ? 1 : spec.gt_replications;
    gt = generate_ground_truth(*full_sim, full_bounds, spec.gt_seed, reps);
  }

  ResultsBundle bundle;
  bundle.archetype = sc.archetype ? std::string(to_string(*sc.archetype)) : "custom";
  bundle.measure = spec.measure;
  bundle.full_dimension = pairs.dimension();
  bundle.methods = spec.methods;
  bundle.epochs = spec.optimizer.epochs;
  for (const Sensor& s : sc.network.sensors()) bundle.sensor_ids.push_back(s.id);
  bundle.y_gt = gt_targets(sc.network, gt, spec.measure);

  std::vector<std::size_t> keep;
  std::shared_ptr<const Simulator> sim = full_sim;
  if (spec.exclude_unobservable) {
    bundle.excluded_pairs = identify_unobservable_pairs(sc.network, pairs, routes);
    ODPairSet reduced;
    std::vector<RouteSet> reduced_routes;
    for (std::size_t i = 0; i < pairs.dimension(); ++i) {
      if (std::binary_search(bundle.excluded_pairs.begin(), bundle.excluded_pairs.end(), i)) continue;
      keep.push_back(i);
      reduced.pairs.push_back(pairs.pairs[i]);
      reduced_routes.push_back(routes[i]);
    }
    if (keep.empty()) throw ValidationError("every OD pair is unobservable; nothing to calibrate");
    sim = std::make_shared<const Simulator>(sc, reduced, spec.simulator, reduced_routes);
  } else {
    for (std::size_t i = 0; i < pairs.dimension(); ++i) keep.push_back(i);
  }
  bundle.dimension = keep.size();
  const ODBounds bounds = ODBounds::uniform(keep.size(), spec.od_lower, spec.od_upper);
  CalibrationObjective objective(sim, bounds, bundle.y_gt, spec.measure);

  const double n_sensors = static_cast<double>(bundle.y_gt.size());
  const double gt_mean = mean_of(bundle.y_gt);

  struct Task {
    Method method;
    int run;
  };
  std::vector<Task> tasks;
  for (int r = 0; r < spec.runs; ++r) {
    for (Method m : spec.methods) tasks.push_back({m, r});
  }
  bundle.runs.resize(tasks.size());

  const int threads = spec.workers > 0 ? spec.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    RunRecord& rec = bundle.runs[t];
    rec.method = tasks[t].method;
    rec.run = tasks[t].run;
    rec.seed = stream_seed(spec.seed, Stream::kRunSeed, static_cast<std::uint64_t>(rec.run));
    try {
      // The pool is drawn over every pair and projected onto the kept ones so
      // runs with and without exclusion start from the same demands.
      const PointMatrix full_pool =
          initial_design(pairs.dimension(), spec.optimizer.init_points, rec.seed);
      PointMatrix pool(full_pool.rows(), static_cast<Eigen::Index>(keep.size()));
      for (std::size_t c = 0; c < keep.size(); ++c) {
        pool.col(static_cast<Eigen::Index>(c)) = full_pool.col(static_cast<Eigen::Index>(keep[c]));
      }
      OptimizerConfig cfg = spec.optimizer;
      cfg.method = rec.method;
      cfg.seed = rec.seed;
      RunResult res = run_optimizer(cfg, objective, pool);
      rec.completed = res.completed;
      rec.error = res.error;
      rec.trace = res.trace;
      rec.tr_lengths = res.tr_lengths;
      rec.hypers = res.hypers;
      rec.warnings = res.warnings;
      for (std::size_t i = 0; i < res.log.size(); ++i) {
        const EvalRecord& e = res.log[i];
        const double loss_v = n_sensors * std::pow(gt_mean * e.value, 2);
        rec.evals.push_back({e.epoch, static_cast<int>(i), e.value, loss_v, e.seed});
        if (e.epoch > 0) rec.proposals.emplace_back(e.point.data(), e.point.data() + e.point.size());
      }
      if (!res.log.empty()) {
        const EvalRecord& best = res.log[res.log.incumbent_index()];
        rec.best_od = bounds.from_unit(std::vector<double>(best.point.data(), best.point.data() + best.point.size()));
        rec.best_sim = objective.simulate_measure(best.point, best.seed);
      }
      finish_record(rec);
    } catch (const std::exception& e) {
      rec.completed = false;
      rec.error = e.what();
    }
  }
  for (const RunRecord& r : bundle.runs) bundle.partial = bundle.partial || !r.completed;

  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);
  json meta;
  meta["spec"] = spec.to_json();
  meta["archetype"] = bundle.archetype;
  meta["measure"] = std::string(to_string(bundle.measure));
  meta["full_dimension"] = bundle.full_dimension;
  meta["dimension"] = bundle.dimension;
  meta["excluded_pairs"] = bundle.excluded_pairs;
  json excluded_od = json::array();
  for (std::size_t i : bundle.excluded_pairs) {
    excluded_od.push_back({pairs.pairs[i].origin, pairs.pairs[i].destination});
  }
  meta["excluded_od"] = excluded_od;
  meta["sensor_ids"] = bundle.sensor_ids;
  meta["y_gt"] = bundle.y_gt;
  meta["epochs"] = bundle.epochs;
  meta["runs"] = spec.runs;
  meta["std_convention"] = "population";
  meta["partial"] = bundle.partial;
  meta["gt"] = ground_truth_to_json(gt);
  write_json_file((fs::path(spec.out_dir) / "experiment.json").string(), meta);
  for (const RunRecord& r : bundle.runs) {
    const std::string stem = run_stem(r.method, r.run);
    write_text_file((fs::path(spec.out_dir) / ("trace_" + stem + ".csv")).string(), trace_csv(r));
    OptimizerConfig cfg = spec.optimizer;
    cfg.method = r.method;
    write_json_file((fs::path(spec.out_dir) / ("run_" + stem + ".json")).string(), run_json(r, cfg));
  }
  write_report(bundle, spec.out_dir);
  return bundle;
}

ReportFiles write_report(const ResultsBundle& bundle, const std::string& dir) {
  if (bundle.runs.empty()) throw ValidationError("results bundle has no runs");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ReportFiles files;
  auto put = [&](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(dir) / name).string();
    write_text_file(path, text);
    files.written.push_back(path);
  };

  std::string runs_csv = "method,run,seed,status,init_min_nrmse,best_nrmse,improvement_pct,evaluations\n";
  for (const RunRecord& r : bundle.runs) {
    runs_csv += std::string(to_string(r.method)) + "," + std::to_string(r.run) + "," +
                std::to_string(r.seed) + "," + (r.completed ? "completed" : "failed") + "," +
                fmt(r.init_min) + "," + fmt(r.best) + "," + fmt(r.improvement) + "," +
                std::to_string(r.evals.size()) + "\n";
  }
  put("runs.csv", runs_csv);

  std::string summary =
      "archetype,method,runs,completed,mean_init_min_nrmse,mean_best_nrmse,std_best_nrmse,"
      "mean_improvement_pct,std_improvement_pct\n";
  for (Method m : bundle.methods) {
    std::vector<double> init, best, imp;
    std::vector<const RunRecord*> done;
    int total = 0;
    for (const RunRecord& r : bundle.runs) {
      if (r.method != m) continue;
      ++total;
      if (!r.completed) continue;
      done.push_back(&r);
      init.push_back(r.init_min);
      best.push_back(r.best);
      imp.push_back(r.improvement);
    }
    summary += bundle.archetype + "," + std::string(to_string(m)) + "," + std::to_string(total) +
               "," + std::to_string(done.size()) + "," + fmt(mean_of(init)) + "," +
               fmt(mean_of(best)) + "," + fmt(population_std(best)) + "," + fmt(mean_of(imp)) +
               "," + fmt(population_std(imp)) + "\n";

    std::string conv = "epoch,mean_nrmse,std_nrmse,runs\n";
    for (int e = 0; e <= bundle.epochs; ++e) {
      std::vector<double> v;
      for (const RunRecord* r : done) {
        if (static_cast<std::size_t>(e) < r->trace.size()) v.push_back(r->trace[static_cast<std::size_t>(e)]);
      }
      conv += std::to_string(e) + "," + fmt(mean_of(v)) + "," + fmt(population_std(v)) + "," +
              std::to_string(v.size()) + "\n";
    }
    put("convergence_" + std::string(to_string(m)) + ".csv", conv);

    std::string fit = "sensor_id,y_gt,sim_mean,sim_std\n";
    std::vector<std::vector<double>> sims;
    for (const RunRecord* r : done) {
      if (r->best_sim.size() == bundle.y_gt.size()) sims.push_back(r->best_sim);
    }
    if (!sims.empty()) {
      const std::vector<SensorFit> f = fit_to_gt(bundle.y_gt, sims);
      for (std::size_t s = 0; s < f.size(); ++s) {
        fit += std::to_string(bundle.sensor_ids[s]) + "," + fmt(f[s].gt) + "," + fmt(f[s].sim_mean) +
               "," + fmt(f[s].sim_std) + "\n";
      }
    }
    put("fit_" + std::string(to_string(m)) + ".csv", fit);
  }
  put("summary.csv", summary);
  return files;
}

ResultsBundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root / "experiment.json")) {
    throw ValidationError("'" + dir + "' holds no experiment.json");
  }
  const json meta = read_json_file((root / "experiment.json").string());
  ResultsBundle b;
  try {
    b.archetype = meta.at("archetype");
    b.measure = parse_measure(meta.at("measure").get<std::string>());
    b.full_dimension = meta.at("full_dimension");
    b.dimension = meta.at("dimension");
    b.excluded_pairs = meta.at("excluded_pairs").get<std::vector<std::size_t>>();
    b.sensor_ids = meta.at("sensor_ids").get<std::vector<int>>();
    b.y_gt = meta.at("y_gt").get<std::vector<double>>();
    b.epochs = meta.at("epochs");
    b.partial = meta.at("partial");
    const int runs = meta.at("runs");
    for (const auto& m : meta.at("spec").at("methods")) b.methods.push_back(parse_method(m.get<std::string>()));
    for (int r = 0; r < runs; ++r) {
      for (Method m : b.methods) {
        const std::string stem = run_stem(m, r);
        const fs::path jp = root / ("run_" + stem + ".json");
        if (!fs::exists(jp)) {
          b.partial = true;
          continue;
        }
        const json j = read_json_file(jp.string());
        RunRecord rec;
        rec.method = m;
        rec.run = r;
        rec.seed = j.at("seed");
        rec.completed = j.at("completed");
        rec.error = j.at("error");
        rec.trace = j.at("incumbent_trace").get<std::vector<double>>();
        rec.tr_lengths = j.at("tr_lengths").get<std::vector<double>>();
        rec.warnings = j.at("warnings").get<std::vector<std::string>>();
        rec.proposals = j.at("proposals").get<std::vector<std::vector<double>>>();
        rec.best_od = j.at("best_od").get<std::vector<double>>();
        rec.best_sim = j.at("best_sim").get<std::vector<double>>();
        for (const auto& h : j.at("hyperparameters")) {
          rec.hypers.push_back({h.at("epoch"), h.at("lengthscales").get<std::vector<double>>(),
                                h.at("signal_var"), h.at("noise_var")});
        }
        std::ifstream in(root / ("trace_" + stem + ".csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          std::istringstream ss(line);
          std::string f[5];
          for (auto& x : f) std::getline(ss, x, ',');
          rec.evals.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]),
                               std::stoull(f[4])});
        }
        finish_record(rec);
        b.runs.push_back(std::move(rec));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed results bundle: ") + e.what());
  }
  if (b.runs.empty()) throw ValidationError("results bundle in '" + dir + "' has no runs");
  return b;
}

}  // namespace odcal
