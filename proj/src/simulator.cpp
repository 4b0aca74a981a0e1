#include "odcal/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <set>

#include "odcal/error.hpp"
#include "odcal/seed.hpp"

namespace odcal {

void SimulatorConfig::validate() const {
  if (!(od.length() > 0.0)) throw ConfigError("OD window must have positive length");
  if (!(sensor.length() > 0.0)) throw ConfigError("sensor window must have positive length");
  if (sensor.start < simulation.start || sensor.end > simulation.end) {
    throw ConfigError("sensor window must lie inside the simulation window");
  }
  if (od.start < simulation.start || od.end > simulation.end) {
    throw ConfigError("OD window must lie inside the simulation window");
  }
  if (theta < 0.0) throw ConfigError("route-choice temperature must be non-negative");
  if (!(bpr_alpha > 0.0) || !(bpr_beta > 0.0)) throw ConfigError("BPR exponents must be positive");
  if (max_routes < 1) throw ConfigError("max_routes must be at least 1");
}

std::vector<double> logit_probabilities(std::span<const double> costs, double theta) {
  std::vector<double> p(costs.size(), 0.0);
  if (costs.empty()) return p;
  const auto best = std::min_element(costs.begin(), costs.end());
  if (theta <= 0.0) {
    p[static_cast<std::size_t>(best - costs.begin())] = 1.0;
    return p;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    p[i] = std::exp(-(costs[i] - *best) / theta);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

namespace {

struct Path {
  std::vector<std::size_t> links;
  double cost = 0.0;
};

// Dijkstra over link free-flow times with banned nodes/links.
std::optional<Path> shortest_path(const RoadNetwork& net, std::size_t src, std::size_t dst,
                                  const std::vector<char>& banned_node,
                                  const std::set<std::size_t>& banned_link) {
  const std::size_t n = net.nodes().size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> via(n, std::numeric_limits<std::size_t>::max());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    for (std::size_t li : net.out_links(u)) {
      if (banned_link.contains(li)) continue;
      const Link& l = net.links()[li];
      const std::size_t v = net.node_index(l.to);
      if (banned_node[v]) continue;
      const double nd = d + l.free_flow_time();
      // Ties resolve to the lower link index for determinism.
      if (nd < dist[v] || (nd == dist[v] && li < via[v])) {
        dist[v] = nd;
        via[v] = li;
        pq.push({nd, v});
      }
    }
  }
  if (!std::isfinite(dist[dst])) return std::nullopt;
  Path p;
  p.cost = dist[dst];
  for (std::size_t v = dst; v != src;) {
    const std::size_t li = via[v];
    p.links.push_back(li);
    v = net.node_index(net.links()[li].from);
  }
  std::reverse(p.links.begin(), p.links.end());
  return p;
}

double path_cost(const RoadNetwork& net, const std::vector<std::size_t>& links) {
  double c = 0.0;
  for (std::size_t li : links) c += net.links()[li].free_flow_time();
  return c;
}

// Yen's K loop-free shortest paths.
std::vector<Path> k_shortest(const RoadNetwork& net, std::size_t src, std::size_t dst, int k) {
  std::vector<Path> found;
  const std::vector<char> no_nodes(net.nodes().size(), 0);
  auto first = shortest_path(net, src, dst, no_nodes, {});
  if (!first) return found;
  found.push_back(*first);
  auto less = [](const Path& a, const Path& b) {
    return a.cost < b.cost || (a.cost == b.cost && a.links < b.links);
  };
  std::vector<Path> candidates;
  while (static_cast<int>(found.size()) < k) {
    const Path& last = found.back();
    for (std::size_t i = 0; i < last.links.size(); ++i) {
      const std::vector<std::size_t> root(last.links.begin(),
                                          last.links.begin() + static_cast<std::ptrdiff_t>(i));
      const std::size_t spur =
          i == 0 ? src : net.node_index(net.links()[last.links[i - 1]].to);
      std::set<std::size_t> banned_links;
      for (const Path& p : found) {
        if (p.links.size() > i && std::equal(root.begin(), root.end(), p.links.begin())) {
          banned_links.insert(p.links[i]);
        }
      }
      std::vector<char> banned_nodes(net.nodes().size(), 0);
      banned_nodes[src] = root.empty() ? 0 : 1;
      for (std::size_t li : root) {
        banned_nodes[net.node_index(net.links()[li].from)] = 1;
      }
      banned_nodes[spur] = 0;
      auto tail = shortest_path(net, spur, dst, banned_nodes, banned_links);
      if (!tail) continue;
      Path cand;
      cand.links = root;
      cand.links.insert(cand.links.end(), tail->links.begin(), tail->links.end());
      cand.cost = path_cost(net, cand.links);
      const bool dup = std::any_of(candidates.begin(), candidates.end(),
                                   [&](const Path& p) { return p.links == cand.links; }) ||
                       std::any_of(found.begin(), found.end(),
                                   [&](const Path& p) { return p.links == cand.links; });
      if (!dup) candidates.push_back(std::move(cand));
    }
    if (candidates.empty()) break;
    auto best = std::min_element(candidates.begin(), candidates.end(), less);
    found.push_back(*best);
    candidates.erase(best);
  }
  return found;
}

}  // namespace

std::vector<RouteSet> compute_routes(const Scenario& scenario, const ODPairSet& pairs,
                                     const SimulatorConfig& config) {
  const RoadNetwork& net = scenario.network;
  std::vector<RouteSet> out;
  out.reserve(pairs.dimension());
  for (const ODPair& pair : pairs.pairs) {
    const Taz& o = scenario.partition.zone(pair.origin);
    const Taz& d = scenario.partition.zone(pair.destination);
    std::vector<Path> pool;
    for (int s : o.sources) {
      for (int t : d.sinks) {
        if (s == t) continue;
        auto paths = k_shortest(net, net.node_index(s), net.node_index(t), config.max_routes);
        pool.insert(pool.end(), paths.begin(), paths.end());
      }
    }
    if (pool.empty()) {
      throw RoutingError("no route for OD pair (" + std::to_string(pair.origin) + ", " +
                         std::to_string(pair.destination) + ")");
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Path& a, const Path& b) {
      return a.cost < b.cost || (a.cost == b.cost && a.links < b.links);
    });
    if (pool.size() > static_cast<std::size_t>(config.max_routes)) {
      pool.resize(static_cast<std::size_t>(config.max_routes));
    }
    std::vector<double> costs;
    for (const Path& p : pool) costs.push_back(p.cost);
    const std::vector<double> prob = logit_probabilities(costs, config.theta);
    RouteSet set;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      set.push_back({pool[i].links, pool[i].cost, prob[i]});
    }
    out.push_back(std::move(set));
  }
  return out;
}

Simulator::Simulator(Scenario scenario, ODPairSet pairs, SimulatorConfig config)
    : scenario_(std::move(scenario)), pairs_(std::move(pairs)), config_(config) {
  config_.validate();
  routes_ = compute_routes(scenario_, pairs_, config_);
}

Simulator::Simulator(Scenario scenario, ODPairSet pairs, SimulatorConfig config,
                     std::vector<RouteSet> routes)
    : scenario_(std::move(scenario)),
      pairs_(std::move(pairs)),
      config_(config),
      routes_(std::move(routes)) {
  config_.validate();
  if (routes_.size() != pairs_.dimension()) {
    throw ValidationError("route sets do not match the OD pair set");
  }
}

namespace {

// Fraction of departures, uniform over the OD window, whose passage time
// (departure + offset) falls inside the sensor window.
double observed_fraction(const SimulatorConfig& cfg, double offset) {
  const double lo = std::max(cfg.od.start + offset, cfg.sensor.start);
  const double hi = std::min(cfg.od.end + offset, cfg.sensor.end);
  return std::max(0.0, hi - lo) / cfg.od.length();
}

}  // namespace

SimulationResult Simulator::run(const ODVector& od, std::uint64_t seed) const {
  const auto t0 = std::chrono::steady_clock::now();
  if (od.values.size() != pairs_.dimension()) {
    throw ValidationError("OD vector dimension does not match the OD pair set");
  }
  od.check();

  const RoadNetwork& net = scenario_.network;
  const std::size_t num_links = net.links().size();

  // Vehicles per (pair, route). Each demand stream has its own generator keyed
  // by zone ids, so its noise does not depend on the other pairs' demands or on
  // which pairs are modelled at all.
  std::vector<std::vector<double>> flow(routes_.size());
  for (std::size_t p = 0; p < routes_.size(); ++p) {
    flow[p].resize(routes_[p].size());
    const ODPair& pair = pairs_.pairs[p];
    const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(pair.origin)) << 32) |
                              static_cast<std::uint32_t>(pair.destination);
    for (std::size_t r = 0; r < routes_[p].size(); ++r) {
      const double mean = od.values[p] * routes_[p][r].probability;
      if (config_.mode == SimMode::kStochastic) {
        if (mean > 0.0) {
          std::mt19937_64 rng(stream_seed(seed, Stream::kDemand, key, r));
          std::poisson_distribution<std::int64_t> draw(mean);
          flow[p][r] = static_cast<double>(draw(rng));
        }
      } else {
        flow[p][r] = mean;
      }
    }
  }

  // Throughput cap per link over the sensor window; blocked vehicles queue
  // upstream and never reach downstream links.
  std::vector<double> cap(num_links);
  for (std::size_t l = 0; l < num_links; ++l) {
    cap[l] = net.links()[l].capacity * config_.sensor.length() / 3600.0;
  }
  std::vector<double> pass(num_links, 1.0);
  std::vector<double> arrive(num_links, 0.0);
  for (int iter = 0; iter < 200; ++iter) {
    std::fill(arrive.begin(), arrive.end(), 0.0);
    for (std::size_t p = 0; p < routes_.size(); ++p) {
      for (std::size_t r = 0; r < routes_[p].size(); ++r) {
        double f = flow[p][r];
        if (f == 0.0) continue;
        for (std::size_t li : routes_[p][r].links) {
          arrive[li] += f;
          f *= pass[li];
        }
      }
    }
    double change = 0.0;
    for (std::size_t l = 0; l < num_links; ++l) {
      const double next = arrive[l] > cap[l] ? cap[l] / arrive[l] : 1.0;
      change = std::max(change, std::abs(next - pass[l]));
      pass[l] = next;
    }
    if (change < 1e-13) break;
  }

  // BPR speed from the hourly arrival rate.
  const double hours = config_.od.length() / 3600.0;
  std::vector<double> speed(num_links);
  for (std::size_t l = 0; l < num_links; ++l) {
    const Link& link = net.links()[l];
    const double vc = arrive[l] / hours / link.capacity;
    speed[l] = link.free_speed / (1.0 + config_.bpr_alpha * std::pow(vc, config_.bpr_beta));
  }

  std::vector<double> sensed(num_links, 0.0);
  for (std::size_t p = 0; p < routes_.size(); ++p) {
    for (std::size_t r = 0; r < routes_[p].size(); ++r) {
      double f = flow[p][r];
      if (f == 0.0) continue;
      double clock = 0.0;
      for (std::size_t li : routes_[p][r].links) {
        f *= pass[li];
        clock += net.links()[li].length_m / speed[li];
        if (net.sensor_on_link(li)) sensed[li] += f * observed_fraction(config_, clock);
      }
    }
  }

  SimulationResult out;
  out.seed = seed;
  const auto& sensors = net.sensors();
  out.counts.resize(sensors.size());
  out.speeds.resize(sensors.size());
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const std::size_t li = net.link_index(sensors[s].link);
    out.counts[s] = std::llround(sensed[li]);
    out.speeds[s] = speed[li];
  }
  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

SimulationResult simulate(const Simulator& sim, const ODVector& od, std::uint64_t seed) {
  return sim.run(od, seed);
}

std::vector<double> GroundTruth::counts() const {
  std::vector<double> v;
  v.reserve(targets.size());
  for (const auto& t : targets) v.push_back(t.count);
  return v;
}

std::vector<double> GroundTruth::speeds() const {
  std::vector<double> v;
  v.reserve(targets.size());
  for (const auto& t : targets) v.push_back(t.speed);
  return v;
}

GroundTruth ground_truth_at(const Simulator& sim, const ODVector& x_star,
                            std::uint64_t gt_seed, int replications) {
  if (replications < 1) throw ConfigError("ground truth needs at least one replication");
  const bool det = sim.config().mode == SimMode::kDeterministic;
  const int reps = det ? 1 : replications;
  const std::size_t n = sim.num_sensors();
  std::vector<double> counts(n, 0.0);
  std::vector<double> speeds(n, 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto res =
        sim.run(x_star, stream_seed(gt_seed, Stream::kGroundTruth, static_cast<std::uint64_t>(r)));
    for (std::size_t s = 0; s < n; ++s) {
      counts[s] += static_cast<double>(res.counts[s]);
      speeds[s] += res.speeds[s];
    }
  }
  GroundTruth gt;
  gt.x_star = x_star.values;
  gt.gt_seed = gt_seed;
  gt.replications = reps;
  gt.mode = sim.config().mode;
  const auto& sensors = sim.network().sensors();
  for (std::size_t s = 0; s < n; ++s) {
    gt.targets.push_back({sensors[s].id, counts[s] / reps, speeds[s] / reps});
  }
  return gt;
}

GroundTruth generate_ground_truth(const Simulator& sim, const ODBounds& bounds,
                                  std::uint64_t gt_seed, int replications) {
  if (replications < 1) throw ConfigError("ground truth needs at least one replication");
  std::mt19937_64 rng(stream_seed(gt_seed, Stream::kGroundTruth, 0xffffffffULL));
  std::uniform_real_distribution<double> u(0.25, 0.75);
  ODVector x{std::vector<double>(bounds.dimension()), bounds};
  for (std::size_t i = 0; i < bounds.dimension(); ++i) {
    x.values[i] = bounds.lower[i] + u(rng) * (bounds.upper[i] - bounds.lower[i]);
  }
  return ground_truth_at(sim, x, gt_seed, replications);
}

}  // namespace odcal
