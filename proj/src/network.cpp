#include "odcal/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_set>

#include "odcal/error.hpp"

namespace odcal {

std::string_view to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::kMainline: return "mainline";
    case LinkKind::kOnRamp: return "on-ramp";
    case LinkKind::kOffRamp: return "off-ramp";
    case LinkKind::kConnector: return "connector";
  }
  return "mainline";
}

LinkKind parse_link_kind(std::string_view name) {
  if (name == "mainline") return LinkKind::kMainline;
  if (name == "on-ramp") return LinkKind::kOnRamp;
  if (name == "off-ramp") return LinkKind::kOffRamp;
  if (name == "connector") return LinkKind::kConnector;
  throw ValidationError("unknown link kind '" + std::string(name) + "'");
}

std::string_view to_string(Archetype kind) {
  switch (kind) {
    case Archetype::kSimpleRamp: return "simple-ramp";
    case Archetype::kOneWayCorridor: return "one-way-corridor";
    case Archetype::kJunction: return "junction";
    case Archetype::kSmallRegion: return "small-region";
    case Archetype::kRegion: return "region";
  }
  return "simple-ramp";
}

Archetype parse_archetype(std::string_view name) {
  if (name == "simple-ramp") return Archetype::kSimpleRamp;
  if (name == "one-way-corridor" || name == "corridor") return Archetype::kOneWayCorridor;
  if (name == "junction") return Archetype::kJunction;
  if (name == "small-region") return Archetype::kSmallRegion;
  if (name == "region") return Archetype::kRegion;
  throw ConfigError("unknown archetype '" + std::string(name) + "'");
}

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Link> links,
                         std::vector<Sensor> sensors)
    : nodes_(std::move(nodes)), links_(std::move(links)), sensors_(std::move(sensors)) {
  validate_and_index();
}

void RoadNetwork::validate_and_index() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!node_pos_.emplace(nodes_[i].id, i).second) {
      throw ValidationError("duplicate node id " + std::to_string(nodes_[i].id));
    }
  }
  out_.assign(nodes_.size(), {});
  in_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const Link& l = links_[i];
    if (!link_pos_.emplace(l.id, i).second) {
      throw ValidationError("duplicate link id " + std::to_string(l.id));
    }
    if (!has_node(l.from) || !has_node(l.to)) {
      throw ValidationError("link " + std::to_string(l.id) + " references a missing node");
    }
    if (!(l.capacity > 0.0) || !(l.free_speed > 0.0) || !(l.length_m > 0.0) || l.lanes < 1) {
      throw ValidationError("link " + std::to_string(l.id) +
                            " needs positive length, lanes, speed and capacity");
    }
    out_[node_pos_.at(l.from)].push_back(i);
    in_[node_pos_.at(l.to)].push_back(i);
  }
  std::unordered_set<int> sensor_ids;
  for (std::size_t s = 0; s < sensors_.size(); ++s) {
    const Sensor& sensor = sensors_[s];
    if (!sensor_ids.insert(sensor.id).second) {
      throw ValidationError("duplicate sensor id " + std::to_string(sensor.id));
    }
    if (!has_link(sensor.link)) {
      throw ValidationError("sensor " + std::to_string(sensor.id) + " references a missing link");
    }
    const std::size_t li = link_pos_.at(sensor.link);
    if (links_[li].kind != LinkKind::kMainline) {
      throw ValidationError("sensor " + std::to_string(sensor.id) + " is not on a mainline link");
    }
    if (!sensor_by_link_.emplace(li, s).second) {
      throw ValidationError("two sensors share link " + std::to_string(sensor.link));
    }
  }
}

std::size_t RoadNetwork::node_index(int id) const {
  auto it = node_pos_.find(id);
  if (it == node_pos_.end()) throw ValidationError("unknown node id " + std::to_string(id));
  return it->second;
}

std::size_t RoadNetwork::link_index(int id) const {
  auto it = link_pos_.find(id);
  if (it == link_pos_.end()) throw ValidationError("unknown link id " + std::to_string(id));
  return it->second;
}

std::optional<std::size_t> RoadNetwork::sensor_on_link(std::size_t link) const {
  auto it = sensor_by_link_.find(link);
  if (it == sensor_by_link_.end()) return std::nullopt;
  return it->second;
}

const Taz& TazPartition::zone(int id) const {
  for (const Taz& z : zones) {
    if (z.id == id) return z;
  }
  throw ValidationError("unknown TAZ id " + std::to_string(id));
}

void validate_partition(const TazPartition& partition, const RoadNetwork& network) {
  std::unordered_set<int> ids;
  for (const Taz& z : partition.zones) {
    if (!ids.insert(z.id).second) {
      throw ValidationError("duplicate TAZ id " + std::to_string(z.id));
    }
    if (z.sources.empty() && z.sinks.empty()) {
      throw ValidationError("TAZ " + std::to_string(z.id) + " has neither sources nor sinks");
    }
    for (int n : z.sources) {
      if (!network.has_node(n)) {
        throw ValidationError("TAZ " + std::to_string(z.id) + " references missing node " +
                              std::to_string(n));
      }
    }
    for (int n : z.sinks) {
      if (!network.has_node(n)) {
        throw ValidationError("TAZ " + std::to_string(z.id) + " references missing node " +
                              std::to_string(n));
      }
    }
  }
}

ODBounds ODBounds::uniform(std::size_t dim, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("lower bound must be below upper bound");
  return ODBounds{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
}

std::vector<double> ODBounds::from_unit(const std::vector<double>& u) const {
  if (u.size() != lower.size()) throw ValidationError("dimension mismatch in from_unit");
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double t = std::clamp(u[i], 0.0, 1.0);
    x[i] = lower[i] + t * (upper[i] - lower[i]);
  }
  return x;
}

std::vector<double> ODBounds::to_unit(const std::vector<double>& x) const {
  if (x.size() != lower.size()) throw ValidationError("dimension mismatch in to_unit");
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - lower[i]) / (upper[i] - lower[i]);
  return u;
}

void ODVector::check() const {
  if (values.size() != bounds.lower.size() || bounds.lower.size() != bounds.upper.size()) {
    throw ValidationError("OD vector and bounds differ in dimension");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) {
      throw ValidationError("OD demand " + std::to_string(i) + " is NaN");
    }
    const double slack = 1e-9 * std::max(1.0, std::abs(bounds.upper[i]));
    if (values[i] < bounds.lower[i] - slack || values[i] > bounds.upper[i] + slack) {
      throw DomainError("OD demand " + std::to_string(i) + " = " + std::to_string(values[i]) +
                        " outside bounds");
    }
  }
}

ODPairSet generate_od_pairs(const TazPartition& partition, const RoadNetwork& network) {
  if (partition.zones.empty()) throw ValidationError("empty TAZ partition");
  validate_partition(partition, network);

  std::vector<Taz> zones = partition.zones;
  std::sort(zones.begin(), zones.end(), [](const Taz& a, const Taz& b) { return a.id < b.id; });

  ODPairSet out;
  std::vector<char> seen(network.nodes().size());
  for (const Taz& o : zones) {
    if (o.sources.empty()) continue;
    std::fill(seen.begin(), seen.end(), 0);
    std::deque<std::size_t> queue;
    for (int s : o.sources) {
      const std::size_t i = network.node_index(s);
      if (!seen[i]) {
        seen[i] = 1;
        queue.push_back(i);
      }
    }
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t li : network.out_links(u)) {
        const std::size_t v = network.node_index(network.links()[li].to);
        if (!seen[v]) {
          seen[v] = 1;
          queue.push_back(v);
        }
      }
    }
    for (const Taz& d : zones) {
      if (d.id == o.id) continue;
      const bool reachable = std::any_of(d.sinks.begin(), d.sinks.end(),
                                         [&](int k) { return seen[network.node_index(k)] != 0; });
      if (reachable) out.pairs.push_back({o.id, d.id});
    }
  }
  return out;
}

std::vector<std::size_t> identify_unobservable_pairs(const RoadNetwork& network,
                                                     const ODPairSet& pairs,
                                                     const std::vector<RouteSet>& routes) {
  if (routes.size() != pairs.dimension()) {
    throw ValidationError("route sets and OD pairs differ in length");
  }
  std::vector<std::size_t> hidden;
  for (std::size_t p = 0; p < routes.size(); ++p) {
    bool observed = false;
    for (const Route& r : routes[p]) {
      for (std::size_t li : r.links) {
        if (li >= network.links().size()) {
          throw ValidationError("route references unknown link index " + std::to_string(li));
        }
        if (r.probability > 0.0 && network.sensor_on_link(li)) observed = true;
      }
    }
    if (!observed) hidden.push_back(p);
  }
  return hidden;
}

// --------------------------------------------------------------------------
// Archetype builders

namespace {

struct LinkClass {
  int lanes;
  double free_speed;
  double capacity_per_lane;
};

constexpr LinkClass kRampClass{2, 20.0, 1900.0};
constexpr LinkClass kConnectorClass{2, 22.0, 2000.0};

class Builder {
 public:
  explicit Builder(double length_scale = 1.0) : length_scale_(length_scale) {}

  int node(double x, double y) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({id, x, y});
    return id;
  }

  int link(int from, int to, LinkKind kind, const LinkClass& cls) {
    const Node& a = nodes_[static_cast<std::size_t>(from)];
    const Node& b = nodes_[static_cast<std::size_t>(to)];
    const double len = std::max(1.0, std::hypot(b.x - a.x, b.y - a.y) * length_scale_);
    const int id = static_cast<int>(links_.size());
    links_.push_back({id, from, to, len, cls.lanes, cls.free_speed,
                      cls.lanes * cls.capacity_per_lane, kind});
    return id;
  }

  void sensor(int link) {
    sensors_.push_back({static_cast<int>(sensors_.size()), link});
  }

  RoadNetwork finish() { return RoadNetwork(nodes_, links_, sensors_); }

 private:
  double length_scale_;
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<Sensor> sensors_;
};

Scenario build_simple_ramp(int scale) {
  // Entry -> on-ramp merge -> off-ramp diverge -> exit; three zones.
  Builder b(static_cast<double>(scale));
  const LinkClass mainline{3, 29.0, 2200.0};
  const int m0 = b.node(0, 0);
  const int m1 = b.node(1000, 0);
  const int m2 = b.node(2000, 0);
  const int m3 = b.node(3000, 0);
  const int m4 = b.node(4000, 0);
  const int m5 = b.node(5000, 0);
  const int on_src = b.node(1700, -300);
  const int off_dst = b.node(3300, -300);

  b.link(m0, m1, LinkKind::kMainline, mainline);
  const int upstream = b.link(m1, m2, LinkKind::kMainline, mainline);
  const int between = b.link(m2, m3, LinkKind::kMainline, mainline);
  const int downstream = b.link(m3, m4, LinkKind::kMainline, mainline);
  b.link(m4, m5, LinkKind::kMainline, mainline);
  b.link(on_src, m2, LinkKind::kOnRamp, kRampClass);
  b.link(m3, off_dst, LinkKind::kOffRamp, kRampClass);
  b.sensor(upstream);
  b.sensor(between);
  b.sensor(downstream);

  Scenario sc;
  sc.archetype = Archetype::kSimpleRamp;
  sc.network = b.finish();
  sc.partition.zones = {
      {0, {m0}, {}},
      {1, {on_src}, {off_dst}},
      {2, {}, {m5}},
  };
  return sc;
}

Scenario build_corridor(int zones, int bypass) {
  if (zones < 2) throw ConfigError("one-way corridor needs at least 2 zones");
  const int middle = zones - 2;
  if (bypass < 0 || (bypass > 0 && bypass > middle - 1)) {
    throw ConfigError("corridor with " + std::to_string(zones) + " zones supports at most " +
                      std::to_string(std::max(0, middle - 1)) + " bypass connectors");
  }
  Builder b;
  const LinkClass mainline{6, 29.0, 2200.0};
  const LinkClass ramp{3, 20.0, 1900.0};

  double x = 0.0;
  const int start = b.node(x, 0);
  std::vector<int> src(static_cast<std::size_t>(zones), -1);
  std::vector<int> dst(static_cast<std::size_t>(zones), -1);
  src[0] = start;

  int prev = start;
  auto mainline_to = [&](int next) {
    b.sensor(b.link(prev, next, LinkKind::kMainline, mainline));
    prev = next;
  };
  for (int z = 1; z <= middle; ++z) {
    x += 1000.0;
    const int diverge = b.node(x, 0);
    mainline_to(diverge);
    const int sink = b.node(x + 200.0, 300.0);
    b.link(diverge, sink, LinkKind::kOffRamp, ramp);
    x += 500.0;
    const int merge = b.node(x, 0);
    mainline_to(merge);
    const int source = b.node(x - 200.0, -300.0);
    b.link(source, merge, LinkKind::kOnRamp, ramp);
    src[static_cast<std::size_t>(z)] = source;
    dst[static_cast<std::size_t>(z)] = sink;
  }
  x += 1000.0;
  const int end = b.node(x, 0);
  mainline_to(end);
  dst[static_cast<std::size_t>(zones - 1)] = end;

  // Collector-distributor roads: zone z source straight to zone z+1 sink.
  for (int k = 0; k < bypass; ++k) {
    const auto z = static_cast<std::size_t>(1 + k);
    b.link(src[z], dst[z + 1], LinkKind::kConnector, kConnectorClass);
  }

  Scenario sc;
  sc.archetype = Archetype::kOneWayCorridor;
  sc.network = b.finish();
  for (int z = 0; z < zones; ++z) {
    Taz t{z, {}, {}};
    if (src[static_cast<std::size_t>(z)] >= 0) t.sources.push_back(src[static_cast<std::size_t>(z)]);
    if (dst[static_cast<std::size_t>(z)] >= 0) t.sinks.push_back(dst[static_cast<std::size_t>(z)]);
    sc.partition.zones.push_back(std::move(t));
  }
  return sc;
}

// Grid of bidirectional freeways: `grid` horizontal and `grid` vertical
// freeways crossing at grid*grid interchanges with turning connectors. Each
// freeway has an end zone at both ends and `zones_per_segment` interior zones
// on every segment between interchanges.
Scenario build_grid(Archetype kind, int grid, int zones_per_segment) {
  constexpr double kSpacing = 4000.0;
  constexpr double kZoneHalf = 100.0;
  constexpr double kCrossHalf = 200.0;
  constexpr double kLineOffset = 30.0;
  const double span = kSpacing * (grid + 1);
  const LinkClass mainline{6, 29.0, 2200.0};

  Builder b;

  // Station along a freeway, in freeway coordinate t in [0, span].
  struct Station {
    double t;
    bool crossing;
    int index;  // zone index or crossing partner freeway
  };
  struct LineNodes {
    // node ids of diverge/merge per station, in station order
    std::vector<int> diverge;
    std::vector<int> merge;
    int start = -1;
    int end = -1;
  };

  const int freeways = 2 * grid;
  auto is_horizontal = [&](int f) { return f < grid; };
  auto axis_pos = [&](int f) { return kSpacing * ((f % grid) + 1); };

  // Physical coordinates of freeway f at coordinate t on the given side.
  auto point = [&](int f, double t, double side) {
    if (is_horizontal(f)) return std::pair{t, axis_pos(f) + side};
    return std::pair{axis_pos(f) + side, t};
  };

  struct ZoneNodes {
    int source = -1;
    int sink = -1;
  };
  std::vector<Taz> zones;
  auto new_zone = [&]() {
    zones.push_back({static_cast<int>(zones.size()), {}, {}});
    return static_cast<std::size_t>(zones.size() - 1);
  };

  std::vector<std::vector<Station>> stations(static_cast<std::size_t>(freeways));
  std::vector<std::vector<ZoneNodes>> zone_nodes(static_cast<std::size_t>(freeways));
  std::vector<std::vector<std::size_t>> zone_ids(static_cast<std::size_t>(freeways));
  for (int f = 0; f < freeways; ++f) {
    auto& st = stations[static_cast<std::size_t>(f)];
    for (int seg = 0; seg <= grid; ++seg) {
      for (int m = 0; m < zones_per_segment; ++m) {
        const double t = kSpacing * seg + kSpacing * (m + 1) / (zones_per_segment + 1);
        st.push_back({t, false, static_cast<int>(zone_nodes[static_cast<std::size_t>(f)].size())});
        const auto [sx, sy] = point(f, t - kZoneHalf, -400.0);
        const auto [kx, ky] = point(f, t + kZoneHalf, 400.0);
        ZoneNodes zn{b.node(sx, sy), b.node(kx, ky)};
        zone_nodes[static_cast<std::size_t>(f)].push_back(zn);
      }
      if (seg < grid) {
        // Crossing with the perpendicular freeway number `seg`.
        const int partner = is_horizontal(f) ? grid + seg : seg;
        st.push_back({kSpacing * (seg + 1), true, partner});
      }
    }
  }

  // lines[f][0] travels increasing t, lines[f][1] decreasing t.
  std::vector<std::array<LineNodes, 2>> lines(static_cast<std::size_t>(freeways));
  // crossing lookup: (freeway, dir, partner) -> station position in line.
  for (int f = 0; f < freeways; ++f) {
    const auto& st = stations[static_cast<std::size_t>(f)];
    for (int dir = 0; dir < 2; ++dir) {
      LineNodes& ln = lines[static_cast<std::size_t>(f)][static_cast<std::size_t>(dir)];
      const double side = dir == 0 ? -kLineOffset : kLineOffset;
      auto at = [&](double t) {
        const auto [px, py] = point(f, t, side);
        return b.node(px, py);
      };
      ln.start = at(dir == 0 ? 0.0 : span);
      ln.diverge.assign(st.size(), -1);
      ln.merge.assign(st.size(), -1);
      int prev = ln.start;
      const std::size_t n = st.size();
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = dir == 0 ? k : n - 1 - k;
        const double half = st[i].crossing ? kCrossHalf : kZoneHalf;
        const double sign = dir == 0 ? 1.0 : -1.0;
        const int d = at(st[i].t - sign * half);
        b.sensor(b.link(prev, d, LinkKind::kMainline, mainline));
        const int m = at(st[i].t + sign * half);
        b.sensor(b.link(d, m, LinkKind::kMainline, mainline));
        ln.diverge[i] = d;
        ln.merge[i] = m;
        prev = m;
      }
      ln.end = at(dir == 0 ? span : 0.0);
      b.sensor(b.link(prev, ln.end, LinkKind::kMainline, mainline));
    }
  }

  // Zones: end zones and interior ramps.
  for (int f = 0; f < freeways; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    const auto& st = stations[fi];
    auto& fw = lines[fi];
    const std::size_t near_end = new_zone();
    zones[near_end].sources.push_back(fw[0].start);
    zones[near_end].sinks.push_back(fw[1].end);
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (st[i].crossing) continue;
      const ZoneNodes& zn = zone_nodes[fi][static_cast<std::size_t>(st[i].index)];
      const std::size_t z = new_zone();
      zones[z].sources.push_back(zn.source);
      zones[z].sinks.push_back(zn.sink);
      for (int dir = 0; dir < 2; ++dir) {
        b.link(fw[static_cast<std::size_t>(dir)].diverge[i], zn.sink, LinkKind::kOffRamp, kRampClass);
        b.link(zn.source, fw[static_cast<std::size_t>(dir)].merge[i], LinkKind::kOnRamp, kRampClass);
      }
    }
    const std::size_t far_end = new_zone();
    zones[far_end].sources.push_back(fw[1].start);
    zones[far_end].sinks.push_back(fw[0].end);
  }

  // Turning connectors at each interchange (no U-turns).
  for (int f = 0; f < grid; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    for (std::size_t i = 0; i < stations[fi].size(); ++i) {
      const Station& s = stations[fi][i];
      if (!s.crossing) continue;
      const auto gi = static_cast<std::size_t>(s.index);
      std::size_t j = 0;
      while (!(stations[gi][j].crossing && stations[gi][j].index == f)) ++j;
      for (int da = 0; da < 2; ++da) {
        for (int db = 0; db < 2; ++db) {
          const auto a = static_cast<std::size_t>(da);
          const auto c = static_cast<std::size_t>(db);
          b.link(lines[fi][a].diverge[i], lines[gi][c].merge[j], LinkKind::kConnector,
                 kConnectorClass);
          b.link(lines[gi][c].diverge[j], lines[fi][a].merge[i], LinkKind::kConnector,
                 kConnectorClass);
        }
      }
    }
  }

  Scenario sc;
  sc.archetype = kind;
  sc.network = b.finish();
  sc.partition.zones = std::move(zones);
  return sc;
}

}  // namespace

Scenario build_archetype(Archetype kind, ArchetypeParams params) {
  if (params.scale && *params.scale <= 0) throw ConfigError("archetype scale must be positive");
  if (params.bypass_pairs != 0 && kind != Archetype::kOneWayCorridor) {
    throw ConfigError("bypass connectors are only defined for the one-way corridor");
  }
  switch (kind) {
    case Archetype::kSimpleRamp:
      return build_simple_ramp(params.scale.value_or(1));
    case Archetype::kOneWayCorridor:
      return build_corridor(params.scale.value_or(7), params.bypass_pairs);
    case Archetype::kJunction:
      return build_grid(kind, 1, params.scale.value_or(1));
    case Archetype::kSmallRegion:
      return build_grid(kind, params.scale.value_or(2), 0);
    case Archetype::kRegion:
      return build_grid(kind, params.scale.value_or(3), 1);
  }
  throw ConfigError("unknown archetype");
}

}  // namespace odcal
