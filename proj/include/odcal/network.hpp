#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace odcal {

enum class LinkKind { kMainline, kOnRamp, kOffRamp, kConnector };

std::string_view to_string(LinkKind kind);
LinkKind parse_link_kind(std::string_view name);

struct Node {
  int id = 0;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Node&) const = default;
};

struct Link {
  int id = 0;
  int from = 0;
  int to = 0;
  double length_m = 0.0;
  int lanes = 1;
  double free_speed = 0.0;  // m/s
  double capacity = 0.0;    // veh/h
  LinkKind kind = LinkKind::kMainline;

  double free_flow_time() const { return length_m / free_speed; }
  bool operator==(const Link&) const = default;
};

struct Sensor {
  int id = 0;
  int link = 0;

  bool operator==(const Sensor&) const = default;
};

// Directed freeway graph. Ids are arbitrary integers; the class keeps dense
// index maps so algorithms can work with positions.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Node> nodes, std::vector<Link> links,
              std::vector<Sensor> sensors);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Sensor>& sensors() const { return sensors_; }

  std::size_t node_index(int id) const;
  std::size_t link_index(int id) const;
  bool has_node(int id) const { return node_pos_.contains(id); }
  bool has_link(int id) const { return link_pos_.contains(id); }

  // Link indices leaving / entering a node index.
  const std::vector<std::size_t>& out_links(std::size_t node) const { return out_[node]; }
  const std::vector<std::size_t>& in_links(std::size_t node) const { return in_[node]; }

  // Index of the sensor sitting on a link index, if any.
  std::optional<std::size_t> sensor_on_link(std::size_t link) const;

  bool operator==(const RoadNetwork& o) const {
    return nodes_ == o.nodes_ && links_ == o.links_ && sensors_ == o.sensors_;
  }

 private:
  void validate_and_index();

  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<Sensor> sensors_;
  std::unordered_map<int, std::size_t> node_pos_;
  std::unordered_map<int, std::size_t> link_pos_;
  std::unordered_map<std::size_t, std::size_t> sensor_by_link_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

struct Taz {
  int id = 0;
  std::vector<int> sources;  // node ids
  std::vector<int> sinks;    // node ids

  bool operator==(const Taz&) const = default;
};

struct TazPartition {
  std::vector<Taz> zones;

  std::size_t size() const { return zones.size(); }
  const Taz& zone(int id) const;
  bool operator==(const TazPartition&) const = default;
};

// Checks zone ids are unique, nodes exist, and every zone has a source or sink.
void validate_partition(const TazPartition& partition, const RoadNetwork& network);

struct ODPair {
  int origin = 0;
  int destination = 0;

  auto operator<=>(const ODPair&) const = default;
};

struct ODPairSet {
  std::vector<ODPair> pairs;

  std::size_t dimension() const { return pairs.size(); }
  bool operator==(const ODPairSet&) const = default;
};

// Box constraints of the demand space.
struct ODBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static ODBounds uniform(std::size_t dim, double lo, double hi);
  std::size_t dimension() const { return lower.size(); }

  // Maps between the unit hypercube and demand space.
  std::vector<double> from_unit(const std::vector<double>& u) const;
  std::vector<double> to_unit(const std::vector<double>& x) const;
};

struct ODVector {
  std::vector<double> values;
  ODBounds bounds;

  // Throws DomainError when a component is outside its bounds and
  // ValidationError on NaN or a dimension mismatch.
  void check() const;
};

enum class Archetype { kSimpleRamp, kOneWayCorridor, kJunction, kSmallRegion, kRegion };

std::string_view to_string(Archetype kind);
Archetype parse_archetype(std::string_view name);

struct ArchetypeParams {
  // Granularity knob; meaning depends on the archetype (see build_archetype).
  // Unset selects the archetype default; an explicit value must be positive.
  std::optional<int> scale;
  // Corridor only: number of collector-distributor connectors that let an
  // OD pair bypass every sensor.
  int bypass_pairs = 0;
};

struct Scenario {
  std::optional<Archetype> archetype;
  RoadNetwork network;
  TazPartition partition;

  bool operator==(const Scenario&) const = default;
};

// simple-ramp: scale multiplies segment lengths.
// one-way-corridor: scale = number of zones (>= 2).
// junction: scale = interior zones per arm.
// small-region / region: scale = grid size (crossing freeways per axis).
Scenario build_archetype(Archetype kind, ArchetypeParams params = {});

// Ordered zone pairs (o != d) with a directed path from a source of o to a
// sink of d, sorted by (origin, destination).
ODPairSet generate_od_pairs(const TazPartition& partition, const RoadNetwork& network);

// A route is a loop-free sequence of link indices.
struct Route {
  std::vector<std::size_t> links;
  double free_time = 0.0;
  double probability = 0.0;
};

using RouteSet = std::vector<Route>;

// Indices of pairs none of whose positive-probability routes cross a sensor.
std::vector<std::size_t> identify_unobservable_pairs(const RoadNetwork& network,
                                                     const ODPairSet& pairs,
                                                     const std::vector<RouteSet>& routes);

}  // namespace odcal
