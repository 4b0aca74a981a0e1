#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "odcal/error.hpp"
#include "odcal/io.hpp"
#include "odcal/network.hpp"
#include "odcal/simulator.hpp"

using namespace odcal;

namespace {

Link mainline(int id, int from, int to) { return {id, from, to, 1000.0, 3, 29.0, 6600.0, LinkKind::kMainline}; }

// Three zones on a bidirectional ring, every zone both a source and a sink.
Scenario ring(int zones) {
  std::vector<Node> nodes;
  std::vector<Link> links;
  for (int i = 0; i < zones; ++i) nodes.push_back({i, 1000.0 * i, 0.0});
  for (int i = 0; i < zones && zones > 1; ++i) {
    const int j = (i + 1) % zones;
    links.push_back(mainline(static_cast<int>(links.size()), i, j));
    links.push_back(mainline(static_cast<int>(links.size()), j, i));
  }
  Scenario sc;
  sc.network = RoadNetwork(nodes, links, {});
  for (int i = 0; i < zones; ++i) sc.partition.zones.push_back({i, {i}, {i}});
  return sc;
}

// Reachability by repeated relaxation, independent of the library's search.
std::set<std::pair<int, int>> brute_pairs(const Scenario& sc) {
  const auto& net = sc.network;
  const std::size_t n = net.nodes().size();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i) reach[i][i] = 1;
  for (std::size_t round = 0; round < n; ++round) {
    for (const Link& l : net.links()) {
      const std::size_t a = net.node_index(l.from), b = net.node_index(l.to);
      for (std::size_t s = 0; s < n; ++s)
        if (reach[s][a]) reach[s][b] = 1;
    }
  }
  std::set<std::pair<int, int>> out;
  for (const Taz& o : sc.partition.zones)
    for (const Taz& d : sc.partition.zones) {
      if (o.id == d.id) continue;
      bool ok = false;
      for (int s : o.sources)
        for (int k : d.sinks) ok = ok || reach[net.node_index(s)][net.node_index(k)];
      if (ok) out.insert({o.id, d.id});
    }
  return out;
}

}  // namespace

TEST_CASE("pair generation counts") {
  CHECK(generate_od_pairs(ring(3).partition, ring(3).network).dimension() == 6);
  const Scenario one = ring(1);
  CHECK(generate_od_pairs(one.partition, one.network).dimension() == 0);
  for (int zones : {2, 5, 7}) {
    ArchetypeParams p;
    p.scale = zones;
    const Scenario sc = build_archetype(Archetype::kOneWayCorridor, p);
    const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
    CHECK(pairs.dimension() == static_cast<std::size_t>(zones * (zones - 1) / 2));
    for (const ODPair& q : pairs.pairs) CHECK(q.origin < q.destination);
  }
}

TEST_CASE("pair generation agrees with brute-force reachability on every archetype") {
  for (Archetype a : {Archetype::kSimpleRamp, Archetype::kOneWayCorridor, Archetype::kJunction,
                      Archetype::kSmallRegion}) {
    CAPTURE(to_string(a));
    const Scenario sc = build_archetype(a);
    const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
    std::set<std::pair<int, int>> got;
    for (const ODPair& q : pairs.pairs) got.insert({q.origin, q.destination});
    CHECK(got == brute_pairs(sc));
    CHECK(std::is_sorted(pairs.pairs.begin(), pairs.pairs.end()));
  }
}

TEST_CASE("archetype signatures") {
  const Scenario ramp = build_archetype(Archetype::kSimpleRamp);
  CHECK(generate_od_pairs(ramp.partition, ramp.network).dimension() == 3);
  CHECK(ramp.network.sensors().size() == 3);
  CHECK(ramp.archetype == Archetype::kSimpleRamp);

  const Scenario corridor = build_archetype(Archetype::kOneWayCorridor);
  CHECK(generate_od_pairs(corridor.partition, corridor.network).dimension() >= 15);

  const Scenario region = build_archetype(Archetype::kRegion);
  const Scenario junction = build_archetype(Archetype::kJunction);
  CHECK(generate_od_pairs(region.partition, region.network).dimension() >
        generate_od_pairs(junction.partition, junction.network).dimension());

  ArchetypeParams scaled;
  scaled.scale = 2;
  const Scenario longer = build_archetype(Archetype::kSimpleRamp, scaled);
  CHECK(longer.network.links()[0].length_m == 2 * ramp.network.links()[0].length_m);
}

TEST_CASE("builders are deterministic and sensors sit on mainline links") {
  for (Archetype a : {Archetype::kSimpleRamp, Archetype::kOneWayCorridor, Archetype::kJunction,
                      Archetype::kSmallRegion, Archetype::kRegion}) {
    const Scenario x = build_archetype(a), y = build_archetype(a);
    CHECK(x == y);
    for (const Sensor& s : x.network.sensors()) {
      CHECK(x.network.links()[x.network.link_index(s.link)].kind == LinkKind::kMainline);
    }
    CHECK_NOTHROW(validate_partition(x.partition, x.network));
  }
}

TEST_CASE("bypass connectors create exactly the unobservable pairs") {
  for (int bypass : {0, 2, 4}) {
    ArchetypeParams p;
    p.bypass_pairs = bypass;
    const Scenario sc = build_archetype(Archetype::kOneWayCorridor, p);
    const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
    SimulatorConfig cfg;
    const auto routes = compute_routes(sc, pairs, cfg);
    const auto hidden = identify_unobservable_pairs(sc.network, pairs, routes);
    CHECK(hidden.size() == static_cast<std::size_t>(bypass));
    for (std::size_t h : hidden) {
      CHECK(pairs.pairs[h].destination == pairs.pairs[h].origin + 1);
      CHECK(pairs.pairs[h].origin >= 1);
    }
  }
  ArchetypeParams too_many;
  too_many.bypass_pairs = 6;
  CHECK_THROWS_AS(build_archetype(Archetype::kOneWayCorridor, too_many), ConfigError);
  ArchetypeParams wrong;
  wrong.bypass_pairs = 1;
  CHECK_THROWS_AS(build_archetype(Archetype::kJunction, wrong), ConfigError);
}

TEST_CASE("hidden pairs are those whose routes never touch a sensor") {
  const Scenario sc = build_archetype(Archetype::kSimpleRamp);
  const ODPairSet pairs = generate_od_pairs(sc.partition, sc.network);
  const auto routes = compute_routes(sc, pairs, SimulatorConfig{});
  CHECK(identify_unobservable_pairs(sc.network, pairs, routes).empty());
  // Without sensors every pair is hidden.
  const RoadNetwork bare(sc.network.nodes(), sc.network.links(), {});
  CHECK(identify_unobservable_pairs(bare, pairs, routes).size() == pairs.dimension());
  CHECK_THROWS_AS(identify_unobservable_pairs(sc.network, pairs, {}), ValidationError);
}

TEST_CASE("scenario JSON round trip") {
  for (Archetype a : {Archetype::kSimpleRamp, Archetype::kJunction}) {
    ArchetypeParams p;
    const Scenario sc = build_archetype(a, p);
    CHECK(scenario_from_json(scenario_to_json(sc)) == sc);
  }
  ArchetypeParams bp;
  bp.bypass_pairs = 3;
  const Scenario c = build_archetype(Archetype::kOneWayCorridor, bp);
  const Scenario back = scenario_from_json(nlohmann::json::parse(scenario_to_json(c).dump()));
  CHECK(back == c);
}

TEST_CASE("network validation") {
  std::vector<Node> nodes{{0, 0, 0}, {1, 1, 0}};
  CHECK_THROWS_AS(RoadNetwork({{0, 0, 0}, {0, 1, 0}}, {}, {}), ValidationError);
  CHECK_THROWS_AS(RoadNetwork(nodes, {mainline(0, 0, 1), mainline(0, 1, 0)}, {}), ValidationError);
  CHECK_THROWS_AS(RoadNetwork(nodes, {mainline(0, 0, 7)}, {}), ValidationError);
  CHECK_THROWS_AS(RoadNetwork(nodes, {mainline(0, 0, 1)}, {{0, 3}}), ValidationError);
  CHECK_THROWS_AS(RoadNetwork(nodes, {mainline(0, 0, 1)}, {{0, 0}, {1, 0}}), ValidationError);
  Link ramp = mainline(0, 0, 1);
  ramp.kind = LinkKind::kOnRamp;
  CHECK_THROWS_AS(RoadNetwork(nodes, {ramp}, {{0, 0}}), ValidationError);

  const RoadNetwork net(nodes, {mainline(0, 0, 1)}, {{5, 0}});
  CHECK(net.sensor_on_link(0).has_value());
  CHECK_THROWS_AS(net.node_index(9), ValidationError);

  TazPartition dup{{{0, {0}, {}}, {0, {}, {1}}}};
  CHECK_THROWS_AS(validate_partition(dup, net), ValidationError);
  TazPartition empty_zone{{{0, {}, {}}}};
  CHECK_THROWS_AS(validate_partition(empty_zone, net), ValidationError);
  TazPartition missing{{{0, {4}, {}}}};
  CHECK_THROWS_AS(validate_partition(missing, net), ValidationError);
  CHECK_THROWS_AS(generate_od_pairs(TazPartition{}, net), ValidationError);

  CHECK_THROWS_AS(parse_archetype("city"), ConfigError);
  CHECK_THROWS_AS(parse_link_kind("tunnel"), ValidationError);
  ArchetypeParams zero;
  zero.scale = 0;
  CHECK_THROWS_AS(build_archetype(Archetype::kSimpleRamp, zero), ConfigError);
}

TEST_CASE("bounds map the unit cube and OD vectors check their domain") {
  const ODBounds b = ODBounds::uniform(2, 1.0, 2001.0);
  const auto x = b.from_unit({0.0, 0.5});
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 1001.0);
  const auto u = b.to_unit(x);
  CHECK(u[0] == 0.0);
  CHECK(u[1] == 0.5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> p{d(rng), d(rng)};
    const auto back = b.to_unit(b.from_unit(p));
    CHECK(back[0] == doctest::Approx(p[0]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ODBounds::uniform(2, 5.0, 5.0), ConfigError);
  CHECK_THROWS_AS(b.from_unit({0.1}), ValidationError);
  CHECK_THROWS_AS((ODVector{{3000.0, 5.0}, b}.check()), DomainError);
  CHECK_THROWS_AS((ODVector{{std::nan(""), 5.0}, b}.check()), ValidationError);
  CHECK_THROWS_AS((ODVector{{5.0}, b}.check()), ValidationError);
  CHECK_NOTHROW((ODVector{{1.0, 2001.0}, b}.check()));
}
