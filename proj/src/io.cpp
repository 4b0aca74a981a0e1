#include "odcal/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "odcal/error.hpp"

namespace odcal {

using nlohmann::json;

std::string_view to_string(SimMode m) {
  return m == SimMode::kDeterministic ? "deterministic" : "stochastic";
}

SimMode parse_sim_mode(std::string_view name) {
  if (name == "deterministic" || name == "det") return SimMode::kDeterministic;
  if (name == "stochastic" || name == "stoch") return SimMode::kStochastic;
  throw ConfigError("unknown simulation mode '" + std::string(name) + "'");
}

json scenario_to_json(const Scenario& sc) {
  json j;
  if (sc.archetype) j["archetype"] = std::string(to_string(*sc.archetype));
  j["nodes"] = json::array();
  for (const Node& n : sc.network.nodes()) j["nodes"].push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  j["links"] = json::array();
  for (const Link& l : sc.network.links()) {
    j["links"].push_back({{"id", l.id},
                          {"from", l.from},
                          {"to", l.to},
                          {"length_m", l.length_m},
                          {"lanes", l.lanes},
                          {"free_speed", l.free_speed},
                          {"capacity", l.capacity},
                          {"kind", std::string(to_string(l.kind))}});
  }
  j["tazs"] = json::array();
  for (const Taz& t : sc.partition.zones) {
    j["tazs"].push_back({{"id", t.id}, {"sources", t.sources}, {"sinks", t.sinks}});
  }
  j["sensors"] = json::array();
  for (const Sensor& s : sc.network.sensors()) j["sensors"].push_back({{"id", s.id}, {"link", s.link}});
  return j;
}

Scenario scenario_from_json(const json& j) {
  try {
    for (const char* key : {"nodes", "links", "tazs", "sensors"}) {
      if (!j.contains(key)) throw ValidationError(std::string("scenario document lacks '") + key + "'");
    }
    std::vector<Node> nodes;
    for (const auto& n : j.at("nodes")) nodes.push_back({n.at("id"), n.at("x"), n.at("y")});
    std::vector<Link> links;
    for (const auto& l : j.at("links")) {
      links.push_back({l.at("id"), l.at("from"), l.at("to"), l.at("length_m"), l.at("lanes"),
                       l.at("free_speed"), l.at("capacity"),
                       parse_link_kind(l.at("kind").get<std::string>())});
    }
    std::vector<Sensor> sensors;
    for (const auto& s : j.at("sensors")) sensors.push_back({s.at("id"), s.at("link")});
    Scenario sc;
    if (j.contains("archetype")) sc.archetype = parse_archetype(j.at("archetype").get<std::string>());
    sc.network = RoadNetwork(std::move(nodes), std::move(links), std::move(sensors));
    for (const auto& t : j.at("tazs")) {
      sc.partition.zones.push_back({t.at("id"), t.at("sources").get<std::vector<int>>(),
                                    t.at("sinks").get<std::vector<int>>()});
    }
    validate_partition(sc.partition, sc.network);
    return sc;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scenario document: ") + e.what());
  }
}

json ground_truth_to_json(const GroundTruth& gt) {
  json j;
  j["x_star"] = gt.x_star;
  json targets = json::object();
  for (const SensorTarget& t : gt.targets) {
    targets[std::to_string(t.sensor_id)] = {{"count", t.count}, {"speed", t.speed}};
  }
  j["targets"] = targets;
  j["gt_seed"] = gt.gt_seed;
  j["replications"] = gt.replications;
  j["mode"] = std::string(to_string(gt.mode));
  return j;
}

GroundTruth ground_truth_from_json(const json& j) {
  try {
    GroundTruth gt;
    gt.x_star = j.at("x_star").get<std::vector<double>>();
    for (const auto& [key, v] : j.at("targets").items()) {
      gt.targets.push_back({std::stoi(key), v.at("count"), v.at("speed")});
    }
    std::sort(gt.targets.begin(), gt.targets.end(),
              [](const SensorTarget& a, const SensorTarget& b) { return a.sensor_id < b.sensor_id; });
    gt.gt_seed = j.at("gt_seed");
    gt.replications = j.at("replications");
    gt.mode = j.contains("mode") ? parse_sim_mode(j.at("mode").get<std::string>()) : SimMode::kDeterministic;
    if (gt.replications < 1) throw ValidationError("ground truth needs replications >= 1");
    return gt;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed ground-truth document: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ValidationError("ground-truth target keys must be sensor ids");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("invalid JSON in '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace odcal
