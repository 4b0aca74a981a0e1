#pragma once

#include <string>

#include "json.hpp"

#include "odcal/network.hpp"
#include "odcal/simulator.hpp"

namespace odcal {

// Scenario document: `nodes`, `links`, `tazs`, `sensors`, optional `archetype`.
nlohmann::json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const nlohmann::json& j);

// Ground-truth document: `x_star`, `targets` (sensor id -> count, speed),
// `gt_seed`, `replications`, `mode`.
nlohmann::json ground_truth_to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

std::string_view to_string(SimMode m);
SimMode parse_sim_mode(std::string_view name);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace odcal
