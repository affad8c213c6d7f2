#pragma once

#include <string>

#include "json.hpp"
#include "swp/slimnet.hpp"

namespace swp {

nlohmann::json spec_to_json(const SupernetSpec& spec);
SupernetSpec spec_from_json(const nlohmann::json& j);
SupernetSpec load_spec_file(const std::string& path);

// Channel-profile export: one row per prunable layer,
// "layer_index,channels,max_channels".
void save_width_csv(const SupernetSpec& spec, const WidthConfig& cfg, const std::string& path);
WidthConfig load_width_csv(const SupernetSpec& spec, const std::string& path);

// Evenly spaced ratios with exact endpoints; the default grid is
// linspace(0.1, 1.0, 31).
std::vector<double> ratio_linspace(double lo, double hi, int count);

}  // namespace swp
