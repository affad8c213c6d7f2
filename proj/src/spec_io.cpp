#include "swp/spec_io.hpp"

#include <fstream>
#include <sstream>

namespace swp {

using nlohmann::json;

std::vector<double> ratio_linspace(double lo, double hi, int count) {
  require(count >= 1, ErrorKind::Config, "ratio grid needs at least one entry");
  require(lo > 0.0 && lo <= hi && hi <= 1.0, ErrorKind::Config, "ratio bounds must satisfy 0<lo<=hi<=1");
  std::vector<double> out;
  if (count == 1) {
    out.push_back(hi);
    return out;
  }
  for (int i = 0; i < count; ++i)
    out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  out.back() = hi;
  return out;
}

json spec_to_json(const SupernetSpec& spec) {
  json j;
  j["input"] = {{"channels", spec.in_channels}, {"height", spec.in_h}, {"width", spec.in_w}};
  j["classes"] = spec.classes;
  j["ratio_grid"] = spec.ratio_grid;
  j["stage_bounds"] = spec.stage_bounds;
  json layers = json::array();
  for (const LayerSpec& ls : spec.layers) {
    json l;
    l["kind"] = layer_kind_name(ls.kind);
    switch (ls.kind) {
      case LayerKind::Conv:
        l["out_channels"] = ls.out_channels;
        l["kernel"] = {ls.kh, ls.kw};
        l["stride"] = ls.stride;
        l["pad"] = ls.pad;
        break;
      case LayerKind::Pool:
        l["kernel"] = {ls.kh, ls.kw};
        l["stride"] = ls.stride;
        l["pad"] = ls.pad;
        break;
      case LayerKind::Dense:
        l["out_features"] = ls.out_channels;
        break;
      case LayerKind::Relu:
        break;
    }
    layers.push_back(l);
  }
  j["layers"] = layers;
  return j;
}

namespace {

void read_kernel(const json& l, LayerSpec& ls) {
  require(l.contains("kernel"), ErrorKind::Config, "layer is missing field 'kernel'");
  const json& k = l.at("kernel");
  if (k.is_number_integer()) {
    ls.kh = ls.kw = k.get<int>();
  } else {
    require(k.is_array() && k.size() == 2, ErrorKind::Config, "kernel must be an int or [kh,kw]");
    ls.kh = k[0].get<int>();
    ls.kw = k[1].get<int>();
  }
  ls.stride = l.value("stride", 1);
  ls.pad = l.value("pad", 0);
}

}  // namespace

SupernetSpec spec_from_json(const json& j) {
  SupernetSpec spec;
  require(j.contains("input"), ErrorKind::Config, "supernet is missing field 'input'");
  const json& in = j.at("input");
  for (const char* f : {"channels", "height", "width"})
    require(in.contains(f), ErrorKind::Config, std::string("supernet input is missing field '") + f + "'");
  spec.in_channels = in.at("channels").get<int>();
  spec.in_h = in.at("height").get<int>();
  spec.in_w = in.at("width").get<int>();
  require(j.contains("classes"), ErrorKind::Config, "supernet is missing field 'classes'");
  spec.classes = j.at("classes").get<int>();

  require(j.contains("ratio_grid"), ErrorKind::Config, "supernet is missing field 'ratio_grid'");
  const json& rg = j.at("ratio_grid");
  if (rg.is_array()) {
    spec.ratio_grid = rg.get<std::vector<double>>();
  } else {
    for (const char* f : {"count", "low", "high"})
      require(rg.contains(f), ErrorKind::Config, std::string("ratio_grid is missing field '") + f + "'");
    spec.ratio_grid = ratio_linspace(rg.at("low").get<double>(), rg.at("high").get<double>(),
                                     rg.at("count").get<int>());
  }

  require(j.contains("layers"), ErrorKind::Config, "supernet is missing field 'layers'");
  for (const json& l : j.at("layers")) {
    LayerSpec ls;
    require(l.contains("kind"), ErrorKind::Config, "layer is missing field 'kind'");
    ls.kind = layer_kind_from_name(l.at("kind").get<std::string>());
    switch (ls.kind) {
      case LayerKind::Conv:
        require(l.contains("out_channels"), ErrorKind::Config,
                "conv layer is missing field 'out_channels'");
        ls.out_channels = l.at("out_channels").get<int>();
        read_kernel(l, ls);
        break;
      case LayerKind::Pool:
        read_kernel(l, ls);
        break;
      case LayerKind::Dense:
        require(l.contains("out_features"), ErrorKind::Config,
                "dense layer is missing field 'out_features'");
        ls.out_channels = l.at("out_features").get<int>();
        break;
      case LayerKind::Relu:
        break;
    }
    spec.layers.push_back(ls);
  }
  if (j.contains("stage_bounds")) spec.stage_bounds = j.at("stage_bounds").get<std::vector<int>>();
  spec.validate();
  return spec;
}

SupernetSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open supernet spec '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "bad JSON in '" + path + "': " + e.what());
  }
  return spec_from_json(j);
}

void save_width_csv(const SupernetSpec& spec, const WidthConfig& cfg, const std::string& path) {
  validate_config(spec, cfg);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write '" + path + "'");
  out << "layer_index,channels,max_channels\n";
  for (std::size_t s = 0; s < cfg.channels.size(); ++s)
    out << spec.prunable_layers[s] << "," << cfg.channels[s] << ","
        << spec.full_width(static_cast<int>(s)) << "\n";
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

WidthConfig load_width_csv(const SupernetSpec& spec, const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open width config '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Config,
          "width config '" + path + "' is empty");
  WidthConfig cfg;
  std::size_t expect = spec.prunable_layers.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 3, ErrorKind::Config,
            "width config row '" + line + "' must have 3 columns");
    int layer_index = 0, channels = 0, max_channels = 0;
    try {
      layer_index = std::stoi(cells[0]);
      channels = std::stoi(cells[1]);
      max_channels = std::stoi(cells[2]);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "width config row '" + line + "' is not numeric");
    }
    const std::size_t slot = cfg.channels.size();
    require(slot < expect, ErrorKind::Config, "width config has too many rows");
    require(layer_index == spec.prunable_layers[slot], ErrorKind::Config,
            "width config row " + std::to_string(slot) + " names layer " +
                std::to_string(layer_index) + ", expected " +
                std::to_string(spec.prunable_layers[slot]));
    require(max_channels == spec.full_width(static_cast<int>(slot)), ErrorKind::Config,
            "width config max_channels mismatch at layer " + std::to_string(layer_index));
    cfg.channels.push_back(channels);
  }
  validate_config(spec, cfg);
  return cfg;
}

}  // namespace swp
