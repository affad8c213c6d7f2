#include "swp/slimnet.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace swp {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::Pool: return "pool";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "relu") return LayerKind::Relu;
  if (s == "pool") return LayerKind::Pool;
  if (s == "dense") return LayerKind::Dense;
  fail(ErrorKind::Config, "unknown layer kind '" + s + "'");
}

void SupernetSpec::validate() {
  require(in_channels >= 1 && in_h >= 1 && in_w >= 1, ErrorKind::Config,
          "supernet: input extents must be positive");
  require(classes >= 2, ErrorKind::Config, "supernet: need at least 2 classes");
  require(!layers.empty(), ErrorKind::Config, "supernet: empty layer list");
  require(!ratio_grid.empty(), ErrorKind::Config, "supernet: empty ratio grid");
  for (std::size_t i = 0; i < ratio_grid.size(); ++i) {
    require(ratio_grid[i] > 0.0 && ratio_grid[i] <= 1.0, ErrorKind::Config,
            "supernet: ratios must lie in (0,1]");
    if (i) require(ratio_grid[i] > ratio_grid[i - 1], ErrorKind::Config,
                   "supernet: ratio grid must be strictly increasing");
  }
  require(ratio_grid.back() == 1.0, ErrorKind::Config, "supernet: ratio grid must contain 1.0");

  prunable_layers.clear();
  prunable_slot.assign(layers.size(), -1);
  layer_out_h.assign(layers.size(), 0);
  layer_out_w.assign(layers.size(), 0);
  int h = in_h, w = in_w;
  bool seen_dense = false;
  for (int li = 0; li < num_layers(); ++li) {
    LayerSpec& ls = layers[li];
    switch (ls.kind) {
      case LayerKind::Conv:
        require(!seen_dense, ErrorKind::Config, "supernet: conv after dense is unsupported");
        require(ls.out_channels >= 1, ErrorKind::Config,
                "supernet: layer " + std::to_string(li) + " needs positive out_channels");
        require(ls.kh >= 1 && ls.kw >= 1 && ls.stride >= 1 && ls.pad >= 0, ErrorKind::Config,
                "supernet: bad conv geometry at layer " + std::to_string(li));
        h = conv_out_extent(h, ls.pad, ls.kh, ls.stride, "spec conv h");
        w = conv_out_extent(w, ls.pad, ls.kw, ls.stride, "spec conv w");
        prunable_slot[li] = static_cast<int>(prunable_layers.size());
        prunable_layers.push_back(li);
        break;
      case LayerKind::Pool:
        require(!seen_dense, ErrorKind::Config, "supernet: pool after dense is unsupported");
        require(ls.kh >= 1 && ls.kw >= 1 && ls.stride >= 1 && ls.pad >= 0, ErrorKind::Config,
                "supernet: bad pool geometry at layer " + std::to_string(li));
        require(ls.pad < ls.kh && ls.pad < ls.kw, ErrorKind::Config,
                "supernet: pool pad must be smaller than its kernel");
        h = conv_out_extent(h, ls.pad, ls.kh, ls.stride, "spec pool h");
        w = conv_out_extent(w, ls.pad, ls.kw, ls.stride, "spec pool w");
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::Dense:
        require(ls.out_channels >= 1, ErrorKind::Config,
                "supernet: dense layer " + std::to_string(li) + " needs positive out features");
        seen_dense = true;
        h = w = 1;
        break;
    }
    layer_out_h[li] = h;
    layer_out_w[li] = w;
  }
  require(layers.back().kind == LayerKind::Dense, ErrorKind::Config,
          "supernet: last layer must be the dense classifier head");
  require(layers.back().out_channels == classes, ErrorKind::Config,
          "supernet: classifier head must emit one logit per class");

  if (stage_bounds.empty()) {
    // default: a stage ends after each downsampling layer
    stage_bounds.push_back(0);
    for (int li = 0; li < num_layers(); ++li) {
      const LayerSpec& ls = layers[li];
      const bool downsamples =
          (ls.kind == LayerKind::Conv || ls.kind == LayerKind::Pool) && ls.stride > 1;
      if (downsamples && li + 1 < num_layers()) stage_bounds.push_back(li + 1);
    }
    stage_bounds.push_back(num_layers());
  }
  require(stage_bounds.size() >= 2, ErrorKind::Config, "supernet: need at least one stage");
  require(stage_bounds.front() == 0 && stage_bounds.back() == num_layers(), ErrorKind::Config,
          "supernet: stage bounds must start at 0 and end at the layer count");
  for (std::size_t i = 1; i < stage_bounds.size(); ++i)
    require(stage_bounds[i] > stage_bounds[i - 1], ErrorKind::Config,
            "supernet: stage bounds must be strictly increasing");
}

std::pair<int, int> SupernetSpec::stage_range(int s) const {
  require(s >= 0 && s < num_stages(), ErrorKind::Shape, "stage index out of range");
  return {stage_bounds[s], stage_bounds[s + 1]};
}

int SupernetSpec::stage_of_layer(int li) const {
  for (int s = 0; s < num_stages(); ++s)
    if (li >= stage_bounds[s] && li < stage_bounds[s + 1]) return s;
  fail(ErrorKind::Shape, "layer index out of range");
}

std::vector<int> SupernetSpec::stage_prunable_slots(int s) const {
  auto [b, e] = stage_range(s);
  std::vector<int> out;
  for (int li = b; li < e; ++li)
    if (prunable_slot[li] >= 0) out.push_back(prunable_slot[li]);
  return out;
}

std::vector<int> SupernetSpec::legal_widths(int slot) const {
  std::set<int> uniq;
  const int m = full_width(slot);
  for (double r : ratio_grid) uniq.insert(quantize(r, m));
  return std::vector<int>(uniq.begin(), uniq.end());
}

int SupernetSpec::full_channels_at_stage_input(int s) const {
  auto [b, e] = stage_range(s);
  (void)e;
  int c = in_channels;
  for (int li = 0; li < b; ++li)
    if (layers[li].carries_channels()) c = layers[li].out_channels;
  return c;
}

int SupernetSpec::full_channels_at_stage_output(int s) const {
  auto [b, e] = stage_range(s);
  (void)b;
  int c = in_channels;
  for (int li = 0; li < e; ++li)
    if (layers[li].carries_channels()) c = layers[li].out_channels;
  return c;
}

bool SupernetSpec::stage_output_prunable(int s) const {
  auto [b, e] = stage_range(s);
  int last_carrier = -1;
  for (int li = b; li < e; ++li)
    if (layers[li].carries_channels()) last_carrier = li;
  if (last_carrier < 0 || !layers[last_carrier].prunable()) return false;
  return legal_widths(prunable_slot[last_carrier]).size() > 1;
}

SupernetSpec SupernetSpec::narrowed(const std::vector<int>& widths) const {
  require(widths.size() == prunable_layers.size(), ErrorKind::Shape,
          "narrowed: width count mismatch");
  SupernetSpec out = *this;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    out.layers[prunable_layers[s]].out_channels = widths[s];
  }
  out.ratio_grid = {1.0};
  out.prunable_layers.clear();
  out.validate();
  return out;
}

void validate_config(const SupernetSpec& spec, const WidthConfig& cfg) {
  require(cfg.channels.size() == spec.prunable_layers.size(), ErrorKind::Config,
          "width config has " + std::to_string(cfg.channels.size()) + " entries, spec has " +
              std::to_string(spec.prunable_layers.size()) + " prunable layers");
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const auto legal = spec.legal_widths(static_cast<int>(i));
    const bool ok = std::find(legal.begin(), legal.end(), cfg.channels[i]) != legal.end();
    require(ok, ErrorKind::Config,
            "width " + std::to_string(cfg.channels[i]) + " at prunable layer " +
                std::to_string(i) + " is not on the ratio grid");
  }
}

WidthConfig full_config(const SupernetSpec& spec) {
  WidthConfig cfg;
  for (int s = 0; s < spec.num_prunable(); ++s) cfg.channels.push_back(spec.full_width(s));
  return cfg;
}

WidthConfig tiny_config(const SupernetSpec& spec) {
  WidthConfig cfg;
  for (int s = 0; s < spec.num_prunable(); ++s) cfg.channels.push_back(spec.min_width(s));
  return cfg;
}

StageGene stage_slice(const SupernetSpec& spec, const WidthConfig& cfg, int stage) {
  StageGene g;
  for (int slot : spec.stage_prunable_slots(stage)) g.push_back(cfg.channels[slot]);
  return g;
}

WidthConfig assemble_config(const SupernetSpec& spec, const std::vector<StageGene>& genes) {
  require(static_cast<int>(genes.size()) == spec.num_stages(), ErrorKind::Shape,
          "assemble_config: one gene per stage required");
  WidthConfig cfg;
  cfg.channels.assign(spec.num_prunable(), 0);
  for (int s = 0; s < spec.num_stages(); ++s) {
    const auto slots = spec.stage_prunable_slots(s);
    require(slots.size() == genes[s].size(), ErrorKind::Shape,
            "assemble_config: gene length mismatch at stage " + std::to_string(s));
    for (std::size_t i = 0; i < slots.size(); ++i) cfg.channels[slots[i]] = genes[s][i];
  }
  return cfg;
}

CandidateCounts count_candidates(const SupernetSpec& spec) {
  CandidateCounts out;
  const auto g = static_cast<std::uint64_t>(spec.ratio_grid.size());
  out.total = BigUint(1);
  for (int s = 0; s < spec.num_stages(); ++s) {
    const unsigned li = static_cast<unsigned>(spec.stage_prunable_slots(s).size());
    out.per_stage.push_back(BigUint::pow(g, li));
    out.total *= out.per_stage.back();
  }
  return out;
}

WidthPlan chained_plan(const SupernetSpec& spec, const WidthConfig& cfg) {
  validate_config(spec, cfg);
  WidthPlan plan;
  plan.begin = 0;
  plan.end = spec.num_layers();
  plan.entry_channels = spec.in_channels;
  plan.out_ch.assign(spec.num_layers(), 0);
  int cur = spec.in_channels;
  for (int li = 0; li < spec.num_layers(); ++li) {
    const LayerSpec& ls = spec.layers[li];
    if (ls.kind == LayerKind::Conv) {
      cur = cfg.channels[spec.prunable_slot[li]];
    } else if (ls.kind == LayerKind::Dense) {
      cur = ls.out_channels;
    }
    plan.out_ch[li] = cur;
  }
  return plan;
}

WidthPlan stage_plan(const SupernetSpec& spec, int stage, const StageGene& gene) {
  const auto slots = spec.stage_prunable_slots(stage);
  require(slots.size() == gene.size(), ErrorKind::Shape,
          "stage_plan: gene has " + std::to_string(gene.size()) + " entries, stage " +
              std::to_string(stage) + " has " + std::to_string(slots.size()) +
              " prunable layers");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto legal = spec.legal_widths(slots[i]);
    require(std::find(legal.begin(), legal.end(), gene[i]) != legal.end(), ErrorKind::Config,
            "stage gene width " + std::to_string(gene[i]) + " not on the ratio grid");
  }
  auto [b, e] = spec.stage_range(stage);
  WidthPlan plan;
  plan.begin = b;
  plan.end = e;
  plan.entry_channels = spec.full_channels_at_stage_input(stage);
  int cur = plan.entry_channels;
  std::size_t gi = 0;
  for (int li = b; li < e; ++li) {
    const LayerSpec& ls = spec.layers[li];
    if (ls.kind == LayerKind::Conv) {
      cur = gene[gi++];
    } else if (ls.kind == LayerKind::Dense) {
      cur = ls.out_channels;
    }
    plan.out_ch.push_back(cur);
  }
  return plan;
}

}  // namespace swp
