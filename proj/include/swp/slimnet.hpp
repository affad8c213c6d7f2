#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <cstdint>
#include <string>
#include <vector>

#include "swp/autodiff.hpp"
#include "swp/bigint.hpp"
#include "swp/rng.hpp"

namespace swp {

enum class LayerKind { Conv, Relu, Pool, Dense };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int out_channels = 0;  // conv: max width m; dense: fixed out features
  int kh = 0, kw = 0;
  int stride = 1;
  int pad = 0;

  bool prunable() const { return kind == LayerKind::Conv; }
  bool carries_channels() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
};

// The search space: an ordered layer list, a stage partition of it, and the
// discrete width-ratio grid shared by every prunable layer.
struct SupernetSpec {
  int in_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int classes = 0;
  std::vector<LayerSpec> layers;
  std::vector<int> stage_bounds;     // N+1 indices, first 0, last layers.size()
  std::vector<double> ratio_grid;    // sorted ascending, must contain 1.0

  // filled by validate()
  std::vector<int> prunable_layers;      // layer indices of prunable layers, in order
  std::vector<int> prunable_slot;        // layer index -> slot in prunable_layers, or -1
  std::vector<int> layer_out_h, layer_out_w;  // spatial extents after each layer

  void validate();

  int num_layers() const { return static_cast<int>(layers.size()); }
  int num_prunable() const { return static_cast<int>(prunable_layers.size()); }
  int num_stages() const { return static_cast<int>(stage_bounds.size()) - 1; }
  std::pair<int, int> stage_range(int s) const;  // [begin,end) layer indices
  int stage_of_layer(int li) const;
  std::vector<int> stage_prunable_slots(int s) const;

  // Width quantization: a grid ratio r on a layer with max width m yields
  // max(1, round(r*m)) channels.
  static int quantize(double ratio, int m) {
    return std::max(1, static_cast<int>(std::lround(ratio * m)));
  }
  int full_width(int slot) const { return layers[prunable_layers[slot]].out_channels; }
  int min_width(int slot) const { return quantize(ratio_grid.front(), full_width(slot)); }
  // Distinct legal channel counts for one prunable layer, ascending.
  std::vector<int> legal_widths(int slot) const;

  // Channel count of the feature map flowing out of stage s under full widths.
  int full_channels_at_stage_output(int s) const;
  int full_channels_at_stage_input(int s) const;
  // True when some gene can change the channel count of stage s's output.
  bool stage_output_prunable(int s) const;

  // A copy of this spec with every prunable layer narrowed to the given
  // widths and a trivial {1.0} grid; used for standalone subnets.
  SupernetSpec narrowed(const std::vector<int>& widths) const;
};

// Per-prunable-layer channel counts for the whole net.
struct WidthConfig {
  std::vector<int> channels;

  bool operator==(const WidthConfig& o) const { return channels == o.channels; }
};

// One stage's slice of a WidthConfig.
using StageGene = std::vector<int>;

void validate_config(const SupernetSpec& spec, const WidthConfig& cfg);
WidthConfig full_config(const SupernetSpec& spec);
WidthConfig tiny_config(const SupernetSpec& spec);
StageGene stage_slice(const SupernetSpec& spec, const WidthConfig& cfg, int stage);
WidthConfig assemble_config(const SupernetSpec& spec, const std::vector<StageGene>& genes);

struct CandidateCounts {
  std::vector<BigUint> per_stage;
  BigUint total;
};
// g^{L_i} per stage and g^L in total, exact.
CandidateCounts count_candidates(const SupernetSpec& spec);

// Resolved per-layer channel widths for one forward pass.
struct WidthPlan {
  std::vector<int> out_ch;  // per layer in [begin,end)
  int begin = 0, end = 0;
  int entry_channels = 0;
};

// Chained plan over the whole net: each prunable layer's in-width is the
// previous prunable layer's out-width from the same config.
WidthPlan chained_plan(const SupernetSpec& spec, const WidthConfig& cfg);
// Stage plan: the stage consumes the fullnet's feature map, so the entry
// width is the full channel count at the stage input; widths chain only
// inside the stage.
WidthPlan stage_plan(const SupernetSpec& spec, int stage, const StageGene& gene);

// ---- parameters -----------------------------------------------------------

template <typename T>
struct SupernetParams {
  std::vector<Param<T>> weights;    // per layer; empty for relu/pool
  std::vector<Param<T>> biases;
  std::vector<Param<T>> adapter_w;  // per stage; empty when the stage output
  std::vector<Param<T>> adapter_b;  // width is fixed at full

  std::vector<Param<T>*> all_params() {
    std::vector<Param<T>*> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i].present()) {
        out.push_back(&weights[i]);
        out.push_back(&biases[i]);
      }
    }
    for (std::size_t s = 0; s < adapter_w.size(); ++s) {
      if (adapter_w[s].present()) {
        out.push_back(&adapter_w[s]);
        out.push_back(&adapter_b[s]);
      }
    }
    return out;
  }

  void zero_grad() {
    for (Param<T>* p : all_params()) p->zero_grad();
  }
};

// He-normal init, fan-in taken at full width. Each tensor gets its own
// derived seed so initialization does not depend on allocation order.
template <typename T>
SupernetParams<T> init_params(const SupernetSpec& spec, std::uint64_t seed) {
  SupernetParams<T> p;
  const int L = spec.num_layers();
  p.weights.resize(L);
  p.biases.resize(L);
  int cur_c = spec.in_channels;  // full-width channel walk
  for (int li = 0; li < L; ++li) {
    const LayerSpec& ls = spec.layers[li];
    const int in_h = li == 0 ? spec.in_h : spec.layer_out_h[li - 1];
    const int in_w = li == 0 ? spec.in_w : spec.layer_out_w[li - 1];
    if (ls.kind == LayerKind::Conv) {
      const int co = ls.out_channels, ci = cur_c;
      p.weights[li].name = "layer" + std::to_string(li) + ".weight";
      p.weights[li].value = Tensor<T>({(std::size_t)co, (std::size_t)ci, (std::size_t)ls.kh,
                                       (std::size_t)ls.kw});
      Rng rng(derive_seed(seed, "init.weight", (std::uint64_t)li));
      fill_normal(p.weights[li].value, rng, 0.0, std::sqrt(2.0 / (ci * ls.kh * ls.kw)));
      p.biases[li].name = "layer" + std::to_string(li) + ".bias";
      p.biases[li].value = Tensor<T>({(std::size_t)co});
      cur_c = co;
    } else if (ls.kind == LayerKind::Dense) {
      const int in_features = cur_c * in_h * in_w;
      p.weights[li].name = "layer" + std::to_string(li) + ".weight";
      p.weights[li].value = Tensor<T>({(std::size_t)ls.out_channels, (std::size_t)in_features});
      Rng rng(derive_seed(seed, "init.weight", (std::uint64_t)li));
      fill_normal(p.weights[li].value, rng, 0.0, std::sqrt(2.0 / in_features));
      p.biases[li].name = "layer" + std::to_string(li) + ".bias";
      p.biases[li].value = Tensor<T>({(std::size_t)ls.out_channels});
      cur_c = ls.out_channels;
    }
  }
  const int N = spec.num_stages();
  p.adapter_w.resize(N);
  p.adapter_b.resize(N);
  for (int s = 0; s < N; ++s) {
    if (!spec.stage_output_prunable(s)) continue;
    const int full = spec.full_channels_at_stage_output(s);
    p.adapter_w[s].name = "stage" + std::to_string(s) + ".adapter.weight";
    p.adapter_w[s].value = Tensor<T>({(std::size_t)full, (std::size_t)full, 1, 1});
    Rng rng(derive_seed(seed, "init.adapter", (std::uint64_t)s));
    fill_normal(p.adapter_w[s].value, rng, 0.0, std::sqrt(2.0 / full));
    p.adapter_b[s].name = "stage" + std::to_string(s) + ".adapter.bias";
    p.adapter_b[s].value = Tensor<T>({(std::size_t)full});
  }
  return p;
}

// Materialized prefix slice of a layer weight: lowest-index c_out filters,
// each truncated to its lowest-index c_in input columns/channels.
template <typename T>
Tensor<T> slice_copy(const Tensor<T>& w, int c_out, int c_in) {
  require(w.rank() == 4 || w.rank() == 2, ErrorKind::Shape, "slice_copy expects conv or dense weight");
  const int co_full = static_cast<int>(w.dim(0));
  const int ci_full = static_cast<int>(w.dim(1));
  require(c_out >= 1 && c_out <= co_full, ErrorKind::Shape, "slice_copy: c_out exceeds full width");
  require(c_in >= 1 && c_in <= ci_full, ErrorKind::Shape, "slice_copy: c_in exceeds full width");
  if (w.rank() == 2) {
    Tensor<T> out({(std::size_t)c_out, (std::size_t)c_in});
    for (int o = 0; o < c_out; ++o)
      for (int i = 0; i < c_in; ++i)
        out.data[(std::size_t)o * c_in + i] = w.data[(std::size_t)o * ci_full + i];
    return out;
  }
  const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
  Tensor<T> out({(std::size_t)c_out, (std::size_t)c_in, (std::size_t)kh, (std::size_t)kw});
  const std::size_t kk = (std::size_t)kh * kw;
  for (int o = 0; o < c_out; ++o)
    for (int i = 0; i < c_in; ++i)
      std::copy_n(&w.data[((std::size_t)o * ci_full + i) * kk], kk,
                  &out.data[((std::size_t)o * c_in + i) * kk]);
  return out;
}

// ---- forward execution ----------------------------------------------------

template <typename T>
VarPtr<T> run_layers(const SupernetSpec& spec, SupernetParams<T>& params, const WidthPlan& plan,
                     VarPtr<T> x, std::type_identity_t<Tape<T>*> tape) {
  require(static_cast<int>(x->value.dim(1)) == plan.entry_channels || x->value.rank() != 4,
          ErrorKind::Shape, "run_layers: entry channel mismatch");
  for (int li = plan.begin; li < plan.end; ++li) {
    const LayerSpec& ls = spec.layers[li];
    switch (ls.kind) {
      case LayerKind::Conv:
        x = conv2d(tape, x, params.weights[li], params.biases[li], ls.stride, ls.pad,
                   plan.out_ch[li - plan.begin]);
        break;
      case LayerKind::Dense:
        x = dense(tape, x, params.weights[li], params.biases[li], ls.out_channels);
        break;
      case LayerKind::Relu:
        x = relu(tape, x);
        break;
      case LayerKind::Pool:
        x = maxpool2d(tape, x, ls.kh, ls.kw, ls.stride, ls.pad);
        break;
    }
  }
  return x;
}

// Whole-net forward with chained sliced widths. Equivalent, element for
// element, to a standalone network built from copies of the sliced weights.
template <typename T>
VarPtr<T> subnet_forward(const SupernetSpec& spec, SupernetParams<T>& params,
                         const WidthConfig& cfg, VarPtr<T> input,
                         std::type_identity_t<Tape<T>*> tape) {
  WidthPlan plan = chained_plan(spec, cfg);
  return run_layers(spec, params, plan, std::move(input), tape);
}

// Fullnet stage inputs/targets for one batch; the distillation ground truth.
template <typename T>
struct StageFeatureCache {
  std::vector<Tensor<T>> input;   // X-hat_{i-1}: what stage i consumes
  std::vector<Tensor<T>> target;  // Y-hat_i: what stage i should produce
};

template <typename T>
VarPtr<T> fullnet_forward(const SupernetSpec& spec, SupernetParams<T>& params, VarPtr<T> input,
                          std::type_identity_t<Tape<T>*> tape,
                          std::type_identity_t<StageFeatureCache<T>*> cache) {
  const WidthConfig full = full_config(spec);
  if (cache) {
    cache->input.assign(spec.num_stages(), {});
    cache->target.assign(spec.num_stages(), {});
  }
  VarPtr<T> x = std::move(input);
  for (int s = 0; s < spec.num_stages(); ++s) {
    if (cache) cache->input[s] = x->value;
    WidthPlan plan = stage_plan(spec, s, stage_slice(spec, full, s));
    x = run_layers(spec, params, plan, x, tape);
    if (cache) cache->target[s] = x->value;
  }
  return x;
}

template <typename T>
struct StageOut {
  VarPtr<T> raw;      // the stage's own output, gene widths
  VarPtr<T> adapted;  // mapped to the fullnet channel count (== raw when bypassed)
  bool bypassed = false;
};

// One stage under a gene, consuming the fullnet's feature map. The 1x1
// adapter restores the fullnet channel count; it is skipped entirely when the
// gene's output width already matches, so the fullnet reproduces its own
// targets exactly.
template <typename T>
StageOut<T> stage_forward(const SupernetSpec& spec, SupernetParams<T>& params, int stage,
                          const StageGene& gene, VarPtr<T> stage_input,
                          std::type_identity_t<Tape<T>*> tape) {
  const int entry = spec.full_channels_at_stage_input(stage);
  if (stage_input->value.rank() == 4) {
    require(static_cast<int>(stage_input->value.dim(1)) == entry, ErrorKind::Shape,
            "stage_forward: input has " + std::to_string(stage_input->value.dim(1)) +
                " channels, stage " + std::to_string(stage) + " expects " + std::to_string(entry));
  }
  WidthPlan plan = stage_plan(spec, stage, gene);
  StageOut<T> out;
  out.raw = run_layers(spec, params, plan, std::move(stage_input), tape);
  const int full_out = spec.full_channels_at_stage_output(stage);
  const int raw_out = static_cast<int>(out.raw->value.dim(1));
  if (raw_out == full_out) {
    out.adapted = out.raw;
    out.bypassed = true;
  } else {
    require(params.adapter_w[stage].present(), ErrorKind::Shape,
            "stage_forward: missing adapter for stage " + std::to_string(stage));
    out.adapted = conv2d(tape, out.raw, params.adapter_w[stage], params.adapter_b[stage],
                         /*stride=*/1, /*pad=*/0, full_out);
    out.bypassed = false;
  }
  return out;
}

// Standalone copies of the sliced weights, shaped for spec.narrowed(widths).
template <typename T>
SupernetParams<T> copy_sliced_params(const SupernetSpec& spec, const SupernetParams<T>& params,
                                     const WidthConfig& cfg) {
  validate_config(spec, cfg);
  WidthPlan plan = chained_plan(spec, cfg);
  SupernetParams<T> out;
  const int L = spec.num_layers();
  out.weights.resize(L);
  out.biases.resize(L);
  out.adapter_w.resize(spec.num_stages());
  out.adapter_b.resize(spec.num_stages());
  int cur_c = spec.in_channels;       // sliced channel walk
  int full_c = spec.in_channels;      // full-width channel walk
  for (int li = 0; li < L; ++li) {
    const LayerSpec& ls = spec.layers[li];
    if (ls.kind == LayerKind::Conv) {
      const int co = plan.out_ch[li];
      out.weights[li].name = params.weights[li].name;
      out.weights[li].value = slice_copy(params.weights[li].value, co, cur_c);
      out.biases[li].name = params.biases[li].name;
      out.biases[li].value = Tensor<T>({(std::size_t)co});
      std::copy_n(params.biases[li].value.data.begin(), co, out.biases[li].value.data.begin());
      cur_c = co;
      full_c = ls.out_channels;
    } else if (ls.kind == LayerKind::Dense) {
      // the first cur_c channels of a flattened [c,h,w] map are a contiguous
      // prefix, so the dense slice is a plain column prefix
      const int in_full = static_cast<int>(params.weights[li].value.dim(1));
      const int hw = in_full / full_c;
      out.weights[li].name = params.weights[li].name;
      out.weights[li].value = slice_copy(params.weights[li].value, ls.out_channels, cur_c * hw);
      out.biases[li] = params.biases[li];
      cur_c = ls.out_channels;
      full_c = ls.out_channels;
    }
  }
  return out;
}

}  // namespace swp
