#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "swp/slimnet.hpp"

namespace swp {

// All compute budgets are in multiply-accumulates (MACs), not "FLOPs": the
// x1/x2-per-MAC convention varies across the literature, so we pin the unit.
enum class BudgetKind { Macs, LatencyMs };

struct Budget {
  BudgetKind kind = BudgetKind::Macs;
  double value = 0.0;
};

const char* budget_kind_name(BudgetKind k);

// Table-driven latency model: per prunable layer, measured milliseconds keyed
// by channel count (or by (c_in,c_out) pairs on a full grid), plus a fixed
// overhead added once per net. Lookups interpolate linearly between
// bracketing entries; extrapolation is an error.
class CostTable {
public:
  struct LayerTable {
    bool pair_keyed = false;
    std::vector<int> counts;            // single-key breakpoints (c_out), ascending
    std::vector<double> ms;             // single-key latencies
    std::vector<int> cins, couts;       // pair-key grid breakpoints, ascending
    std::vector<double> grid_ms;        // row-major [cin][cout]
    bool empty() const { return counts.empty() && cins.empty(); }
  };

  // CSV rows: "layer_index,channels,latency_ms" or
  // "layer_index,c_in,c_out,latency_ms"; layer_index -1 is the overhead row.
  static CostTable load_csv(const std::string& path, const SupernetSpec& spec);

  double lookup(int slot, int c_in, int c_out) const;
  double overhead_ms() const { return overhead_ms_; }

  std::vector<LayerTable> layers;  // indexed by prunable slot

private:
  double overhead_ms_ = 0.0;
  friend CostTable make_cost_table_for_tests(std::vector<LayerTable>, double);
  void validate(const SupernetSpec& spec);
};

CostTable make_cost_table_for_tests(std::vector<CostTable::LayerTable> layers, double overhead);

// Exact MAC count of a whole subnet, channel widths chained through the net:
// conv contributes c_in*c_out*kh*kw*h_out*w_out, dense in*out, pool/relu 0.
// Adapters never count.
std::uint64_t flops_of_config(const SupernetSpec& spec, const WidthConfig& cfg);

// MACs of the layers of one stage under the chained widths of `cfg`; sums
// over stages to flops_of_config exactly.
std::uint64_t stage_flops_chained(const SupernetSpec& spec, const WidthConfig& cfg, int stage);

// Search-time cost of a stage gene: the stage consumes the fullnet's feature
// map, so the first in-stage layer is charged at full input width. This upper
// bounds the assembled (chained) stage cost, which is what makes per-stage
// budgets safe to sum against the global constraint.
std::uint64_t stage_flops_search(const SupernetSpec& spec, int stage, const StageGene& gene);

double latency_of_config(const SupernetSpec& spec, const WidthConfig& cfg, const CostTable& table);
double stage_latency_search(const SupernetSpec& spec, int stage, const StageGene& gene,
                            const CostTable& table);

// Unified dispatch over the budget kind. Chained whole-net cost includes the
// latency overhead; stage (search) costs never do.
double config_cost(const SupernetSpec& spec, const WidthConfig& cfg, BudgetKind kind,
                   const CostTable* table);
double stage_gene_cost(const SupernetSpec& spec, int stage, const StageGene& gene, BudgetKind kind,
                       const CostTable* table);

// [min,max] search-time cost of a stage: all-min and all-max in-stage widths.
// A stage budget outside this interval is infeasible.
std::pair<double, double> stage_cost_bounds(const SupernetSpec& spec, int stage, BudgetKind kind,
                                            const CostTable* table);

}  // namespace swp
