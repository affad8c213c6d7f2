#include "swp/cost_model.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace swp {

const char* budget_kind_name(BudgetKind k) {
  return k == BudgetKind::Macs ? "macs" : "latency_ms";
}

namespace {

// Per-layer MACs for a resolved width plan over [plan.begin, plan.end).
std::uint64_t plan_macs(const SupernetSpec& spec, const WidthPlan& plan) {
  std::uint64_t total = 0;
  int cur_c = plan.entry_channels;
  for (int li = plan.begin; li < plan.end; ++li) {
    const LayerSpec& ls = spec.layers[li];
    const int out_c = plan.out_ch[li - plan.begin];
    const int oh = spec.layer_out_h[li];
    const int ow = spec.layer_out_w[li];
    if (ls.kind == LayerKind::Conv) {
      total += (std::uint64_t)cur_c * out_c * ls.kh * ls.kw * oh * ow;
      cur_c = out_c;
    } else if (ls.kind == LayerKind::Dense) {
      const int ih = li == 0 ? spec.in_h : spec.layer_out_h[li - 1];
      const int iw = li == 0 ? spec.in_w : spec.layer_out_w[li - 1];
      total += (std::uint64_t)cur_c * ih * iw * ls.out_channels;
      cur_c = ls.out_channels;
    }
  }
  return total;
}

double plan_latency(const SupernetSpec& spec, const WidthPlan& plan, const CostTable& table) {
  double total = 0.0;
  int cur_c = plan.entry_channels;
  for (int li = plan.begin; li < plan.end; ++li) {
    const LayerSpec& ls = spec.layers[li];
    const int out_c = plan.out_ch[li - plan.begin];
    if (ls.kind == LayerKind::Conv) {
      total += table.lookup(spec.prunable_slot[li], cur_c, out_c);
      cur_c = out_c;
    } else if (ls.kind == LayerKind::Dense) {
      cur_c = ls.out_channels;
    }
  }
  return total;
}

}  // namespace

std::uint64_t flops_of_config(const SupernetSpec& spec, const WidthConfig& cfg) {
  return plan_macs(spec, chained_plan(spec, cfg));
}

std::uint64_t stage_flops_chained(const SupernetSpec& spec, const WidthConfig& cfg, int stage) {
  WidthPlan whole = chained_plan(spec, cfg);
  auto [b, e] = spec.stage_range(stage);
  WidthPlan plan;
  plan.begin = b;
  plan.end = e;
  plan.entry_channels = b == 0 ? spec.in_channels : whole.out_ch[b - 1];
  plan.out_ch.assign(whole.out_ch.begin() + b, whole.out_ch.begin() + e);
  return plan_macs(spec, plan);
}

std::uint64_t stage_flops_search(const SupernetSpec& spec, int stage, const StageGene& gene) {
  return plan_macs(spec, stage_plan(spec, stage, gene));
}

double latency_of_config(const SupernetSpec& spec, const WidthConfig& cfg, const CostTable& table) {
  return plan_latency(spec, chained_plan(spec, cfg), table) + table.overhead_ms();
}

double stage_latency_search(const SupernetSpec& spec, int stage, const StageGene& gene,
                            const CostTable& table) {
  return plan_latency(spec, stage_plan(spec, stage, gene), table);
}

double config_cost(const SupernetSpec& spec, const WidthConfig& cfg, BudgetKind kind,
                   const CostTable* table) {
  if (kind == BudgetKind::Macs) return static_cast<double>(flops_of_config(spec, cfg));
  require(table != nullptr, ErrorKind::Config, "latency budget requires a cost table");
  return latency_of_config(spec, cfg, *table);
}

double stage_gene_cost(const SupernetSpec& spec, int stage, const StageGene& gene, BudgetKind kind,
                       const CostTable* table) {
  if (kind == BudgetKind::Macs) return static_cast<double>(stage_flops_search(spec, stage, gene));
  require(table != nullptr, ErrorKind::Config, "latency budget requires a cost table");
  return stage_latency_search(spec, stage, gene, *table);
}

std::pair<double, double> stage_cost_bounds(const SupernetSpec& spec, int stage, BudgetKind kind,
                                            const CostTable* table) {
  const auto slots = spec.stage_prunable_slots(stage);
  StageGene lo, hi;
  for (int slot : slots) {
    lo.push_back(spec.min_width(slot));
    hi.push_back(spec.full_width(slot));
  }
  return {stage_gene_cost(spec, stage, lo, kind, table),
          stage_gene_cost(spec, stage, hi, kind, table)};
}

// ---- cost table -------------------------------------------------------------

double CostTable::lookup(int slot, int c_in, int c_out) const {
  require(slot >= 0 && slot < (int)layers.size() && !layers[slot].empty(), ErrorKind::Config,
          "cost table has no entries for prunable layer slot " + std::to_string(slot));
  const LayerTable& lt = layers[slot];

  auto interp1 = [](const std::vector<int>& xs, int x, auto value_at) -> double {
    require(x >= xs.front() && x <= xs.back(), ErrorKind::Config,
            "channel count " + std::to_string(x) + " outside cost table range [" +
                std::to_string(xs.front()) + "," + std::to_string(xs.back()) + "]");
    auto it = std::lower_bound(xs.begin(), xs.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    if (xs[hi] == x) return value_at(hi, 0.0, hi);
    std::size_t lo = hi - 1;
    double t = double(x - xs[lo]) / double(xs[hi] - xs[lo]);
    return value_at(lo, t, hi);
  };

  if (!lt.pair_keyed) {
    return interp1(lt.counts, c_out, [&](std::size_t lo, double t, std::size_t hi) {
      return lt.ms[lo] + t * (lt.ms[hi] - lt.ms[lo]);
    });
  }
  // bilinear over the (c_in, c_out) grid
  const std::size_t W = lt.couts.size();
  auto cell = [&](std::size_t i, std::size_t j) { return lt.grid_ms[i * W + j]; };
  return interp1(lt.cins, c_in, [&](std::size_t i0, double ti, std::size_t i1) {
    auto row = [&](std::size_t i) {
      return interp1(lt.couts, c_out, [&](std::size_t j0, double tj, std::size_t j1) {
        return cell(i, j0) + tj * (cell(i, j1) - cell(i, j0));
      });
    };
    return row(i0) + ti * (row(i1) - row(i0));
  });
}

void CostTable::validate(const SupernetSpec& spec) {
  require((int)layers.size() == spec.num_prunable(), ErrorKind::Config,
          "cost table must cover every prunable layer");
  for (int slot = 0; slot < (int)layers.size(); ++slot) {
    LayerTable& lt = layers[slot];
    require(!lt.empty(), ErrorKind::Config,
            "cost table missing rows for prunable layer slot " + std::to_string(slot));
    auto check_monotone = [&](const std::vector<double>& v, const std::string& what) {
      for (std::size_t i = 1; i < v.size(); ++i)
        require(v[i] >= v[i - 1], ErrorKind::Config,
                "cost table not monotone in " + what + " at slot " + std::to_string(slot));
    };
    if (!lt.pair_keyed) {
      for (double v : lt.ms)
        require(v > 0.0, ErrorKind::Config, "cost table latencies must be positive");
      check_monotone(lt.ms, "channel count");
    } else {
      const std::size_t W = lt.couts.size();
      require(lt.grid_ms.size() == lt.cins.size() * W, ErrorKind::Config,
              "pair-keyed cost table must cover the full (c_in,c_out) grid at slot " +
                  std::to_string(slot));
      for (double v : lt.grid_ms)
        require(v > 0.0, ErrorKind::Config, "cost table latencies must be positive");
      for (std::size_t i = 0; i < lt.cins.size(); ++i) {
        std::vector<double> row(lt.grid_ms.begin() + i * W, lt.grid_ms.begin() + (i + 1) * W);
        check_monotone(row, "c_out");
      }
      for (std::size_t j = 0; j < W; ++j) {
        std::vector<double> col;
        for (std::size_t i = 0; i < lt.cins.size(); ++i) col.push_back(lt.grid_ms[i * W + j]);
        check_monotone(col, "c_in");
      }
    }
  }
}

CostTable make_cost_table_for_tests(std::vector<CostTable::LayerTable> layers, double overhead) {
  CostTable t;
  t.layers = std::move(layers);
  t.overhead_ms_ = overhead;
  return t;
}

CostTable CostTable::load_csv(const std::string& path, const SupernetSpec& spec) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open cost table '" + path + "'");
  // (slot, c_in or -1, c_out) -> ms
  std::map<int, std::map<std::pair<int, int>, double>> rows;
  double overhead = 0.0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.find("latency") != std::string::npos) continue;  // header
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorKind::Config, "cost table row '" + line + "' is not numeric");
      }
    }
    require(vals.size() == 3 || vals.size() == 4, ErrorKind::Config,
            "cost table row '" + line + "' must have 3 or 4 columns");
    const int layer_index = static_cast<int>(vals[0]);
    if (layer_index == -1) {
      overhead = vals.back();
      continue;
    }
    require(layer_index >= 0 && layer_index < spec.num_layers() &&
                spec.prunable_slot[layer_index] >= 0,
            ErrorKind::Config,
            "cost table row names layer " + std::to_string(layer_index) +
                " which is not a prunable layer");
    const int slot = spec.prunable_slot[layer_index];
    if (vals.size() == 3) {
      rows[slot][{-1, static_cast<int>(vals[1])}] = vals[2];
    } else {
      rows[slot][{static_cast<int>(vals[1]), static_cast<int>(vals[2])}] = vals[3];
    }
  }

  CostTable t;
  t.overhead_ms_ = overhead;
  t.layers.resize(spec.num_prunable());
  for (auto& [slot, entries] : rows) {
    LayerTable& lt = t.layers[slot];
    const bool pair_keyed = entries.begin()->first.first != -1;
    lt.pair_keyed = pair_keyed;
    if (!pair_keyed) {
      for (auto& [key, ms] : entries) {
        require(key.first == -1, ErrorKind::Config,
                "cost table mixes 3- and 4-column rows for one layer");
        lt.counts.push_back(key.second);
        lt.ms.push_back(ms);
      }
    } else {
      std::set<int> cins, couts;
      for (auto& [key, ms] : entries) {
        require(key.first != -1, ErrorKind::Config,
                "cost table mixes 3- and 4-column rows for one layer");
        cins.insert(key.first);
        couts.insert(key.second);
      }
      lt.cins.assign(cins.begin(), cins.end());
      lt.couts.assign(couts.begin(), couts.end());
      lt.grid_ms.assign(lt.cins.size() * lt.couts.size(), -1.0);
      for (auto& [key, ms] : entries) {
        std::size_t i = std::lower_bound(lt.cins.begin(), lt.cins.end(), key.first) - lt.cins.begin();
        std::size_t j =
            std::lower_bound(lt.couts.begin(), lt.couts.end(), key.second) - lt.couts.begin();
        lt.grid_ms[i * lt.couts.size() + j] = ms;
      }
      for (double v : lt.grid_ms)
        require(v >= 0.0, ErrorKind::Config, "pair-keyed cost table has grid holes");
    }
  }
  t.validate(spec);
  return t;
}

}  // namespace swp
