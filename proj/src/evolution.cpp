#include "swp/evolution.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <functional>
#include <iomanip>

#include "json.hpp"
#include "swp/parallel.hpp"
#include "swp/trainer.hpp"

namespace swp {

void EAConfig::validate() const {
  require(population >= 1, ErrorKind::Config, "ea: population must be positive");
  require(top_k >= 1 && top_k <= population, ErrorKind::Config,
          "ea: top_k must lie in [1, population]");
  require(mutation_prob > 0.0 && mutation_prob < 1.0, ErrorKind::Config,
          "ea: mutation probability must lie in (0,1)");
  require(iterations >= 0, ErrorKind::Config, "ea: iterations must be nonnegative");
  require(mutation_count >= 0 && crossover_count >= 0, ErrorKind::Config,
          "ea: mutation/crossover counts must be nonnegative");
  require(mutation_count + crossover_count == population, ErrorKind::Config,
          "ea: mutation_count + crossover_count must equal population");
}

StageGene mutate_gene(const StageGene& parent, const std::vector<std::vector<int>>& legal,
                      double p_m, Rng& rng, const std::function<bool(const StageGene&)>& feasible) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    StageGene child = parent;
    for (std::size_t e = 0; e < child.size(); ++e)
      if (rng.bernoulli(p_m)) child[e] = rng.pick(legal[e]);
    if (feasible(child)) return child;
  }
  return parent;
}

StageGene crossover_gene(const StageGene& a, const StageGene& b, Rng& rng,
                         const std::function<bool(const StageGene&)>& feasible) {
  require(a.size() == b.size(), ErrorKind::Shape, "crossover: parents differ in length");
  for (int attempt = 0; attempt < 100; ++attempt) {
    StageGene child(a.size());
    for (std::size_t e = 0; e < a.size(); ++e) child[e] = rng.bernoulli(0.5) ? a[e] : b[e];
    if (feasible(child)) return child;
  }
  return a;
}

double StageEvaluator::loss_of(const StageGene& gene) {
  auto it = memo_.find(gene);
  if (it != memo_.end()) return it->second;
  const double loss = stage_gene_loss(spec_, params_, stage_, gene, cache_);
  memo_.emplace(gene, loss);
  return loss;
}

namespace {

// Deterministic elite pool: ascending (loss, gene), unique genes.
struct ElitePool {
  std::map<StageGene, double> seen;
  std::vector<std::pair<double, StageGene>> ranked;

  void add(const StageGene& gene, double loss) {
    if (seen.count(gene)) return;
    seen.emplace(gene, loss);
    ranked.emplace_back(loss, gene);
  }
  void sort_and_trim(int keep) {
    std::sort(ranked.begin(), ranked.end());
    if ((int)ranked.size() > keep) ranked.resize(keep);
  }
};

// Feasible gene when plain rejection keeps missing: start from the all-min
// gene (feasible by the budget precondition) and raise loci in random order
// as far as the budget allows.
StageGene feasible_walk(const std::vector<std::vector<int>>& legal, Rng& rng,
                        const std::function<double(const StageGene&)>& cost,
                        double budget_value) {
  StageGene gene;
  for (const auto& l : legal) gene.push_back(l.front());
  std::vector<int> order(gene.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[(std::size_t)rng.uniform_int((std::int64_t)i)]);
  for (int e : order) {
    // choose uniformly among the values of locus e that keep the gene feasible
    std::vector<int> ok;
    for (int v : legal[e]) {
      StageGene probe = gene;
      probe[e] = v;
      if (cost(probe) <= budget_value) ok.push_back(v);
    }
    if (!ok.empty()) gene[e] = rng.pick(ok);
  }
  return gene;
}

}  // namespace

StageSearchResult stage_ea(const SupernetSpec& spec, StageEvaluator& evaluator,
                           const Budget& stage_budget, const CostTable* table,
                           const EAConfig& cfg) {
  cfg.validate();
  const int stage = evaluator.stage();
  const auto bounds = stage_cost_bounds(spec, stage, stage_budget.kind, table);
  require(stage_budget.value >= bounds.first, ErrorKind::Infeasible,
          "stage " + std::to_string(stage) + " budget " + std::to_string(stage_budget.value) +
              " is below the all-min cost " + std::to_string(bounds.first));

  std::vector<std::vector<int>> legal;
  for (int slot : spec.stage_prunable_slots(stage)) legal.push_back(spec.legal_widths(slot));

  auto cost_of = [&](const StageGene& g) {
    return stage_gene_cost(spec, stage, g, stage_budget.kind, table);
  };
  auto feasible = [&](const StageGene& g) { return cost_of(g) <= stage_budget.value; };

  Rng rng(cfg.seed);
  ElitePool pool;

  auto evaluate = [&](const StageGene& g) { pool.add(g, evaluator.loss_of(g)); };

  // initial population
  for (int i = 0; i < cfg.population; ++i) {
    StageGene g;
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      g.clear();
      for (const auto& l : legal) g.push_back(rng.pick(l));
      found = feasible(g);
    }
    if (!found) g = feasible_walk(legal, rng, cost_of, stage_budget.value);
    evaluate(g);
  }
  pool.sort_and_trim(cfg.top_k);

  StageSearchResult result;
  result.curve.push_back(pool.ranked.front().first);

  for (int t = 0; t < cfg.iterations; ++t) {
    const std::vector<std::pair<double, StageGene>> elites = pool.ranked;
    auto parent = [&]() -> const StageGene& {
      return elites[(std::size_t)rng.uniform_int((std::int64_t)elites.size())].second;
    };
    for (int m = 0; m < cfg.mutation_count; ++m)
      evaluate(mutate_gene(parent(), legal, cfg.mutation_prob, rng, feasible));
    for (int h = 0; h < cfg.crossover_count; ++h)
      evaluate(crossover_gene(parent(), parent(), rng, feasible));
    pool.sort_and_trim(cfg.top_k);
    result.curve.push_back(pool.ranked.front().first);
  }

  result.best = pool.ranked.front().second;
  result.loss = pool.ranked.front().first;
  result.cost = cost_of(result.best);
  return result;
}

BudgetGene random_budget_gene(const std::vector<std::pair<double, double>>& bounds,
                              double total_budget, Rng& rng) {
  const int n = (int)bounds.size();
  double min_sum = 0.0;
  for (const auto& b : bounds) min_sum += b.first;
  require(total_budget >= min_sum, ErrorKind::Infeasible,
          "total budget " + std::to_string(total_budget) + " is below the sum of stage minima " +
              std::to_string(min_sum));
  std::vector<double> weights(n);
  double wsum = 0.0;
  for (double& w : weights) {
    w = rng.uniform();
    wsum += w;
  }
  const double slack = total_budget - min_sum;
  BudgetGene gene;
  gene.stage_budgets.resize(n);
  for (int i = 0; i < n; ++i) {
    const double share = wsum > 0.0 ? slack * weights[i] / wsum : 0.0;
    gene.stage_budgets[i] = std::min(bounds[i].second, bounds[i].first + share);
  }
  return gene;
}

DeaResult dea_search(const SupernetSpec& spec, SupernetParams<float>& params,
                     const Tensor<float>& eval_batch, const Budget& total_budget,
                     const CostTable* table, const EAConfig& stage_cfg,
                     const EAConfig& manager_cfg, int threads) {
  stage_cfg.validate();
  manager_cfg.validate();
  const int N = spec.num_stages();

  // one fullnet pass defines the distillation targets for the whole search
  StageFeatureCache<float> cache;
  fullnet_forward(spec, params, make_var(eval_batch, false), nullptr, &cache);

  std::vector<std::pair<double, double>> bounds;
  for (int s = 0; s < N; ++s)
    bounds.push_back(stage_cost_bounds(spec, s, total_budget.kind, table));

  // the fixed per-net latency overhead is not partitionable; stages split
  // what remains
  double partitionable = total_budget.value;
  if (total_budget.kind == BudgetKind::LatencyMs) {
    require(table != nullptr, ErrorKind::Config, "latency budget requires a cost table");
    partitionable -= table->overhead_ms();
  }
  double min_sum = 0.0;
  for (const auto& b : bounds) min_sum += b.first;
  require(partitionable >= min_sum, ErrorKind::Infeasible,
          "budget " + std::to_string(total_budget.value) + " " +
              budget_kind_name(total_budget.kind) + " is below the feasible floor " +
              std::to_string(min_sum + (total_budget.value - partitionable)));

  std::vector<StageEvaluator> evaluators;
  evaluators.reserve(N);
  for (int s = 0; s < N; ++s) evaluators.emplace_back(spec, params, cache, s);

  // stage searches are pure functions of (stage, budget) for a fixed master
  // seed, so their results are memoized across manager generations
  std::vector<std::map<std::uint64_t, StageSearchResult>> stage_memo(N);
  auto stage_result = [&](int s, double budget_value) -> const StageSearchResult& {
    const std::uint64_t key = std::bit_cast<std::uint64_t>(budget_value);
    auto it = stage_memo[s].find(key);
    if (it != stage_memo[s].end()) return it->second;
    EAConfig cfg = stage_cfg;
    cfg.seed = derive_seed(stage_cfg.seed, "stage-ea", (std::uint64_t)s, key);
    Budget b{total_budget.kind, budget_value};
    StageSearchResult res = stage_ea(spec, evaluators[s], b, table, cfg);
    return stage_memo[s].emplace(key, std::move(res)).first->second;
  };

  auto fitness = [&](const BudgetGene& g) -> double {
    // memo warm-up may run stages concurrently; each stage owns its own memo
    parallel_for(N, threads, [&](int s) { (void)stage_result(s, g.stage_budgets[s]); });
    double total = 0.0;
    for (int s = 0; s < N; ++s) total += stage_result(s, g.stage_budgets[s]).loss;
    return total;
  };

  auto feasible = [&](const BudgetGene& g) {
    double sum = 0.0;
    for (int s = 0; s < N; ++s) {
      if (g.stage_budgets[s] < bounds[s].first || g.stage_budgets[s] > bounds[s].second)
        return false;
      sum += g.stage_budgets[s];
    }
    return sum <= partitionable;
  };

  Rng rng(derive_seed(manager_cfg.seed, "ea-manager"));
  std::map<BudgetGene, double> seen;
  std::vector<std::pair<double, BudgetGene>> ranked;
  auto evaluate = [&](const BudgetGene& g) {
    if (seen.count(g)) return;
    const double loss = fitness(g);
    seen.emplace(g, loss);
    ranked.emplace_back(loss, g);
  };
  auto trim = [&]() {
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first < b.first : a.second < b.second;
              });
    if ((int)ranked.size() > manager_cfg.top_k) ranked.resize(manager_cfg.top_k);
  };

  for (int i = 0; i < manager_cfg.population; ++i)
    evaluate(random_budget_gene(bounds, partitionable, rng));
  trim();

  DeaResult result;
  result.curve.push_back(ranked.front().first);

  auto mutate_budget = [&](const BudgetGene& parent) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      BudgetGene child = parent;
      for (int s = 0; s < N; ++s)
        if (rng.bernoulli(manager_cfg.mutation_prob))
          child.stage_budgets[s] = rng.uniform(bounds[s].first, bounds[s].second);
      if (feasible(child)) return child;
    }
    return parent;
  };
  auto crossover_budget = [&](const BudgetGene& a, const BudgetGene& b) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      BudgetGene child;
      child.stage_budgets.resize(N);
      for (int s = 0; s < N; ++s)
        child.stage_budgets[s] = rng.bernoulli(0.5) ? a.stage_budgets[s] : b.stage_budgets[s];
      if (feasible(child)) return child;
    }
    return a;
  };

  for (int t = 0; t < manager_cfg.iterations; ++t) {
    const auto elites = ranked;
    auto parent = [&]() -> const BudgetGene& {
      return elites[(std::size_t)rng.uniform_int((std::int64_t)elites.size())].second;
    };
    for (int m = 0; m < manager_cfg.mutation_count; ++m) evaluate(mutate_budget(parent()));
    for (int h = 0; h < manager_cfg.crossover_count; ++h)
      evaluate(crossover_budget(parent(), parent()));
    trim();
    result.curve.push_back(ranked.front().first);
  }

  const BudgetGene& best = ranked.front().second;
  result.total_loss = ranked.front().first;
  result.stage_budgets = best.stage_budgets;
  std::vector<StageGene> genes;
  for (int s = 0; s < N; ++s) {
    const StageSearchResult& r = stage_result(s, best.stage_budgets[s]);
    genes.push_back(r.best);
    result.stage_losses.push_back(r.loss);
    result.stage_costs.push_back(r.cost);
  }
  result.stage_genes = genes;
  result.best_config = assemble_config(spec, genes);
  result.config_cost = config_cost(spec, result.best_config, total_budget.kind, table);
  require(result.config_cost <= total_budget.value, ErrorKind::Shape,
          "assembled config exceeds the budget; cost bookkeeping is broken");
  for (const auto& m : stage_memo) result.stage_evaluations += m.size();
  return result;
}

void save_search_report(const std::string& path, const SupernetSpec& spec, const DeaResult& result,
                        const Budget& budget, std::uint64_t seed) {
  nlohmann::json j;
  j["budget"] = {{"kind", budget_kind_name(budget.kind)}, {"value", budget.value}};
  j["seed"] = seed;
  j["total_loss"] = result.total_loss;
  j["config_cost"] = result.config_cost;
  j["best_width_config"] = result.best_config.channels;
  j["macs"] = flops_of_config(spec, result.best_config);
  nlohmann::json stages = nlohmann::json::array();
  for (std::size_t s = 0; s < result.stage_genes.size(); ++s) {
    stages.push_back({{"stage", s},
                      {"budget", result.stage_budgets[s]},
                      {"loss", result.stage_losses[s]},
                      {"cost", result.stage_costs[s]},
                      {"gene", result.stage_genes[s]}});
  }
  j["stages"] = stages;
  j["curve"] = result.curve;
  j["stage_evaluations"] = result.stage_evaluations;
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write search report '" + path + "'");
  out << j.dump(2) << "\n";
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

void save_loss_curve_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write loss curve '" + path + "'");
  out << std::setprecision(17);
  out << "generation,best_total_loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << "," << curve[i] << "\n";
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace swp
