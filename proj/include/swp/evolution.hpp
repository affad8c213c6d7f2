#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swp/cost_model.hpp"
#include "swp/slimnet.hpp"

namespace swp {

struct EAConfig {
  int population = 128;
  int top_k = 32;
  double mutation_prob = 0.1;
  int iterations = 10;
  int mutation_count = 64;
  int crossover_count = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-stage budgets; the EA manager's unit of search.
struct BudgetGene {
  std::vector<double> stage_budgets;
  bool operator<(const BudgetGene& o) const { return stage_budgets < o.stage_budgets; }
  bool operator==(const BudgetGene& o) const { return stage_budgets == o.stage_budgets; }
};

// Element-wise mutation: each locus independently replaced with probability
// p_m by a uniform draw from its legal values. Infeasible offspring are
// rejected and resampled up to 100 attempts, then the parent is returned
// unchanged.
StageGene mutate_gene(const StageGene& parent, const std::vector<std::vector<int>>& legal,
                      double p_m, Rng& rng, const std::function<bool(const StageGene&)>& feasible);

// Uniform crossover with the same rejection-and-fallback rule (falls back to
// parent a).
StageGene crossover_gene(const StageGene& a, const StageGene& b, Rng& rng,
                         const std::function<bool(const StageGene&)>& feasible);

// Memoized stage fitness: distillation loss of a gene's adapted stage output
// against the cached fullnet features. Same gene, same cache => identical
// loss, so the map is safe for the lifetime of one cache.
class StageEvaluator {
public:
  StageEvaluator(const SupernetSpec& spec, SupernetParams<float>& params,
                 const StageFeatureCache<float>& cache, int stage)
      : spec_(spec), params_(params), cache_(cache), stage_(stage) {}

  double loss_of(const StageGene& gene);
  int stage() const { return stage_; }
  std::size_t evaluations() const { return memo_.size(); }

private:
  const SupernetSpec& spec_;
  SupernetParams<float>& params_;
  const StageFeatureCache<float>& cache_;
  int stage_;
  std::map<StageGene, double> memo_;
};

struct StageSearchResult {
  StageGene best;
  double loss = 0.0;
  double cost = 0.0;             // search-time cost of the best gene
  std::vector<double> curve;     // best loss after init and each generation
};

// Algorithm: evaluate -> keep top-k -> generate M mutations + H crossovers,
// repeated for `iterations` generations. Every gene that is ever evaluated
// satisfies the budget; elites are retained across generations.
StageSearchResult stage_ea(const SupernetSpec& spec, StageEvaluator& evaluator,
                           const Budget& stage_budget, const CostTable* table,
                           const EAConfig& cfg);

// Uniform random budget partition: minimum costs first, the remaining slack
// split by normalized uniform weights, clipped into each stage's bounds.
BudgetGene random_budget_gene(const std::vector<std::pair<double, double>>& bounds,
                              double total_budget, Rng& rng);

struct DeaResult {
  WidthConfig best_config;
  std::vector<StageGene> stage_genes;
  std::vector<double> stage_losses;
  std::vector<double> stage_budgets;
  std::vector<double> stage_costs;   // search-time costs of the winning genes
  double total_loss = 0.0;
  double config_cost = 0.0;          // assembled (chained) cost incl. overhead
  std::vector<double> curve;         // manager best total loss per generation
  std::size_t stage_evaluations = 0;
};

// The EA manager: evolves per-stage budget partitions; each gene's fitness is
// the sum of the stage EAs' best losses under its budgets. Stages are
// independent and may evaluate in parallel; results merge in stage order, so
// parallel and serial runs are bitwise identical.
DeaResult dea_search(const SupernetSpec& spec, SupernetParams<float>& params,
                     const Tensor<float>& eval_batch, const Budget& total_budget,
                     const CostTable* table, const EAConfig& stage_cfg,
                     const EAConfig& manager_cfg, int threads);

void save_search_report(const std::string& path, const SupernetSpec& spec, const DeaResult& result,
                        const Budget& budget, std::uint64_t seed);
void save_loss_curve_csv(const std::string& path, const std::vector<double>& curve);

}  // namespace swp
