#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swp/dataset.hpp"
#include "swp/slimnet.hpp"
#include "swp/trainer.hpp"

namespace swp {

// Expected number of times channel i (1-based) of an m-channel layer is
// included when widths are drawn uniformly, over n draws: (1 - (i-1)/m) * n.
double expected_channel_samples(int i, int m, double n);

// Product over layers of the per-layer expectations; the quantity whose
// maximum sits at the uniform config.
double expected_config_samples(const std::vector<int>& counts, int m, double n);

struct ChannelInclusionMc {
  std::vector<long> included;  // per channel index, count of draws including it
  long draws = 0;
};
// Simulates uniform ratio-grid width draws for one m-channel layer.
ChannelInclusionMc mc_channel_inclusion(int m, const std::vector<double>& grid, long draws,
                                        std::uint64_t seed);

struct UniformMaximalityReport {
  int groups_checked = 0;       // equal-expectation-sum groups with a uniform member
  int failures = 0;             // groups where the uniform config was not the unique max
  bool holds() const { return groups_checked > 0 && failures == 0; }
};
// Exhaustive check over {1..m}^L that within every group of configs with an
// equal per-layer expectation sum, the uniform config uniquely maximizes the
// product.
UniformMaximalityReport uniform_maximality_check(int L, int m, double n);

// Mean validation accuracy over n random width configs with inherited
// weights.
double supernet_accuracy_expectation(const SupernetSpec& spec, SupernetParams<float>& params,
                                     const Dataset& data, int n_samples, std::uint64_t seed);

struct RankingRecord {
  int id = 0;
  WidthConfig config;
  double macs = 0.0;
  double proxy_loss = 0.0;     // total stage distillation loss, lower is better
  double actual_accuracy = 0.0;
};

struct Correlations {
  double spearman = 0.0;
  double kendall = 0.0;
};

// Rank correlations of (-proxy, actual) with average-rank tie handling, so
// positive values mean the proxy ranks candidates the way retraining does.
Correlations ranking_correlation(const std::vector<RankingRecord>& records);

// n candidates spread uniformly over 4 FLOPs bins between the all-min and
// all-max cost.
std::vector<WidthConfig> sample_stratified_candidates(const SupernetSpec& spec, int n,
                                                      std::uint64_t seed);

struct RankingExperimentResult {
  std::vector<RankingRecord> records;
  Correlations swp;
  bool has_baseline = false;
  std::vector<double> baseline_proxies;
  Correlations baseline;  // net-wise (single stage) supernet proxy
};

// Trains the supernet, scores budget-stratified candidates by total
// distillation loss on a held-out batch, retrains each from scratch for its
// actual accuracy, and correlates the two. Optionally repeats the proxy with
// a single-stage supernet for comparison.
RankingExperimentResult run_ranking_experiment(const SupernetSpec& spec, Dataset data,
                                               int n_candidates, const TrainConfig& train_cfg,
                                               const TrainConfig& retrain_cfg, std::uint64_t seed,
                                               bool with_baseline, int threads);

struct TrendPoint {
  int g = 0;
  std::uint64_t seed = 0;
  double expectation = 0.0;
};
// Accuracy expectation of supernets trained with identical schedules but
// increasingly fine ratio grids.
std::vector<TrendPoint> candidate_count_trend(const SupernetSpec& base, const Dataset& data,
                                              const TrainConfig& cfg, const std::vector<int>& gs,
                                              const std::vector<std::uint64_t>& seeds,
                                              int n_samples);

void save_records_csv(const std::vector<RankingRecord>& records, const std::string& path);
std::vector<RankingRecord> load_records_csv(const std::string& path);
void save_expectation_table_csv(const std::string& path, int m, double n,
                                const ChannelInclusionMc& mc);
void save_trend_csv(const std::vector<TrendPoint>& points, const std::string& path);

}  // namespace swp
