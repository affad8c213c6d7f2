#pragma once

#include <functional>
#include <vector>

#include "swp/dataset.hpp"
#include "swp/optimizer.hpp"
#include "swp/slimnet.hpp"

namespace swp {

struct TrainConfig {
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  double lr_decay_factor = 1.0;
  int lr_decay_every_epochs = 0;  // 0 disables decay
  double momentum = 0.0;
  double weight_decay = 0.0;
  int random_subnets_per_iter = 1;
  std::uint64_t seed = 0;
  int checkpoint_every_epochs = 0;  // 0: final checkpoint only
  int threads = 1;

  void validate() const;
};

enum class SampleMode { Full, Random, Tiny };

// full: every prunable layer at m; tiny: every layer at the smallest grid
// ratio; random: each layer's ratio drawn independently and uniformly from
// the grid.
WidthConfig sample_width_config(const SupernetSpec& spec, SampleMode mode, Rng& rng);

struct TrainLogEntry {
  int iteration = 0;
  double lr = 0.0;
  double task_loss = 0.0;
  std::vector<std::vector<double>> random_stage_losses;  // [subnet][stage]
  std::vector<double> tiny_stage_losses;                 // [stage]
};

struct TrainLog {
  int stages = 0;
  int random_subnets = 1;
  std::vector<TrainLogEntry> entries;
};

void save_train_log_csv(const TrainLog& log, const std::string& path);

// Forward-only per-stage distillation losses of a config against a cache.
// This is the proxy score used by the search and the ranking experiment.
std::vector<double> stage_distill_losses(const SupernetSpec& spec, SupernetParams<float>& params,
                                         const WidthConfig& cfg,
                                         const StageFeatureCache<float>& cache);
double stage_gene_loss(const SupernetSpec& spec, SupernetParams<float>& params, int stage,
                       const StageGene& gene, const StageFeatureCache<float>& cache);

// One sandwich iteration: fullnet on the task loss, each sampled subnet and
// the tinynet on stage-wise distillation against the cached fullnet features,
// one accumulated optimizer step. Accumulation order is fixed: fullnet, then
// random subnets in sample order (stages in stage order), then the tinynet.
class SandwichTrainer {
public:
  SandwichTrainer(const SupernetSpec& spec, SupernetParams<float>& params, const TrainConfig& cfg,
                  SupernetParams<float>* teacher = nullptr);

  TrainLogEntry iterate(const Tensor<float>& images, const std::vector<int>& labels, double lr);

  int iteration() const { return iteration_; }

private:
  const SupernetSpec& spec_;
  SupernetParams<float>& params_;
  SupernetParams<float>* teacher_;
  TrainConfig cfg_;
  OptimState<float> optim_;
  Rng width_rng_;
  int iteration_ = 0;
};

struct TrainCallbacks {
  std::function<void(const TrainLogEntry&)> on_iteration;
  std::function<void(int epoch)> on_checkpoint;  // also fired once after the last epoch
};

TrainLog train_supernet(const SupernetSpec& spec, SupernetParams<float>& params,
                        const Dataset& data, const TrainConfig& cfg,
                        SupernetParams<float>* teacher = nullptr,
                        const TrainCallbacks& callbacks = {});

// Plain task-loss training of a fixed-width network (no sandwich branches).
TrainLog train_plain(const SupernetSpec& spec, SupernetParams<float>& params, const Dataset& data,
                     const TrainConfig& cfg, const TrainCallbacks& callbacks = {});

double evaluate_accuracy(const SupernetSpec& spec, SupernetParams<float>& params,
                         const WidthConfig& cfg, const Dataset& data,
                         const std::vector<int>& indices, int batch_size);

struct RetrainResult {
  SupernetSpec subnet_spec;
  SupernetParams<float> params;
  double val_accuracy = 0.0;
};

// Builds a standalone network with the config's widths, fresh init, trains it
// from scratch on the task loss alone, and scores top-1 on the validation
// split.
RetrainResult retrain_subnet(const SupernetSpec& spec, const WidthConfig& cfg, const Dataset& data,
                             const TrainConfig& cfg_train);

}  // namespace swp
