#include "swp/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "swp/parallel.hpp"

namespace swp {

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::Config, "train: epochs must be nonnegative");
  require(batch_size >= 1, ErrorKind::Config, "train: batch_size must be positive");
  require(lr > 0.0, ErrorKind::Config, "train: lr must be positive");
  require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0, ErrorKind::Config,
          "train: lr_decay_factor must lie in (0,1]");
  require(lr_decay_every_epochs >= 0, ErrorKind::Config,
          "train: lr_decay_every_epochs must be nonnegative");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config, "train: momentum must be in [0,1)");
  require(weight_decay >= 0.0, ErrorKind::Config, "train: weight_decay must be nonnegative");
  require(random_subnets_per_iter >= 0, ErrorKind::Config,
          "train: random_subnets_per_iter must be nonnegative");
  require(threads >= 1, ErrorKind::Config, "train: threads must be positive");
}

WidthConfig sample_width_config(const SupernetSpec& spec, SampleMode mode, Rng& rng) {
  switch (mode) {
    case SampleMode::Full: return full_config(spec);
    case SampleMode::Tiny: return tiny_config(spec);
    case SampleMode::Random: break;
  }
  WidthConfig cfg;
  cfg.channels.reserve(spec.num_prunable());
  for (int slot = 0; slot < spec.num_prunable(); ++slot) {
    const double r = rng.pick(spec.ratio_grid);
    cfg.channels.push_back(SupernetSpec::quantize(r, spec.full_width(slot)));
  }
  return cfg;
}

std::vector<double> stage_distill_losses(const SupernetSpec& spec, SupernetParams<float>& params,
                                         const WidthConfig& cfg,
                                         const StageFeatureCache<float>& cache) {
  std::vector<double> losses(spec.num_stages());
  for (int s = 0; s < spec.num_stages(); ++s)
    losses[s] = stage_gene_loss(spec, params, s, stage_slice(spec, cfg, s), cache);
  return losses;
}

double stage_gene_loss(const SupernetSpec& spec, SupernetParams<float>& params, int stage,
                       const StageGene& gene, const StageFeatureCache<float>& cache) {
  auto input = make_var(cache.input[stage], /*requires_grad=*/false);
  auto out = stage_forward(spec, params, stage, gene, input, nullptr);
  return loss_value(mse_stage_loss<float>(nullptr, out.adapted, cache.target[stage]));
}

SandwichTrainer::SandwichTrainer(const SupernetSpec& spec, SupernetParams<float>& params,
                                 const TrainConfig& cfg, SupernetParams<float>* teacher)
    : spec_(spec),
      params_(params),
      teacher_(teacher),
      cfg_(cfg),
      width_rng_(derive_seed(cfg.seed, "widths")) {
  cfg_.validate();
  optim_.lr = cfg.lr;
  optim_.momentum = cfg.momentum;
  optim_.weight_decay = cfg.weight_decay;
  optim_.init(params_.all_params());
}

TrainLogEntry SandwichTrainer::iterate(const Tensor<float>& images, const std::vector<int>& labels,
                                       double lr) {
  require(!labels.empty(), ErrorKind::Config, "train_iteration: empty batch");
  const int stages = spec_.num_stages();
  TrainLogEntry entry;
  entry.iteration = iteration_;
  entry.lr = lr;

  params_.zero_grad();

  // fullnet pass: task loss, and the stage cache that defines this
  // iteration's distillation problem
  StageFeatureCache<float> cache;
  {
    Tape<float> tape;
    auto x = make_var(images, /*requires_grad=*/false);
    if (teacher_) {
      fullnet_forward(spec_, *teacher_, make_var(images, false), nullptr, &cache);
      auto logits = fullnet_forward(spec_, params_, x, &tape, nullptr);
      auto loss = cross_entropy(&tape, logits, labels);
      entry.task_loss = loss_value(loss);
      backward_scalar(tape, *loss);
    } else {
      auto logits = fullnet_forward(spec_, params_, x, &tape, &cache);
      auto loss = cross_entropy(&tape, logits, labels);
      entry.task_loss = loss_value(loss);
      backward_scalar(tape, *loss);
    }
  }
  require(std::isfinite(entry.task_loss), ErrorKind::Diverged,
          "task loss is not finite at iteration " + std::to_string(iteration_));

  // sampled subnet branches; width draws happen serially so the rng stream is
  // independent of the parallel schedule below
  std::vector<WidthConfig> branch_cfgs;
  for (int r = 0; r < cfg_.random_subnets_per_iter; ++r)
    branch_cfgs.push_back(sample_width_config(spec_, SampleMode::Random, width_rng_));
  branch_cfgs.push_back(sample_width_config(spec_, SampleMode::Tiny, width_rng_));

  for (std::size_t b = 0; b < branch_cfgs.size(); ++b) {
    std::vector<double> losses(stages);
    // stage parameter sets are disjoint, so stages of one branch may run
    // concurrently; each stage only touches its own gradients
    parallel_for(stages, cfg_.threads, [&](int s) {
      Tape<float> tape;
      auto x = make_var(cache.input[s], /*requires_grad=*/false);
      auto out = stage_forward(spec_, params_, s, stage_slice(spec_, branch_cfgs[b], s), x, &tape);
      auto loss = mse_stage_loss(&tape, out.adapted, cache.target[s]);
      losses[s] = loss_value(loss);
      backward_scalar(tape, *loss);
    });
    for (int s = 0; s < stages; ++s)
      require(std::isfinite(losses[s]), ErrorKind::Diverged,
              "distillation loss is not finite at iteration " + std::to_string(iteration_) +
                  ", stage " + std::to_string(s));
    if (b + 1 < branch_cfgs.size())
      entry.random_stage_losses.push_back(std::move(losses));
    else
      entry.tiny_stage_losses = std::move(losses);
  }

  optim_.lr = lr;
  auto plist = params_.all_params();
  sgd_momentum_step(plist, optim_);
  ++iteration_;
  return entry;
}

namespace {

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_decay_every_epochs <= 0) return cfg.lr;
  const int steps = epoch / cfg.lr_decay_every_epochs;
  return cfg.lr * std::pow(cfg.lr_decay_factor, steps);
}

template <typename IterFn>
TrainLog run_epochs(const SupernetSpec& spec, const Dataset& data, const TrainConfig& cfg,
                    const TrainCallbacks& callbacks, IterFn&& iter_fn) {
  require(!data.train_idx.empty() || cfg.epochs == 0, ErrorKind::Config,
          "training requires a nonempty train split");
  TrainLog log;
  log.stages = spec.num_stages();
  log.random_subnets = cfg.random_subnets_per_iter;
  int iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = data.train_idx;
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", (std::uint64_t)epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[(std::size_t)shuffle_rng.uniform_int((std::int64_t)i)]);
    const double lr = lr_for_epoch(cfg, epoch);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      Tensor<float> images;
      std::vector<int> labels;
      gather_batch(data, idx, images, labels);
      TrainLogEntry entry = iter_fn(images, labels, lr, iteration);
      if (callbacks.on_iteration) callbacks.on_iteration(entry);
      log.entries.push_back(std::move(entry));
      ++iteration;
    }
    const bool last = epoch + 1 == cfg.epochs;
    if (callbacks.on_checkpoint &&
        (last || (cfg.checkpoint_every_epochs > 0 && (epoch + 1) % cfg.checkpoint_every_epochs == 0)))
      callbacks.on_checkpoint(epoch);
  }
  return log;
}

}  // namespace

TrainLog train_supernet(const SupernetSpec& spec, SupernetParams<float>& params,
                        const Dataset& data, const TrainConfig& cfg,
                        SupernetParams<float>* teacher, const TrainCallbacks& callbacks) {
  cfg.validate();
  SandwichTrainer trainer(spec, params, cfg, teacher);
  return run_epochs(spec, data, cfg, callbacks,
                    [&](const Tensor<float>& images, const std::vector<int>& labels, double lr,
                        int) { return trainer.iterate(images, labels, lr); });
}

TrainLog train_plain(const SupernetSpec& spec, SupernetParams<float>& params, const Dataset& data,
                     const TrainConfig& cfg, const TrainCallbacks& callbacks) {
  cfg.validate();
  OptimState<float> optim;
  optim.lr = cfg.lr;
  optim.momentum = cfg.momentum;
  optim.weight_decay = cfg.weight_decay;
  optim.init(params.all_params());
  const WidthConfig full = full_config(spec);
  TrainLog log = run_epochs(
      spec, data, cfg, callbacks,
      [&](const Tensor<float>& images, const std::vector<int>& labels, double lr, int iteration) {
        params.zero_grad();
        Tape<float> tape;
        auto x = make_var(images, false);
        auto logits = subnet_forward(spec, params, full, x, &tape);
        auto loss = cross_entropy(&tape, logits, labels);
        TrainLogEntry entry;
        entry.iteration = iteration;
        entry.lr = lr;
        entry.task_loss = loss_value(loss);
        require(std::isfinite(entry.task_loss), ErrorKind::Diverged,
                "task loss is not finite at iteration " + std::to_string(iteration));
        backward_scalar(tape, *loss);
        optim.lr = lr;
        auto plist = params.all_params();
        sgd_momentum_step(plist, optim);
        return entry;
      });
  log.stages = 0;
  log.random_subnets = 0;
  return log;
}

double evaluate_accuracy(const SupernetSpec& spec, SupernetParams<float>& params,
                         const WidthConfig& cfg, const Dataset& data,
                         const std::vector<int>& indices, int batch_size) {
  require(!indices.empty(), ErrorKind::Config, "evaluate_accuracy: empty index set");
  int correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    std::vector<int> idx(indices.begin() + start, indices.begin() + end);
    Tensor<float> images;
    std::vector<int> labels;
    gather_batch(data, idx, images, labels);
    auto logits = subnet_forward(spec, params, cfg, make_var(images, false), nullptr);
    const int k = (int)logits->value.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const float* row = logits->value.ptr() + i * k;
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

RetrainResult retrain_subnet(const SupernetSpec& spec, const WidthConfig& cfg, const Dataset& data,
                             const TrainConfig& cfg_train) {
  validate_config(spec, cfg);
  RetrainResult result;
  result.subnet_spec = spec.narrowed(cfg.channels);
  result.params = init_params<float>(result.subnet_spec, derive_seed(cfg_train.seed, "retrain-init"));
  train_plain(result.subnet_spec, result.params, data, cfg_train);
  const std::vector<int>& eval_idx = data.val_idx.empty() ? data.train_idx : data.val_idx;
  result.val_accuracy = evaluate_accuracy(result.subnet_spec, result.params,
                                          full_config(result.subnet_spec), data, eval_idx,
                                          std::max(cfg_train.batch_size, 64));
  return result;
}

void save_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write train log '" + path + "'");
  out << std::setprecision(17);
  out << "iteration,lr,task_loss";
  for (int r = 0; r < log.random_subnets; ++r)
    for (int s = 0; s < log.stages; ++s) out << ",random" << r << "_stage" << s;
  for (int s = 0; s < log.stages; ++s) out << ",tiny_stage" << s;
  out << "\n";
  for (const TrainLogEntry& e : log.entries) {
    out << e.iteration << "," << e.lr << "," << e.task_loss;
    for (int r = 0; r < log.random_subnets; ++r)
      for (int s = 0; s < log.stages; ++s)
        out << "," << (r < (int)e.random_stage_losses.size() ? e.random_stage_losses[r][s] : 0.0);
    for (int s = 0; s < log.stages; ++s)
      out << "," << (s < (int)e.tiny_stage_losses.size() ? e.tiny_stage_losses[s] : 0.0);
    out << "\n";
  }
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace swp
