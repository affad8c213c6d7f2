#include "swp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "swp/cost_model.hpp"
#include "swp/parallel.hpp"
#include "swp/spec_io.hpp"

namespace swp {

double expected_channel_samples(int i, int m, double n) {
  require(m >= 1, ErrorKind::Config, "expected_channel_samples: m must be positive");
  require(i >= 1 && i <= m, ErrorKind::Config,
          "channel index " + std::to_string(i) + " outside [1," + std::to_string(m) + "]");
  require(n >= 0.0, ErrorKind::Config, "expected_channel_samples: n must be nonnegative");
  return (1.0 - double(i - 1) / double(m)) * n;
}

double expected_config_samples(const std::vector<int>& counts, int m, double n) {
  require(!counts.empty(), ErrorKind::Config, "expected_config_samples: empty config");
  double prod = 1.0;
  for (int c : counts) prod *= expected_channel_samples(c, m, n);
  return prod;
}

ChannelInclusionMc mc_channel_inclusion(int m, const std::vector<double>& grid, long draws,
                                        std::uint64_t seed) {
  require(m >= 1 && draws >= 0 && !grid.empty(), ErrorKind::Config,
          "mc_channel_inclusion: bad arguments");
  ChannelInclusionMc out;
  out.included.assign(m, 0);
  out.draws = draws;
  Rng rng(seed);
  for (long t = 0; t < draws; ++t) {
    const double r = grid[(std::size_t)rng.uniform_int((std::int64_t)grid.size())];
    const int width = SupernetSpec::quantize(r, m);
    for (int i = 0; i < width; ++i) ++out.included[i];
  }
  return out;
}

UniformMaximalityReport uniform_maximality_check(int L, int m, double n) {
  require(L >= 1 && m >= 1, ErrorKind::Config, "uniform_maximality_check: bad arguments");
  // group all configs in {1..m}^L by their channel sum; E is a strictly
  // decreasing linear map of c, so equal channel sum == equal expectation sum
  std::map<int, std::vector<std::vector<int>>> groups;
  std::vector<int> cfg(L, 1);
  while (true) {
    int sum = 0;
    for (int c : cfg) sum += c;
    groups[sum].push_back(cfg);
    int pos = L - 1;
    while (pos >= 0 && cfg[pos] == m) cfg[pos--] = 1;
    if (pos < 0) break;
    ++cfg[pos];
  }

  UniformMaximalityReport report;
  for (auto& [sum, members] : groups) {
    if (sum % L != 0) continue;  // no uniform member in this group
    const int uniform_c = sum / L;
    ++report.groups_checked;
    const std::vector<int> uniform_cfg(L, uniform_c);
    const double uniform_val = expected_config_samples(uniform_cfg, m, n);
    for (const auto& member : members) {
      if (member == uniform_cfg) continue;
      if (expected_config_samples(member, m, n) >= uniform_val) {
        ++report.failures;
        break;
      }
    }
  }
  return report;
}

double supernet_accuracy_expectation(const SupernetSpec& spec, SupernetParams<float>& params,
                                     const Dataset& data, int n_samples, std::uint64_t seed) {
  require(n_samples >= 1, ErrorKind::Config, "accuracy expectation needs at least one sample");
  require(!data.val_idx.empty(), ErrorKind::Config,
          "accuracy expectation needs a validation split");
  Rng rng(derive_seed(seed, "acc-expectation"));
  double total = 0.0;
  for (int t = 0; t < n_samples; ++t) {
    WidthConfig cfg = sample_width_config(spec, SampleMode::Random, rng);
    total += evaluate_accuracy(spec, params, cfg, data, data.val_idx, 256);
  }
  return total / n_samples;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  require(va > 0.0 && vb > 0.0, ErrorKind::Config,
          "rank correlation undefined: a score list has zero variance");
  return cov / std::sqrt(va * vb);
}

double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  long long concordant = 0, discordant = 0, tied_a = 0, tied_b = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0) ++tied_a;
      if (db == 0.0) ++tied_b;
      if (da == 0.0 || db == 0.0) continue;
      if ((da > 0) == (db > 0))
        ++concordant;
      else
        ++discordant;
    }
  const double n0 = double(n) * double(n - 1) / 2.0;
  const double denom = std::sqrt((n0 - double(tied_a)) * (n0 - double(tied_b)));
  require(denom > 0.0, ErrorKind::Config, "kendall tau undefined: a score list has zero variance");
  return (double(concordant) - double(discordant)) / denom;
}

}  // namespace

Correlations ranking_correlation(const std::vector<RankingRecord>& records) {
  require(records.size() >= 3, ErrorKind::Config,
          "ranking correlation needs at least 3 records, got " + std::to_string(records.size()));
  std::vector<double> score, actual;
  for (const RankingRecord& r : records) {
    require(std::isfinite(r.proxy_loss), ErrorKind::Config, "proxy loss must be finite");
    require(r.actual_accuracy >= 0.0 && r.actual_accuracy <= 1.0, ErrorKind::Config,
            "actual accuracy must lie in [0,1]");
    score.push_back(-r.proxy_loss);  // lower loss is better, flip to "higher is better"
    actual.push_back(r.actual_accuracy);
  }
  Correlations out;
  out.spearman = pearson(average_ranks(score), average_ranks(actual));
  out.kendall = kendall_tau_b(score, actual);
  return out;
}

std::vector<WidthConfig> sample_stratified_candidates(const SupernetSpec& spec, int n,
                                                      std::uint64_t seed) {
  require(n >= 4, ErrorKind::Config, "stratified sampling needs at least 4 candidates");
  const double lo = double(flops_of_config(spec, tiny_config(spec)));
  const double hi = double(flops_of_config(spec, full_config(spec)));
  require(hi > lo, ErrorKind::Config, "search space has a single cost; nothing to stratify");
  const int bins = 4;
  std::vector<int> want(bins, n / bins);
  for (int b = 0; b < n % bins; ++b) ++want[b];

  Rng rng(derive_seed(seed, "stratified"));
  std::vector<WidthConfig> out;
  std::set<std::vector<int>> seen;
  auto bin_of = [&](double cost) {
    int b = int((cost - lo) / (hi - lo) * bins);
    return std::clamp(b, 0, bins - 1);
  };
  // biased sampler: a global width level plus per-layer jitter reaches the
  // cost extremes that plain uniform sampling almost never visits
  long attempts = 0;
  const long max_attempts = 200000;
  while (attempts < max_attempts) {
    ++attempts;
    const double level = rng.uniform();
    WidthConfig cfg;
    for (int slot = 0; slot < spec.num_prunable(); ++slot) {
      const double r = std::clamp(level + rng.uniform(-0.15, 0.15), 0.0, 1.0);
      const auto& grid = spec.ratio_grid;
      double best = grid[0];
      for (double g : grid)
        if (std::abs(g - r) < std::abs(best - r)) best = g;
      cfg.channels.push_back(SupernetSpec::quantize(best, spec.full_width(slot)));
    }
    const int b = bin_of(double(flops_of_config(spec, cfg)));
    if (want[b] <= 0) continue;
    if (!seen.insert(cfg.channels).second) continue;
    out.push_back(cfg);
    --want[b];
    int remaining = 0;
    for (int w : want) remaining += w;
    if (remaining == 0) break;
  }
  // tiny grids can make some bins unreachable; fill up with unseen random
  // configs so the candidate count contract still holds
  while ((int)out.size() < n) {
    WidthConfig cfg = sample_width_config(spec, SampleMode::Random, rng);
    if (!seen.insert(cfg.channels).second) continue;
    out.push_back(cfg);
  }
  return out;
}

RankingExperimentResult run_ranking_experiment(const SupernetSpec& spec, Dataset data,
                                               int n_candidates, const TrainConfig& train_cfg,
                                               const TrainConfig& retrain_cfg, std::uint64_t seed,
                                               bool with_baseline, int threads) {
  require(n_candidates >= 8, ErrorKind::Config,
          "ranking experiment needs at least 8 candidates, got " + std::to_string(n_candidates));
  require(!data.val_idx.empty(), ErrorKind::Config, "ranking experiment needs a validation split");

  auto proxy_cache = [&](const SupernetSpec& s, SupernetParams<float>& p) {
    // held-out proxy batch: up to 256 validation examples
    std::vector<int> idx(data.val_idx.begin(),
                         data.val_idx.begin() + std::min<std::size_t>(data.val_idx.size(), 256));
    Tensor<float> images;
    std::vector<int> labels;
    gather_batch(data, idx, images, labels);
    StageFeatureCache<float> cache;
    fullnet_forward(s, p, make_var(images, false), nullptr, &cache);
    return cache;
  };

  RankingExperimentResult result;

  // stage-wise supernet
  TrainConfig cfg = train_cfg;
  cfg.seed = derive_seed(seed, "ranking-train");
  auto params = init_params<float>(spec, derive_seed(seed, "ranking-init"));
  train_supernet(spec, params, data, cfg);
  StageFeatureCache<float> cache = proxy_cache(spec, params);

  std::vector<WidthConfig> candidates =
      sample_stratified_candidates(spec, n_candidates, derive_seed(seed, "candidates"));

  result.records.resize(candidates.size());
  parallel_for((int)candidates.size(), threads, [&](int i) {
    RankingRecord rec;
    rec.id = i;
    rec.config = candidates[i];
    rec.macs = double(flops_of_config(spec, candidates[i]));
    double proxy = 0.0;
    for (double l : stage_distill_losses(spec, params, candidates[i], cache)) proxy += l;
    rec.proxy_loss = proxy;
    TrainConfig rcfg = retrain_cfg;
    rcfg.seed = derive_seed(seed, "retrain", (std::uint64_t)i);
    rec.actual_accuracy = retrain_subnet(spec, candidates[i], data, rcfg).val_accuracy;
    result.records[i] = rec;
  });
  result.swp = ranking_correlation(result.records);

  if (with_baseline) {
    // net-wise supernet: identical layers, a single stage, same schedule; the
    // retrained accuracies are supernet-independent and are reused
    SupernetSpec net_wise = spec;
    net_wise.stage_bounds = {0, spec.num_layers()};
    net_wise.validate();
    TrainConfig bcfg = train_cfg;
    bcfg.seed = derive_seed(seed, "baseline-train");
    auto bparams = init_params<float>(net_wise, derive_seed(seed, "ranking-init"));
    train_supernet(net_wise, bparams, data, bcfg);
    StageFeatureCache<float> bcache = proxy_cache(net_wise, bparams);

    std::vector<RankingRecord> brecords = result.records;
    result.baseline_proxies.resize(candidates.size());
    parallel_for((int)candidates.size(), threads, [&](int i) {
      double proxy = 0.0;
      for (double l : stage_distill_losses(net_wise, bparams, candidates[i], bcache)) proxy += l;
      result.baseline_proxies[i] = proxy;
    });
    for (std::size_t i = 0; i < brecords.size(); ++i)
      brecords[i].proxy_loss = result.baseline_proxies[i];
    result.baseline = ranking_correlation(brecords);
    result.has_baseline = true;
  }
  return result;
}

std::vector<TrendPoint> candidate_count_trend(const SupernetSpec& base, const Dataset& data,
                                              const TrainConfig& cfg, const std::vector<int>& gs,
                                              const std::vector<std::uint64_t>& seeds,
                                              int n_samples) {
  require(!data.val_idx.empty(), ErrorKind::Config, "trend experiment needs a validation split");
  std::vector<TrendPoint> points;
  for (std::uint64_t seed : seeds) {
    for (int g : gs) {
      SupernetSpec spec = base;
      spec.ratio_grid = g == 1 ? std::vector<double>{1.0} : ratio_linspace(0.1, 1.0, g);
      spec.validate();
      auto params = init_params<float>(spec, derive_seed(seed, "trend-init"));
      TrainConfig tcfg = cfg;
      tcfg.seed = derive_seed(seed, "trend-train", (std::uint64_t)g);
      train_supernet(spec, params, data, tcfg);
      TrendPoint p;
      p.g = g;
      p.seed = seed;
      p.expectation =
          supernet_accuracy_expectation(spec, params, data, n_samples, derive_seed(seed, "trend-eval"));
      points.push_back(p);
    }
  }
  return points;
}

void save_records_csv(const std::vector<RankingRecord>& records, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write records '" + path + "'");
  out << std::setprecision(17);
  out << "candidate_id,macs,proxy_loss,actual_accuracy\n";
  for (const RankingRecord& r : records)
    out << r.id << "," << r.macs << "," << r.proxy_loss << "," << r.actual_accuracy << "\n";
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

std::vector<RankingRecord> load_records_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open records '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Config,
          "records file '" + path + "' is empty");
  std::vector<RankingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 4, ErrorKind::Config, "records row '" + line + "' must have 4 columns");
    RankingRecord r;
    try {
      r.id = std::stoi(cells[0]);
      r.macs = std::stod(cells[1]);
      r.proxy_loss = std::stod(cells[2]);
      r.actual_accuracy = std::stod(cells[3]);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "records row '" + line + "' is not numeric");
    }
    out.push_back(r);
  }
  return out;
}

void save_expectation_table_csv(const std::string& path, int m, double n,
                                const ChannelInclusionMc& mc) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write expectation table '" + path + "'");
  out << std::setprecision(17);
  out << "i,analytic,monte_carlo,std_error\n";
  for (int i = 1; i <= m; ++i) {
    const double analytic = expected_channel_samples(i, m, n);
    double mc_scaled = 0.0, se = 0.0;
    if (mc.draws > 0) {
      const double p_hat = double(mc.included[i - 1]) / double(mc.draws);
      mc_scaled = p_hat * n;
      se = std::sqrt(std::max(0.0, p_hat * (1 - p_hat) / double(mc.draws))) * n;
    }
    out << i << "," << analytic << "," << mc_scaled << "," << se << "\n";
  }
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

void save_trend_csv(const std::vector<TrendPoint>& points, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write trend table '" + path + "'");
  out << std::setprecision(17);
  out << "g,seed,accuracy_expectation\n";
  for (const TrendPoint& p : points) out << p.g << "," << p.seed << "," << p.expectation << "\n";
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace swp
