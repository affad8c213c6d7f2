#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "swp/cost_model.hpp"
#include "swp/spec_io.hpp"

using namespace swp;

namespace {

SupernetSpec tiny_two_stage(int g = 4) {
  SupernetSpec spec;
  spec.in_channels = 1;
  spec.in_h = spec.in_w = 8;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Relu});
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Pool, 0, 2, 2, 2, 0});
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Relu});
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = ratio_linspace(0.25, 1.0, g);
  spec.validate();
  return spec;
}

WidthConfig random_config(const SupernetSpec& spec, Rng& rng) {
  WidthConfig cfg;
  for (int s = 0; s < spec.num_prunable(); ++s)
    cfg.channels.push_back(SupernetSpec::quantize(rng.pick(spec.ratio_grid), spec.full_width(s)));
  return cfg;
}

// Instrumented reference: counts one MAC per multiply inside a literal
// nested-loop forward over the standalone sliced network.
std::uint64_t counted_macs(const SupernetSpec& spec, const WidthConfig& cfg) {
  WidthPlan plan = chained_plan(spec, cfg);
  std::uint64_t count = 0;
  int c = spec.in_channels, h = spec.in_h, w = spec.in_w;
  for (int li = 0; li < spec.num_layers(); ++li) {
    const LayerSpec& ls = spec.layers[li];
    if (ls.kind == LayerKind::Conv) {
      const int oh = (h + 2 * ls.pad - ls.kh) / ls.stride + 1;
      const int ow = (w + 2 * ls.pad - ls.kw) / ls.stride + 1;
      for (int oc = 0; oc < plan.out_ch[li]; ++oc)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x)
            for (int ic = 0; ic < c; ++ic)
              for (int r = 0; r < ls.kh; ++r)
                for (int s = 0; s < ls.kw; ++s) ++count;
      c = plan.out_ch[li];
      h = oh;
      w = ow;
    } else if (ls.kind == LayerKind::Pool) {
      h = (h + 2 * ls.pad - ls.kh) / ls.stride + 1;
      w = (w + 2 * ls.pad - ls.kw) / ls.stride + 1;
    } else if (ls.kind == LayerKind::Dense) {
      for (int o = 0; o < ls.out_channels; ++o)
        for (int i = 0; i < c * h * w; ++i) ++count;
      c = ls.out_channels;
      h = w = 1;
    }
  }
  return count;
}

}  // namespace

TEST_CASE("unit conv costs one MAC") {
  SupernetSpec spec;
  spec.in_channels = 1;
  spec.in_h = spec.in_w = 1;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 1, 1, 1, 1, 0});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = {1.0};
  spec.stage_bounds = {0, 1, 2};
  spec.validate();
  WidthConfig cfg = full_config(spec);
  CHECK(stage_flops_chained(spec, cfg, 0) == 1);
  CHECK(flops_of_config(spec, cfg) == 1 + 2);  // conv + 1x1x1 -> 2 classes
}

TEST_CASE("conv MACs are bilinear in channel counts") {
  SupernetSpec spec;
  spec.in_channels = 8;
  spec.in_h = spec.in_w = 6;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = ratio_linspace(0.25, 1.0, 4);
  spec.stage_bounds = {0, 1, 2};
  spec.validate();
  // halve c_out only (c_in fixed by the input image here)
  WidthConfig full = full_config(spec);
  WidthConfig half = full;
  half.channels[0] = 4;
  CHECK(stage_flops_chained(spec, full, 0) == 2 * stage_flops_chained(spec, half, 0));

  // halving both via a second conv layer quarters its MAC count
  SupernetSpec spec2 = tiny_two_stage();
  WidthConfig f2 = full_config(spec2);
  WidthConfig h2 = f2;
  h2.channels[0] = 4;  // in of layer 2
  h2.channels[1] = 4;  // out of layer 2
  const LayerSpec& l2 = spec2.layers[2];
  auto macs_layer2 = [&](const WidthConfig& c) {
    WidthPlan p = chained_plan(spec2, c);
    return (std::uint64_t)p.out_ch[0] * p.out_ch[2] * l2.kh * l2.kw * spec2.layer_out_h[2] *
           spec2.layer_out_w[2];
  };
  CHECK(macs_layer2(f2) == 4 * macs_layer2(h2));
}

TEST_CASE("flops match the instrumented nested-loop count on random configs") {
  SupernetSpec spec = tiny_two_stage();
  Rng rng(31);
  for (int t = 0; t < 10; ++t) {
    WidthConfig cfg = random_config(spec, rng);
    CHECK(flops_of_config(spec, cfg) == counted_macs(spec, cfg));
  }
}

TEST_CASE("stage costs add up exactly") {
  SupernetSpec spec = tiny_two_stage();
  Rng rng(32);
  for (int t = 0; t < 20; ++t) {
    WidthConfig cfg = random_config(spec, rng);
    std::uint64_t total = 0;
    for (int s = 0; s < spec.num_stages(); ++s) total += stage_flops_chained(spec, cfg, s);
    CHECK(total == flops_of_config(spec, cfg));
  }
  // max search bounds sum to the full-net cost
  double bound_sum = 0.0;
  for (int s = 0; s < spec.num_stages(); ++s)
    bound_sum += stage_cost_bounds(spec, s, BudgetKind::Macs, nullptr).second;
  CHECK(bound_sum == double(flops_of_config(spec, full_config(spec))));
}

TEST_CASE("stage cost bounds bracket an exhaustive enumeration") {
  SupernetSpec spec = tiny_two_stage(4);
  const int stage = 1;  // layers 4..7, two prunable convs
  auto slots = spec.stage_prunable_slots(stage);
  REQUIRE(slots.size() == 2);
  auto [lo, hi] = stage_cost_bounds(spec, stage, BudgetKind::Macs, nullptr);
  double seen_lo = 1e300, seen_hi = 0.0;
  for (int a : spec.legal_widths(slots[0]))
    for (int b : spec.legal_widths(slots[1])) {
      double c = stage_gene_cost(spec, stage, {a, b}, BudgetKind::Macs, nullptr);
      seen_lo = std::min(seen_lo, c);
      seen_hi = std::max(seen_hi, c);
      CHECK(c >= lo);
      CHECK(c <= hi);
    }
  CHECK(seen_lo == lo);
  CHECK(seen_hi == hi);
}

TEST_CASE("single-layer stage bounds are the two extremes") {
  SupernetSpec spec;
  spec.in_channels = 2;
  spec.in_h = spec.in_w = 4;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = ratio_linspace(0.25, 1.0, 4);
  spec.stage_bounds = {0, 1, 2};
  spec.validate();
  auto [lo, hi] = stage_cost_bounds(spec, 0, BudgetKind::Macs, nullptr);
  CHECK(lo == stage_gene_cost(spec, 0, {2}, BudgetKind::Macs, nullptr));
  CHECK(hi == stage_gene_cost(spec, 0, {8}, BudgetKind::Macs, nullptr));
}

TEST_CASE("flops monotonicity under single-coordinate increments") {
  SupernetSpec spec = tiny_two_stage();
  Rng rng(33);
  for (int t = 0; t < 1000; ++t) {
    WidthConfig cfg = random_config(spec, rng);
    const int slot = (int)rng.uniform_int(spec.num_prunable());
    auto legal = spec.legal_widths(slot);
    auto it = std::find(legal.begin(), legal.end(), cfg.channels[slot]);
    if (it + 1 == legal.end()) continue;
    WidthConfig bumped = cfg;
    bumped.channels[slot] = *(it + 1);
    CHECK(flops_of_config(spec, bumped) >= flops_of_config(spec, cfg));
  }
}

TEST_CASE("latency lookup, interpolation and errors") {
  SupernetSpec spec;
  spec.in_channels = 1;
  spec.in_h = spec.in_w = 4;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Relu});
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = ratio_linspace(0.25, 1.0, 4);
  spec.validate();

  const std::string path = "cost_table_test.csv";
  {
    std::ofstream out(path);
    out << "layer_index,channels,latency_ms\n";
    out << "-1,0,0.5\n";
    for (int li : {0, 2})
      for (int c : {2, 4, 6, 8}) out << li << "," << c << "," << 0.1 * c * (li + 1) << "\n";
  }
  CostTable table = CostTable::load_csv(path, spec);
  CHECK(table.overhead_ms() == doctest::Approx(0.5));

  SUBCASE("exact entries sum plus overhead") {
    WidthConfig cfg{{4, 6}};
    CHECK(latency_of_config(spec, cfg, table) ==
          doctest::Approx(0.1 * 4 * 1 + 0.1 * 6 * 3 + 0.5).epsilon(1e-12));
  }

  SUBCASE("midway count gives the arithmetic mean of its brackets") {
    CHECK(table.lookup(0, 1, 3) == doctest::Approx((0.2 + 0.4) / 2).epsilon(1e-12));
    CHECK(table.lookup(0, 1, 5) == doctest::Approx((0.4 + 0.6) / 2).epsilon(1e-12));
  }

  SUBCASE("out-of-range count is an error, not a guess") {
    CHECK_THROWS_AS(table.lookup(0, 1, 1), Error);
    CHECK_THROWS_AS(table.lookup(0, 1, 9), Error);
  }

  SUBCASE("dense table matches brute-force sums exactly on random configs") {
    Rng rng(34);
    for (int t = 0; t < 50; ++t) {
      WidthConfig cfg;
      for (int s = 0; s < spec.num_prunable(); ++s)
        cfg.channels.push_back(SupernetSpec::quantize(rng.pick(spec.ratio_grid), 8));
      const double expect = 0.1 * cfg.channels[0] * 1 + 0.1 * cfg.channels[1] * 3 + 0.5;
      CHECK(latency_of_config(spec, cfg, table) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("latency monotonicity under single increments") {
    Rng rng(35);
    for (int t = 0; t < 200; ++t) {
      WidthConfig cfg;
      for (int s = 0; s < spec.num_prunable(); ++s)
        cfg.channels.push_back(SupernetSpec::quantize(rng.pick(spec.ratio_grid), 8));
      const int slot = (int)rng.uniform_int(2);
      if (cfg.channels[slot] == 8) continue;
      WidthConfig bumped = cfg;
      bumped.channels[slot] += 2;
      CHECK(latency_of_config(spec, bumped, table) >= latency_of_config(spec, cfg, table));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("pair-keyed latency tables use bilinear interpolation") {
  SupernetSpec spec;
  spec.in_channels = 4;
  spec.in_h = spec.in_w = 4;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = ratio_linspace(0.25, 1.0, 4);
  spec.validate();

  const std::string path = "cost_table_pair_test.csv";
  {
    std::ofstream out(path);
    out << "layer_index,c_in,c_out,latency_ms\n";
    for (int li : {0, 1})
      for (int ci : {2, 4, 8})
        for (int co : {2, 4, 8}) out << li << "," << ci << "," << co << "," << 0.01 * ci * co << "\n";
  }
  CostTable table = CostTable::load_csv(path, spec);
  // product surface: bilinear interpolation is exact at breakpoints and at
  // midpoints it averages the corner products
  CHECK(table.lookup(1, 4, 4) == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(table.lookup(1, 3, 4) == doctest::Approx((0.08 + 0.16) / 2).epsilon(1e-12));
  CHECK(table.lookup(1, 3, 3) == doctest::Approx((0.04 + 0.08 + 0.08 + 0.16) / 4).epsilon(1e-12));
  std::remove(path.c_str());
}
