#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "swp/slimnet.hpp"
#include "swp/spec_io.hpp"

using namespace swp;

namespace {

SupernetSpec six_layer_net(int grid = 4) {
  SupernetSpec spec;
  spec.in_channels = 1;
  spec.in_h = spec.in_w = 12;
  spec.classes = 4;
  for (int s = 0; s < 3; ++s) {
    spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
    spec.layers.push_back({LayerKind::Relu});
    spec.layers.push_back({LayerKind::Conv, 8, 3, 3, 1, 1});
    spec.layers.push_back({LayerKind::Relu});
    if (s < 2) spec.layers.push_back({LayerKind::Pool, 0, 2, 2, 2, 0});
  }
  spec.layers.push_back({LayerKind::Dense, 4});
  spec.ratio_grid = ratio_linspace(0.25, 1.0, grid);
  spec.validate();
  return spec;
}

WidthConfig random_config(const SupernetSpec& spec, Rng& rng) {
  WidthConfig cfg;
  for (int s = 0; s < spec.num_prunable(); ++s) {
    const double r = rng.pick(spec.ratio_grid);
    cfg.channels.push_back(SupernetSpec::quantize(r, spec.full_width(s)));
  }
  return cfg;
}

}  // namespace

TEST_CASE("slice_copy prefix semantics") {
  Rng rng(5);
  Tensor<float> w({4, 4, 3, 3});
  fill_uniform(w, rng, -1.0, 1.0);

  Tensor<float> full = slice_copy(w, 4, 4);
  CHECK(full.shape == w.shape);
  CHECK(full.data == w.data);

  Tensor<float> s = slice_copy(w, 3, 2);
  CHECK(s.shape == std::vector<std::size_t>{3, 2, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 9; ++k)
        CHECK(s.data[(o * 2 + i) * 9 + k] == w.data[(o * 4 + i) * 9 + k]);

  CHECK_THROWS_AS(slice_copy(w, 5, 2), Error);
  CHECK_THROWS_AS(slice_copy(w, 2, 5), Error);
}

TEST_CASE("prefix slices are nested") {
  Rng rng(6);
  Tensor<float> w({6, 6, 3, 3});
  fill_uniform(w, rng, -1.0, 1.0);
  Tensor<float> wide = slice_copy(w, 5, 4);
  Tensor<float> narrow = slice_copy(w, 3, 2);
  Tensor<float> nested = slice_copy(wide, 3, 2);
  CHECK(narrow.shape == nested.shape);
  CHECK(narrow.data == nested.data);
}

TEST_CASE("subnet forward equals a standalone copied network") {
  SupernetSpec spec = six_layer_net();
  auto params = init_params<float>(spec, 42);
  Rng rng(1234);
  Tensor<float> xv({2, 1, 12, 12});
  fill_uniform(xv, rng, 0.0, 1.0);

  SUBCASE("full config is bitwise the fullnet forward") {
    auto a = subnet_forward(spec, params, full_config(spec), make_var(xv, false), nullptr);
    auto b = fullnet_forward<float>(spec, params, make_var(xv, false), nullptr, nullptr);
    CHECK(a->value.data == b->value.data);
  }

  SUBCASE("100 random configs match standalone copies within 1e-6") {
    for (int trial = 0; trial < 100; ++trial) {
      WidthConfig cfg = random_config(spec, rng);
      auto shared_out = subnet_forward(spec, params, cfg, make_var(xv, false), nullptr);

      SupernetSpec sub = spec.narrowed(cfg.channels);
      auto sub_params = copy_sliced_params(spec, params, cfg);
      auto solo_out = subnet_forward(sub, sub_params, full_config(sub), make_var(xv, false), nullptr);

      REQUIRE(shared_out->value.shape == solo_out->value.shape);
      for (std::size_t i = 0; i < shared_out->value.numel(); ++i)
        CHECK(std::abs(shared_out->value.data[i] - solo_out->value.data[i]) <= 1e-6);
    }
  }

  SUBCASE("tiny config matches its standalone copy") {
    WidthConfig cfg = tiny_config(spec);
    auto shared_out = subnet_forward(spec, params, cfg, make_var(xv, false), nullptr);
    SupernetSpec sub = spec.narrowed(cfg.channels);
    auto sub_params = copy_sliced_params(spec, params, cfg);
    auto solo_out = subnet_forward(sub, sub_params, full_config(sub), make_var(xv, false), nullptr);
    CHECK(shared_out->value.data == solo_out->value.data);
  }

  SUBCASE("invalid config is rejected") {
    WidthConfig cfg = full_config(spec);
    cfg.channels[0] = 7;  // not on the 0.25..1.0 grid for m=8
    CHECK_THROWS_AS(subnet_forward(spec, params, cfg, make_var(xv, false), nullptr), Error);
  }
}

TEST_CASE("stage forward: bypass, shape contract, standalone oracle") {
  SupernetSpec spec = six_layer_net();
  auto params = init_params<float>(spec, 43);
  Rng rng(99);
  Tensor<float> xv({2, 1, 12, 12});
  fill_uniform(xv, rng, 0.0, 1.0);

  StageFeatureCache<float> cache;
  fullnet_forward<float>(spec, params, make_var(xv, false), nullptr, &cache);
  REQUIRE(cache.input.size() == 3);

  SUBCASE("full gene bypasses the adapter and reproduces the fullnet stage") {
    for (int s = 0; s < spec.num_stages(); ++s) {
      StageGene gene = stage_slice(spec, full_config(spec), s);
      auto out = stage_forward(spec, params, s, gene, make_var(cache.input[s], false), nullptr);
      CHECK(out.bypassed);
      CHECK(out.adapted->value.data == cache.target[s].data);
      auto loss = mse_stage_loss<float>(nullptr, out.adapted, cache.target[s]);
      CHECK(loss_value(loss) == 0.0);
    }
  }

  SUBCASE("tiny gene output is adapted to the fullnet channel count") {
    StageGene gene = stage_slice(spec, tiny_config(spec), 0);
    auto out = stage_forward(spec, params, 0, gene, make_var(cache.input[0], false), nullptr);
    CHECK(!out.bypassed);
    CHECK((int)out.raw->value.dim(1) == 2);  // 0.25 of 8
    CHECK((int)out.adapted->value.dim(1) == spec.full_channels_at_stage_output(0));
  }

  SUBCASE("random gene raw output matches a standalone stage") {
    for (int trial = 0; trial < 20; ++trial) {
      WidthConfig cfg = random_config(spec, rng);
      const int s = 1;
      StageGene gene = stage_slice(spec, cfg, s);
      auto out = stage_forward(spec, params, s, gene, make_var(cache.input[s], false), nullptr);

      // standalone stage: narrowed spec, but fed the full-width stage input,
      // so only in-stage widths shrink
      WidthConfig stage_cfg = full_config(spec);
      auto slots = spec.stage_prunable_slots(s);
      for (std::size_t i = 0; i < slots.size(); ++i) stage_cfg.channels[slots[i]] = gene[i];
      // widths outside the stage stay full so the copied in-channel count of
      // the first in-stage conv stays at full width
      SupernetSpec sub = spec.narrowed(stage_cfg.channels);
      auto sub_params = copy_sliced_params(spec, params, stage_cfg);
      WidthPlan plan = stage_plan(sub, s, stage_slice(sub, full_config(sub), s));
      auto solo = run_layers(sub, sub_params, plan, make_var(cache.input[s], false), nullptr);
      REQUIRE(out.raw->value.shape == solo->value.shape);
      for (std::size_t i = 0; i < solo->value.numel(); ++i)
        CHECK(std::abs(out.raw->value.data[i] - solo->value.data[i]) <= 1e-6);
    }
  }

  SUBCASE("wrong input channel count is rejected") {
    Tensor<float> bad({2, 3, 12, 12});
    StageGene gene = stage_slice(spec, full_config(spec), 1);
    CHECK_THROWS_AS(stage_forward(spec, params, 1, gene, make_var(bad, false), nullptr), Error);
  }
}

TEST_CASE("candidate counting is exact") {
  SUBCASE("one stage, g=32, L=10") {
    SupernetSpec spec;
    spec.in_channels = 1;
    spec.in_h = spec.in_w = 4;
    spec.classes = 2;
    for (int i = 0; i < 10; ++i) {
      spec.layers.push_back({LayerKind::Conv, 32, 1, 1, 1, 0});
    }
    spec.layers.push_back({LayerKind::Dense, 2});
    spec.ratio_grid = ratio_linspace(1.0 / 32, 1.0, 32);
    spec.stage_bounds = {0, 11};
    spec.validate();
    auto counts = count_candidates(spec);
    REQUIRE(counts.per_stage.size() == 1);
    CHECK(counts.total.to_string() == "1125899906842624");  // 32^10
  }

  SUBCASE("g=31, L=50 exceeds 30^50") {
    CHECK(BigUint::pow(31, 50).to_string() ==
          "369900306960760058257055122792882737298592289523754278027523770486241304001");
    CHECK(BigUint::pow(31, 50) > BigUint::pow(30, 50));
  }

  SUBCASE("stage counts multiply to the total") {
    SupernetSpec spec;
    spec.in_channels = 1;
    spec.in_h = spec.in_w = 4;
    spec.classes = 2;
    for (int i = 0; i < 10; ++i) spec.layers.push_back({LayerKind::Conv, 31, 1, 1, 1, 0});
    spec.layers.push_back({LayerKind::Dense, 2});
    spec.ratio_grid = ratio_linspace(0.1, 1.0, 31);
    spec.stage_bounds = {0, 3, 11};  // depths 3 and 7
    spec.validate();
    auto counts = count_candidates(spec);
    REQUIRE(counts.per_stage.size() == 2);
    CHECK(counts.per_stage[0].to_string() == "29791");           // 31^3
    CHECK(counts.per_stage[1].to_string() == "27512614111");     // 31^7
    CHECK(counts.total.to_string() == "819628286980801");        // 31^10
    CHECK(counts.per_stage[0] * counts.per_stage[1] == counts.total);
  }
}

TEST_CASE("ratio grid quantization") {
  SUBCASE("default grid: 31 entries, endpoints exact") {
    auto grid = ratio_linspace(0.1, 1.0, 31);
    CHECK(grid.size() == 31);
    CHECK(grid.front() == 0.1);
    CHECK(grid.back() == 1.0);
  }

  SUBCASE("quantization never yields zero channels and 1.0 maps to m") {
    CHECK(SupernetSpec::quantize(0.1, 40) == 4);
    CHECK(SupernetSpec::quantize(0.1, 3) == 1);
    CHECK(SupernetSpec::quantize(0.01, 100) == 1);
    for (int m : {1, 3, 8, 31, 64}) CHECK(SupernetSpec::quantize(1.0, m) == m);
  }

  SUBCASE("distinct counts per layer never exceed the grid size") {
    auto grid = ratio_linspace(0.1, 1.0, 31);
    for (int m : {2, 8, 16, 40, 128}) {
      std::set<int> uniq;
      for (double r : grid) uniq.insert(SupernetSpec::quantize(r, m));
      CHECK(uniq.size() <= 31);
      CHECK(*uniq.rbegin() == m);
      CHECK(*uniq.begin() >= 1);
    }
  }
}

TEST_CASE("width config csv round trip and validation") {
  SupernetSpec spec = six_layer_net();
  Rng rng(7);
  WidthConfig cfg = random_config(spec, rng);
  const std::string path = "width_test.csv";
  save_width_csv(spec, cfg, path);
  WidthConfig back = load_width_csv(spec, path);
  CHECK(back == cfg);

  // malformed: truncated file
  {
    std::ofstream out(path);
    out << "layer_index,channels,max_channels\n0,notanumber,8\n";
  }
  CHECK_THROWS_AS(load_width_csv(spec, path), Error);
  std::remove(path.c_str());
}

TEST_CASE("spec json round trip") {
  SupernetSpec spec = six_layer_net();
  auto j = spec_to_json(spec);
  SupernetSpec back = spec_from_json(j);
  CHECK(back.layers.size() == spec.layers.size());
  CHECK(back.stage_bounds == spec.stage_bounds);
  CHECK(back.ratio_grid == spec.ratio_grid);
  CHECK(back.prunable_layers == spec.prunable_layers);
}

TEST_CASE("default stage bounds split at downsampling layers") {
  SupernetSpec spec;
  spec.in_channels = 1;
  spec.in_h = spec.in_w = 8;
  spec.classes = 2;
  spec.layers.push_back({LayerKind::Conv, 4, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Pool, 0, 2, 2, 2, 0});
  spec.layers.push_back({LayerKind::Conv, 4, 3, 3, 1, 1});
  spec.layers.push_back({LayerKind::Pool, 0, 2, 2, 2, 0});
  spec.layers.push_back({LayerKind::Dense, 2});
  spec.ratio_grid = {0.5, 1.0};
  spec.validate();
  CHECK(spec.stage_bounds == std::vector<int>{0, 2, 4, 5});
}
