#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "swp/dataset.hpp"

using namespace swp;

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 8), (unsigned char)v};
  out.write(reinterpret_cast<char*>(buf), 4);
}

void write_idx_pair(const std::string& img_path, const std::string& lab_path, std::uint32_t n,
                    std::uint32_t rows, std::uint32_t cols, const std::vector<unsigned char>& pixels,
                    const std::vector<unsigned char>& labels, std::uint32_t img_magic = 0x803,
                    std::uint32_t lab_magic = 0x801) {
  std::ofstream img(img_path, std::ios::binary);
  write_be32(img, img_magic);
  write_be32(img, n);
  write_be32(img, rows);
  write_be32(img, cols);
  img.write(reinterpret_cast<const char*>(pixels.data()), (std::streamsize)pixels.size());
  std::ofstream lab(lab_path, std::ios::binary);
  write_be32(lab, lab_magic);
  write_be32(lab, (std::uint32_t)labels.size());
  lab.write(reinterpret_cast<const char*>(labels.data()), (std::streamsize)labels.size());
}

}  // namespace

TEST_CASE("idx loader scales bytes and validates structure") {
  SUBCASE("2x2 image with bytes (0,255,0,255)") {
    write_idx_pair("t_img.idx", "t_lab.idx", 1, 2, 2, {0, 255, 0, 255}, {1});
    Dataset ds = load_idx("t_img.idx", "t_lab.idx");
    CHECK(ds.count() == 1);
    CHECK(ds.images.shape == std::vector<std::size_t>{1, 1, 2, 2});
    CHECK(ds.images.data == std::vector<float>{0.0f, 1.0f, 0.0f, 1.0f});
    CHECK(ds.labels[0] == 1);
  }

  SUBCASE("count mismatch is rejected") {
    write_idx_pair("t_img.idx", "t_lab.idx", 1, 2, 2, {0, 255, 0, 255}, {1, 0});
    CHECK_THROWS_AS(load_idx("t_img.idx", "t_lab.idx"), Error);
  }

  SUBCASE("bad magic is rejected") {
    write_idx_pair("t_img.idx", "t_lab.idx", 1, 2, 2, {0, 255, 0, 255}, {1}, 0x804, 0x801);
    CHECK_THROWS_AS(load_idx("t_img.idx", "t_lab.idx"), Error);
    write_idx_pair("t_img.idx", "t_lab.idx", 1, 2, 2, {0, 255, 0, 255}, {1}, 0x803, 0x805);
    CHECK_THROWS_AS(load_idx("t_img.idx", "t_lab.idx"), Error);
  }

  SUBCASE("truncated image payload is rejected") {
    write_idx_pair("t_img.idx", "t_lab.idx", 2, 2, 2, {0, 255, 0, 255, 9}, {1, 0});
    CHECK_THROWS_AS(load_idx("t_img.idx", "t_lab.idx"), Error);
  }

  SUBCASE("mnist-shaped file parses to n=10000, 1x28x28") {
    std::vector<unsigned char> pixels((std::size_t)10000 * 28 * 28, 128);
    std::vector<unsigned char> labels(10000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (unsigned char)(i % 10);
    write_idx_pair("t_img.idx", "t_lab.idx", 10000, 28, 28, pixels, labels);
    Dataset ds = load_idx("t_img.idx", "t_lab.idx");
    CHECK(ds.count() == 10000);
    CHECK(ds.images.shape == std::vector<std::size_t>{10000, 1, 28, 28});
    CHECK(ds.classes == 10);
    for (float v : ds.images.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      break;
    }
  }
  std::remove("t_img.idx");
  std::remove("t_lab.idx");
}

TEST_CASE("synthetic blobs") {
  SUBCASE("same seed gives bitwise-identical datasets") {
    Dataset a = synth_blobs(64, 12, 4, 99, 0.3);
    Dataset b = synth_blobs(64, 12, 4, 99, 0.3);
    CHECK(a.images.data == b.images.data);
    CHECK(a.labels == b.labels);
    Dataset c = synth_blobs(64, 12, 4, 100, 0.3);
    CHECK(a.images.data != c.images.data);
  }

  SUBCASE("pixels stay in [0,1] even at high noise") {
    Dataset ds = synth_blobs(32, 8, 2, 5, 2.0);
    for (float v : ds.images.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }

  SUBCASE("zero-noise set is classified perfectly by nearest template") {
    const int k = 4, size = 12;
    Dataset ds = synth_blobs(40, size, k, 7, 0.0);
    // rebuild the per-class means as templates
    std::vector<std::vector<double>> tmpl(k, std::vector<double>((std::size_t)size * size));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < ds.count(); ++i) {
      const float* px = ds.images.ptr() + (std::size_t)i * size * size;
      for (int j = 0; j < size * size; ++j) tmpl[ds.labels[i]][j] += px[j];
      ++counts[ds.labels[i]];
    }
    for (int c = 0; c < k; ++c)
      for (auto& v : tmpl[c]) v /= counts[c];
    int correct = 0;
    for (int i = 0; i < ds.count(); ++i) {
      const float* px = ds.images.ptr() + (std::size_t)i * size * size;
      int best = -1;
      double best_d = 1e300;
      for (int c = 0; c < k; ++c) {
        double d = 0;
        for (int j = 0; j < size * size; ++j) {
          double diff = px[j] - tmpl[c][j];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best == ds.labels[i]) ++correct;
    }
    CHECK(correct == ds.count());
  }

  SUBCASE("invalid arguments are rejected") {
    CHECK_THROWS_AS(synth_blobs(1, 12, 4, 0, 0.1), Error);
    CHECK_THROWS_AS(synth_blobs(16, 3, 4, 0, 0.1), Error);
  }
}

TEST_CASE("per-class split") {
  Dataset ds = synth_blobs(48, 8, 4, 3, 0.2);

  SUBCASE("zero count gives an empty validation split") {
    split_per_class(ds, 0, 11);
    CHECK(ds.val_idx.empty());
    CHECK((int)ds.train_idx.size() == ds.count());
  }

  SUBCASE("balanced split of 5 per class") {
    split_per_class(ds, 5, 11);
    CHECK(ds.val_idx.size() == 20);
    std::vector<int> per_class(4, 0);
    for (int i : ds.val_idx) ++per_class[ds.labels[i]];
    for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 5);

    // partition property
    std::set<int> all(ds.train_idx.begin(), ds.train_idx.end());
    for (int i : ds.val_idx) CHECK(all.insert(i).second);
    CHECK((int)all.size() == ds.count());

    // determinism
    Dataset ds2 = synth_blobs(48, 8, 4, 3, 0.2);
    split_per_class(ds2, 5, 11);
    CHECK(ds2.val_idx == ds.val_idx);
    CHECK(ds2.train_idx == ds.train_idx);
  }

  SUBCASE("class too small is rejected") {
    CHECK_THROWS_AS(split_per_class(ds, 13, 11), Error);
  }
}
