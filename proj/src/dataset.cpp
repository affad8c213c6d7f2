#include "swp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "swp/error.hpp"
#include "swp/rng.hpp"

namespace swp {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  require(in.good(), ErrorKind::Config, "truncated IDX file while reading " + what);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  require(imgs.good(), ErrorKind::Io, "cannot open IDX images '" + images_path + "'");
  std::ifstream labs(labels_path, std::ios::binary);
  require(labs.good(), ErrorKind::Io, "cannot open IDX labels '" + labels_path + "'");

  const std::uint32_t img_magic = read_be32(imgs, "image magic");
  require(img_magic == 0x00000803u, ErrorKind::Config,
          "bad IDX image magic in '" + images_path + "'");
  const std::uint32_t n = read_be32(imgs, "image count");
  const std::uint32_t rows = read_be32(imgs, "rows");
  const std::uint32_t cols = read_be32(imgs, "cols");

  const std::uint32_t lab_magic = read_be32(labs, "label magic");
  require(lab_magic == 0x00000801u, ErrorKind::Config,
          "bad IDX label magic in '" + labels_path + "'");
  const std::uint32_t n_labels = read_be32(labs, "label count");
  require(n == n_labels, ErrorKind::Config,
          "IDX image/label count mismatch: " + std::to_string(n) + " vs " +
              std::to_string(n_labels));

  Dataset ds;
  ds.images = Tensor<float>({n, 1, rows, cols});
  std::vector<unsigned char> buf((std::size_t)rows * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), (std::streamsize)buf.size());
    require(imgs.gcount() == (std::streamsize)buf.size(), ErrorKind::Config,
            "truncated IDX image data in '" + images_path + "'");
    float* dst = ds.images.ptr() + (std::size_t)i * rows * cols;
    for (std::size_t j = 0; j < buf.size(); ++j) dst[j] = buf[j] / 255.0f;
  }
  ds.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    char c;
    labs.read(&c, 1);
    require(labs.gcount() == 1, ErrorKind::Config,
            "truncated IDX label data in '" + labels_path + "'");
    ds.labels[i] = static_cast<unsigned char>(c);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.classes = max_label + 1;
  ds.train_idx.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) ds.train_idx[i] = (int)i;
  return ds;
}

Dataset synth_blobs(int n, int size, int k, std::uint64_t seed, double noise) {
  require(n >= k, ErrorKind::Config, "synth_blobs: need at least one example per class");
  require(size >= 4, ErrorKind::Config, "synth_blobs: image size must be at least 4");
  require(k >= 2, ErrorKind::Config, "synth_blobs: need at least 2 classes");
  require(noise >= 0.0, ErrorKind::Config, "synth_blobs: noise must be nonnegative");

  // class templates: one Gaussian blob per class, centers on a circle
  std::vector<std::vector<float>> templates(k, std::vector<float>((std::size_t)size * size));
  const double c0 = (size - 1) / 2.0;
  const double radius = size / 4.0;
  const double sigma = size / 6.0;
  for (int cls = 0; cls < k; ++cls) {
    const double ang = 2.0 * M_PI * cls / k;
    const double cx = c0 + radius * std::cos(ang);
    const double cy = c0 + radius * std::sin(ang);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        templates[cls][(std::size_t)y * size + x] =
            static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
      }
  }

  Dataset ds;
  ds.classes = k;
  ds.images = Tensor<float>({(std::size_t)n, 1, (std::size_t)size, (std::size_t)size});
  ds.labels.resize(n);
  Rng rng(derive_seed(seed, "synth_blobs"));
  for (int i = 0; i < n; ++i) {
    const int cls = i % k;  // balanced
    ds.labels[i] = cls;
    float* dst = ds.images.ptr() + (std::size_t)i * size * size;
    for (int j = 0; j < size * size; ++j) {
      double v = templates[cls][j] + noise * rng.normal();
      dst[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  ds.train_idx.resize(n);
  for (int i = 0; i < n; ++i) ds.train_idx[i] = i;
  return ds;
}

void split_per_class(Dataset& ds, int per_class_val, std::uint64_t seed) {
  require(per_class_val >= 0, ErrorKind::Config, "split: negative validation count");
  std::vector<std::vector<int>> by_class(ds.classes);
  for (int i = 0; i < ds.count(); ++i) by_class[ds.labels[i]].push_back(i);
  for (int c = 0; c < ds.classes; ++c)
    require((int)by_class[c].size() >= per_class_val, ErrorKind::Config,
            "class " + std::to_string(c) + " has only " + std::to_string(by_class[c].size()) +
                " examples, needs at least " + std::to_string(per_class_val));

  ds.train_idx.clear();
  ds.val_idx.clear();
  Rng rng(derive_seed(seed, "split_per_class"));
  for (int c = 0; c < ds.classes; ++c) {
    std::vector<int>& pool = by_class[c];
    // Fisher-Yates with our own rng
    for (std::size_t i = pool.size(); i > 1; --i) {
      std::size_t j = (std::size_t)rng.uniform_int((std::int64_t)i);
      std::swap(pool[i - 1], pool[j]);
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if ((int)i < per_class_val)
        ds.val_idx.push_back(pool[i]);
      else
        ds.train_idx.push_back(pool[i]);
    }
  }
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());
}

void gather_batch(const Dataset& ds, const std::vector<int>& indices, Tensor<float>& images,
                  std::vector<int>& labels) {
  const std::size_t px = (std::size_t)ds.channels() * ds.height() * ds.width();
  images = Tensor<float>({indices.size(), (std::size_t)ds.channels(), (std::size_t)ds.height(),
                          (std::size_t)ds.width()});
  labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    std::copy_n(ds.images.ptr() + (std::size_t)idx * px, px, images.ptr() + i * px);
    labels[i] = ds.labels[idx];
  }
}

}  // namespace swp
