#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swp/tensor.hpp"

namespace swp {

struct Dataset {
  Tensor<float> images;  // [n, c, h, w], values in [0,1]
  std::vector<int> labels;
  int classes = 0;
  std::vector<int> train_idx, val_idx;  // disjoint, exhaustive once split

  int count() const { return static_cast<int>(labels.size()); }
  int channels() const { return static_cast<int>(images.dim(1)); }
  int height() const { return static_cast<int>(images.dim(2)); }
  int width() const { return static_cast<int>(images.dim(3)); }
};

// IDX binary format (big-endian): magic 0x00000803 for images,
// 0x00000801 for labels. Pixels scale to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// k class-conditional Gaussian blob templates plus pixel noise; deterministic
// given the seed and linearly separable at low noise.
Dataset synth_blobs(int n, int size, int k, std::uint64_t seed, double noise);

// Exactly per_class_val validation examples per class, sampled with the seed.
void split_per_class(Dataset& ds, int per_class_val, std::uint64_t seed);

// Gathers a batch by dataset indices.
void gather_batch(const Dataset& ds, const std::vector<int>& indices, Tensor<float>& images,
                  std::vector<int>& labels);

}  // namespace swp
