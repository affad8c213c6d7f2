#pragma once

#include <string>
#include <vector>

#include "swp/slimnet.hpp"

namespace swp {

// Checkpoint = JSON manifest (tensor names, shapes, dtype, byte offsets) plus
// one binary blob of little-endian IEEE-754 values in manifest order.
// Round-trips are bit-exact.

struct NamedTensorF {
  std::string name;
  Tensor<float> value;
};

void save_tensors(const std::string& manifest_path, const std::vector<NamedTensorF>& tensors);
std::vector<NamedTensorF> load_tensors(const std::string& manifest_path);

void save_checkpoint(const std::string& manifest_path, SupernetParams<float>& params);
// Strict: every manifest tensor must match a parameter by name and shape, and
// every parameter must be covered.
void load_checkpoint(const std::string& manifest_path, SupernetParams<float>& params);

}  // namespace swp
