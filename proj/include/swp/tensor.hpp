#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "swp/error.hpp"
#include "swp/rng.hpp"

namespace swp {

// Dense row-major N-d array. Activations are [batch, channel, h, w]; conv
// weights are [out_channel, in_channel, kh, kw]; dense weights [out, in].
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }
  Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel_of(shape), ErrorKind::Shape,
            "tensor data length does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double mean, double std) {
  for (T& v : t.data) v = static_cast<T>(mean + std * rng.normal());
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename Dst, typename Src>
Tensor<Dst> cast_tensor(const Tensor<Src>& t) {
  Tensor<Dst> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<Dst>(t.data[i]);
  return out;
}

}  // namespace swp
