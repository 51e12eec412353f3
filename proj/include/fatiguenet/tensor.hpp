#pragma once
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "fatiguenet/error.hpp"

namespace fatiguenet::nn {

// Dense row-major array with an optional same-shape gradient buffer.
template <class T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> v;
  std::vector<T> g;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    v.assign(count(shape), T(0));
  }
  Tensor(std::initializer_list<size_t> s) : Tensor(std::vector<size_t>(s)) {}

  static size_t count(const std::vector<size_t>& s) {
    return std::accumulate(s.begin(), s.end(), size_t(1),
                           std::multiplies<size_t>());
  }

  size_t size() const { return v.size(); }
  size_t dim(size_t i) const { return shape.at(i); }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), T(0));
  }
  void zero_grad() { g.assign(v.size(), T(0)); }

  void reshape(std::vector<size_t> s) {
    if (count(s) != v.size())
      fail(ErrorKind::Shape, "reshape changes element count");
    shape = std::move(s);
  }

  // flat index helpers for the 4-d layouts used throughout
  size_t idx4(size_t n, size_t c, size_t h, size_t w) const {
    return ((n * shape[1] + c) * shape[2] + h) * shape[3] + w;
  }
  T& at4(size_t n, size_t c, size_t h, size_t w) {
    return v[idx4(n, c, h, w)];
  }
  T at4(size_t n, size_t c, size_t h, size_t w) const {
    return v[idx4(n, c, h, w)];
  }
  size_t idx2(size_t n, size_t f) const { return n * shape[1] + f; }
  T& at2(size_t n, size_t f) { return v[idx2(n, f)]; }
  T at2(size_t n, size_t f) const { return v[idx2(n, f)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_str(const std::vector<size_t>& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + ")";
}

}  // namespace fatiguenet::nn
