#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmp::core {

// Dense row-major tensor. Training uses TensorT<float>; gradient verification
// instantiates the same code with double.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> values;

  TensorT() = default;
  TensorT(std::vector<int> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (element_count(shape) != static_cast<int64_t>(values.size()))
      throw std::invalid_argument("tensor: shape/value count mismatch");
  }

  static int64_t element_count(const std::vector<int>& s) {
    int64_t n = 1;
    for (const int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static TensorT zeros(std::vector<int> s) {
    const int64_t n = element_count(s);
    return TensorT(std::move(s), std::vector<T>(static_cast<size_t>(n), T(0)));
  }

  static TensorT full(std::vector<int> s, T v) {
    const int64_t n = element_count(s);
    return TensorT(std::move(s), std::vector<T>(static_cast<size_t>(n), v));
  }

  int64_t size() const { return static_cast<int64_t>(values.size()); }

  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    if (shape.size() <= 1) return shape.empty() ? 1 : shape[0];
    int64_t c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return static_cast<int>(c);
  }

  T& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

  bool all_finite() const {
    for (const T v : values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Numerically stable softmax of a vector (max subtraction). Throws on
// non-finite input.
template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  T m = logits[0];
  for (const T v : logits) {
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument("softmax: non-finite input");
    if (v > m) m = v;
  }
  std::vector<T> out(logits.size());
  T sum = T(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
  return out;
}

// loss = -log softmax(logits)[target]
template <typename T>
T cross_entropy(const std::vector<T>& logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size()))
    throw std::out_of_range("cross_entropy: target out of range [0, " + std::to_string(logits.size()) + ")");
  T m = logits[0];
  for (const T v : logits) {
    if (!std::isfinite(static_cast<double>(v))) throw std::invalid_argument("cross_entropy: non-finite input");
    if (v > m) m = v;
  }
  T sum = T(0);
  for (const T v : logits) sum += std::exp(v - m);
  return std::log(sum) + m - logits[static_cast<size_t>(target)];
}

}  // namespace mmp::core
