#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace mmp::core {

// Named trainable tensors in registration order. Initialization draws from a
// stream derived from (seed, name hash), so values do not depend on
// registration order.
template <typename T>
class ParamStoreT {
public:
  enum class Init { Zeros, Ones, Normal };

  int add(const std::string& name, int rows, int cols, Init init, double stddev, uint64_t seed) {
    if (index_.count(name)) throw std::invalid_argument("param store: duplicate name " + name);
    TensorT<T> t = TensorT<T>::zeros({rows, cols});
    if (init == Init::Ones) {
      for (T& v : t.values) v = T(1);
    } else if (init == Init::Normal) {
      Rng rng(Rng::mix(seed, fnv1a64(name)));
      for (T& v : t.values) v = static_cast<T>(rng.next_normal() * stddev);
    }
    const int slot = static_cast<int>(tensors_.size());
    index_.emplace(name, slot);
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    frozen_.push_back(false);
    return slot;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  int slot(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("param store: unknown name " + name);
    return it->second;
  }

  TensorT<T>& at(int slot) { return tensors_.at(slot); }
  const TensorT<T>& at(int slot) const { return tensors_.at(slot); }
  TensorT<T>& at(const std::string& name) { return tensors_.at(slot(name)); }
  const TensorT<T>& at(const std::string& name) const { return tensors_.at(slot(name)); }

  const std::string& name(int slot) const { return names_.at(slot); }
  const std::vector<std::string>& names() const { return names_; }
  int count() const { return static_cast<int>(tensors_.size()); }

  int64_t element_count() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  void set_frozen(int slot, bool on) { frozen_.at(slot) = on; }
  bool frozen(int slot) const { return frozen_.at(slot); }

  // Freezes every parameter whose name starts with prefix.
  void freeze_prefix(const std::string& prefix, bool on) {
    for (int i = 0; i < count(); ++i)
      if (names_[i].rfind(prefix, 0) == 0) frozen_[i] = on;
  }

private:
  std::vector<std::string> names_;
  std::vector<TensorT<T>> tensors_;
  std::vector<bool> frozen_;
  std::unordered_map<std::string, int> index_;
};

// Per-parameter gradients, slot-aligned with a ParamStoreT. Unused parameters
// keep exactly-zero gradients.
template <typename T>
struct GradientRecordT {
  std::vector<TensorT<T>> grads;

  GradientRecordT() = default;

  explicit GradientRecordT(const ParamStoreT<T>& store) {
    grads.reserve(store.count());
    for (int i = 0; i < store.count(); ++i) grads.push_back(TensorT<T>::zeros(store.at(i).shape));
  }

  void zero() {
    for (auto& g : grads) std::fill(g.values.begin(), g.values.end(), T(0));
  }

  TensorT<T>& at(int slot) { return grads.at(slot); }
  const TensorT<T>& at(int slot) const { return grads.at(slot); }
};

using ParamStore = ParamStoreT<float>;
using GradientRecord = GradientRecordT<float>;

// Adds scale * (graph parameter gradients) into rec, in graph bind order.
template <typename T, typename G>
void accumulate_param_grads(const G& graph, T scale, GradientRecordT<T>& rec) {
  graph.visit_param_grads([&](int slot, int rows, int cols, const T* g) {
    TensorT<T>& dst = rec.at(slot);
    if (dst.rows() != rows || dst.cols() != cols)
      throw std::logic_error("accumulate_param_grads: shape mismatch for slot " + std::to_string(slot));
    const size_t n = static_cast<size_t>(rows) * cols;
    for (size_t i = 0; i < n; ++i) dst.values[i] += scale * g[i];
  });
}

}  // namespace mmp::core
