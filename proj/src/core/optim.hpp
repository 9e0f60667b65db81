#pragma once

#include <cstdint>

#include "core/params.hpp"

namespace mmp::core {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;   // decoupled
  double clip_threshold = 1.0; // global gradient norm; <= 0 disables clipping
};

// First/second moment estimates per parameter plus the step counter.
template <typename T>
struct OptimizerStateT {
  struct Moments {
    TensorT<T> m;
    TensorT<T> v;
  };
  std::vector<Moments> moments;
  int64_t step = 0;

  OptimizerStateT() = default;
  explicit OptimizerStateT(const ParamStoreT<T>& store) {
    moments.reserve(store.count());
    for (int i = 0; i < store.count(); ++i)
      moments.push_back({TensorT<T>::zeros(store.at(i).shape), TensorT<T>::zeros(store.at(i).shape)});
  }
};

using OptimizerState = OptimizerStateT<float>;

// One AdamW update with decoupled weight decay. The gradient is clipped by
// global norm across all non-frozen parameters before the moment updates.
// Returns the pre-clip global gradient norm. Throws if the gradient is not
// finite after clipping.
template <typename T>
double adamw_step(ParamStoreT<T>& params, const GradientRecordT<T>& grads, OptimizerStateT<T>& state, double lr,
                  const AdamWConfig& cfg);

extern template double adamw_step<float>(ParamStoreT<float>&, const GradientRecordT<float>&, OptimizerStateT<float>&,
                                         double, const AdamWConfig&);
extern template double adamw_step<double>(ParamStoreT<double>&, const GradientRecordT<double>&,
                                          OptimizerStateT<double>&, double, const AdamWConfig&);

}  // namespace mmp::core
