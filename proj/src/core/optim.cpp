#include "core/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mmp::core {

template <typename T>
double adamw_step(ParamStoreT<T>& params, const GradientRecordT<T>& grads, OptimizerStateT<T>& state, double lr,
                  const AdamWConfig& cfg) {
  if (static_cast<int>(grads.grads.size()) != params.count() ||
      static_cast<int>(state.moments.size()) != params.count())
    throw std::invalid_argument("adamw_step: store/grads/state size mismatch");

  double sq = 0.0;
  for (int s = 0; s < params.count(); ++s) {
    if (params.frozen(s)) continue;
    if (!grads.at(s).same_shape(params.at(s)))
      throw std::invalid_argument("adamw_step: gradient shape mismatch for " + params.name(s));
    for (const T g : grads.at(s).values) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw std::runtime_error("adamw_step: non-finite gradient");
  const double scale = (cfg.clip_threshold > 0.0 && norm > cfg.clip_threshold) ? cfg.clip_threshold / norm : 1.0;

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (int s = 0; s < params.count(); ++s) {
    if (params.frozen(s)) continue;
    auto& p = params.at(s).values;
    const auto& g = grads.at(s).values;
    auto& m = state.moments[s].m;
    auto& v = state.moments[s].v;
    if (!m.same_shape(params.at(s)) || !v.same_shape(params.at(s)))
      throw std::invalid_argument("adamw_step: moment shape mismatch for " + params.name(s));
    for (size_t i = 0; i < p.size(); ++i) {
      const double gc = static_cast<double>(g[i]) * scale;
      if (!std::isfinite(gc)) throw std::runtime_error("adamw_step: non-finite gradient in " + params.name(s));
      const double mi = cfg.beta1 * static_cast<double>(m.values[i]) + (1.0 - cfg.beta1) * gc;
      const double vi = cfg.beta2 * static_cast<double>(v.values[i]) + (1.0 - cfg.beta2) * gc * gc;
      m.values[i] = static_cast<T>(mi);
      v.values[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      double pi = static_cast<double>(p[i]);
      pi -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * pi);
      p[i] = static_cast<T>(pi);
    }
  }
  return norm;
}

template double adamw_step<float>(ParamStoreT<float>&, const GradientRecordT<float>&, OptimizerStateT<float>&, double,
                                  const AdamWConfig&);
template double adamw_step<double>(ParamStoreT<double>&, const GradientRecordT<double>&, OptimizerStateT<double>&,
                                   double, const AdamWConfig&);

}  // namespace mmp::core
