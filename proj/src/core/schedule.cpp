#include "core/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace mmp::core {

void validate(const LRScheduleConfig& cfg) {
  if (!(cfg.min_lr > 0.0) || !(cfg.min_lr <= cfg.base_lr))
    throw std::invalid_argument("lr schedule: need 0 < min_lr <= base_lr");
  if (cfg.warmup_steps < 0) throw std::invalid_argument("lr schedule: warmup_steps must be >= 0");
  if (cfg.anneal_steps <= 0) throw std::invalid_argument("lr schedule: anneal_steps must be > 0");
}

double lr_at_step(const LRScheduleConfig& cfg, int64_t step) {
  validate(cfg);
  if (step < 0) throw std::invalid_argument("lr schedule: step must be >= 0");
  if (step < cfg.warmup_steps)
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const int64_t s = step - cfg.warmup_steps;
  if (s >= cfg.anneal_steps) return cfg.min_lr;
  const double frac = static_cast<double>(s) / static_cast<double>(cfg.anneal_steps);
  return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(3.141592653589793238462643 * frac));
}

LRScheduleConfig reference_schedule() {
  LRScheduleConfig cfg;
  cfg.base_lr = 1e-4;
  cfg.min_lr = 1e-7;
  cfg.warmup_steps = 7000;
  cfg.anneal_steps = 96160;
  return cfg;
}

}  // namespace mmp::core
