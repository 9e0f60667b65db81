#pragma once

#include <cstdint>

namespace mmp::core {

// Linear warmup from 0 to base_lr over warmup_steps, cosine annealing from
// base_lr down to min_lr over anneal_steps, then constant min_lr.
struct LRScheduleConfig {
  double base_lr = 1e-4;
  double min_lr = 1e-7;
  int64_t warmup_steps = 0;
  int64_t anneal_steps = 1;
};

void validate(const LRScheduleConfig& cfg);

double lr_at_step(const LRScheduleConfig& cfg, int64_t step);

// Full-scale training recipe (batch-128 pretraining phase); desk-scale runs
// derive much smaller schedules from the same shape.
LRScheduleConfig reference_schedule();

}  // namespace mmp::core
