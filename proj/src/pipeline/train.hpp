#pragma once

#include <functional>
#include <string>
#include <vector>

#include "model/checkpoint.hpp"
#include "model/policy.hpp"
#include "pipeline/config.hpp"
#include "tasks/tasks.hpp"

namespace mmp::pipeline {

// Expert demonstrations for the training mix at L1, in canonical
// (task, seed) order so shard bytes are write-deterministic.
tasks::DatasetShard generate_dataset(const TrainConfig& cfg);

struct CurvePoint {
  std::string phase;
  int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

struct PhaseResult {
  int64_t steps = 0;
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
  std::vector<CurvePoint> curve;
};

using ProgressFn = std::function<void(const CurvePoint&)>;

model::Policy make_policy(const TrainConfig& cfg, const model::Vocabulary& vocab);

// Copies parameters whose names start with prefix (the two-step pretraining
// carry-over uses this with the object-encoder prefix).
void transfer_param_prefix(const core::ParamStore& src, core::ParamStore& dst, const std::string& prefix);

// Phase 1: minimize the motion-following objective (or its masked variant)
// over samples built from every trajectory in the shard. pretrain_epochs = 0
// returns the policy unchanged. Two-step mode pretrains, keeps only the
// object encoder, reinitializes the rest, and pretrains again with a fresh
// schedule.
PhaseResult run_pretrain(model::Policy& policy, const TrainConfig& cfg, const tasks::DatasetShard& data,
                         const ProgressFn& progress = nullptr);

// Phase 2: minimize the imitation objective over the multi-task mix, with
// the prompt-to-text replacement applied per sample at modified_ft_prob.
PhaseResult run_finetune(model::Policy& policy, const TrainConfig& cfg, const tasks::DatasetShard& data,
                         const ProgressFn& progress = nullptr);

}  // namespace mmp::pipeline
