#pragma once

#include <functional>
#include <string>
#include <vector>

#include "model/checkpoint.hpp"
#include "model/policy.hpp"
#include "pipeline/config.hpp"
#include "tasks/tasks.hpp"

namespace mmp::pipeline {

struct EpisodeLog {
  uint64_t seed = 0;
  int steps = 0;
  bool success = false;
  bool operator==(const EpisodeLog&) const = default;
};

struct TaskReport {
  tasks::Level level = tasks::Level::L1;
  tasks::TaskType task = tasks::TaskType::PUT_INTO;
  int episodes = 0;
  int successes = 0;
  std::vector<EpisodeLog> logs;
  double rate() const { return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0; }
  bool operator==(const TaskReport&) const = default;
};

struct EvalReport {
  std::vector<TaskReport> tasks;
  int episodes_per_task = 0;
  uint64_t config_hash = 0;
  bool operator==(const EvalReport&) const = default;

  double rate(tasks::Level level, tasks::TaskType task) const;
  double level_average(tasks::Level level) const;
};

// An action source maps (instance, current scene, executed actions) to the
// next action; policies, the scripted expert, and random baselines all fit.
using ActionSource =
    std::function<sim::ActionPrim(const tasks::TaskInstance&, const sim::Scene&, const std::vector<sim::ActionPrim>&)>;

// Seeded episodes for each (level, task) pair of the split. Episodes run
// greedy until success or the step limit (twice the nominal expert length);
// EMPTY_PICK/BLOCKED_PLACE consume a step without terminating. Episodes are
// independent and may run on parallel workers; the report is assembled in
// episode order either way.
EvalReport evaluate_with_source(const TrainConfig& cfg, const ActionSource& source);

// Wraps greedy decoding of a policy. Throws if the checkpoint's training
// manifest disagrees with the evaluation world (board dims, asset counts).
EvalReport evaluate(const model::Policy& policy, const model::CheckpointMeta& meta, const TrainConfig& cfg);

// Per-episode policy wrapper used by evaluate; exposed for tests that need
// sampling decodes or custom episode loops.
struct EpisodeRunResult {
  bool success = false;
  int steps = 0;
};
EpisodeRunResult run_policy_episode(const model::Policy& policy, const tasks::TaskInstance& instance,
                                    const sim::SimConfig& sim_cfg, model::DecodeMode mode);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string format_report_table(const EvalReport& report);

}  // namespace mmp::pipeline
