#pragma once

#include <map>
#include <string>
#include <vector>

#include "model/policy.hpp"
#include "tasks/tasks.hpp"

namespace mmp::pipeline {

// Line-oriented "key = value" files with include support ("include <path>",
// resolved relative to the including file). Later assignments win.
class KeyValueFile {
public:
  static KeyValueFile load(const std::string& path);
  static KeyValueFile from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;

private:
  std::map<std::string, std::string> values_;
  void parse_text(const std::string& text, const std::string& dir, int depth);
};

enum class PretrainMode { NONE, MOTION_FOLLOWING, MASKED };
const char* to_string(PretrainMode m);
PretrainMode pretrain_mode_from_string(const std::string& s);

// Full experiment configuration with desk-scale defaults. Every key is
// printable via print_config so experiment records diff cleanly.
struct TrainConfig {
  sim::SimConfig sim;
  std::string split_name = "default";  // default | incontext
  int demos_per_task = 500;
  uint64_t data_seed = 1;
  bool randomize_restore_order = false;

  model::PolicyConfig policy;
  uint64_t init_seed = 1;

  int batch_size = 64;
  double lr = 1e-4;
  double min_lr = 1e-7;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 1.0;
  // Warmup fraction of each phase's steps; annealing covers the remainder,
  // mirroring the full-scale recipe's warmup:anneal split.
  double warmup_frac = 0.068;
  uint64_t train_seed = 1;

  PretrainMode pretrain_mode = PretrainMode::MOTION_FOLLOWING;
  int pretrain_epochs = 20;
  bool two_step_pretrain = false;
  int second_step_epochs = 5;
  tasks::AugmentConfig augment;
  int lm_span_steps = 0;

  int finetune_epochs = 10;
  double modified_ft_prob = 0.0;

  std::vector<tasks::Level> eval_levels = {tasks::Level::L1, tasks::Level::L2, tasks::Level::L3, tasks::Level::L4};
  int eval_episodes = 200;
  bool eval_edit_prompts = false;
  uint64_t eval_seed = 7;

  tasks::SuiteConfig suite() const;
  tasks::SplitConfig split() const;

  static TrainConfig from_file(const KeyValueFile& kv);
};

std::string print_config(const TrainConfig& cfg);
uint64_t config_hash(const TrainConfig& cfg);

}  // namespace mmp::pipeline
