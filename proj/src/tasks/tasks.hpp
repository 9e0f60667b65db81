#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "model/vocab.hpp"
#include "sim/sim.hpp"

namespace mmp::tasks {

enum class TaskType : uint8_t { PUT_INTO, REARRANGE_RESTORE, TWIST, FOLLOW_MOTION, FOLLOW_ORDER };
enum class Level : uint8_t { L1, L2, L3, L4 };

const char* to_string(TaskType t);
const char* to_string(Level l);
TaskType task_type_from_string(const std::string& s);
Level level_from_string(const std::string& s);

enum class ImageKind : uint8_t { OBJECT_PATCH, SCENE_FRAME };

// A depicted object inside a prompt image element. The spec is the source of
// truth for serialization; the rendered view is what the encoders consume
// (augmentation may perturb the view away from the spec-rendered pixels).
struct PromptView {
  sim::ObjectSpec spec;
  sim::ObjectView view;
  bool operator==(const PromptView&) const = default;
};

struct PromptImage {
  ImageKind kind = ImageKind::OBJECT_PATCH;
  std::vector<PromptView> views;  // OBJECT_PATCH: exactly one; SCENE_FRAME: one per depicted object
  bool operator==(const PromptImage&) const = default;
};

struct PromptElement {
  bool is_word = true;
  int word_id = 0;
  PromptImage image;
  bool operator==(const PromptElement&) const = default;

  static PromptElement word(int id) {
    PromptElement e;
    e.is_word = true;
    e.word_id = id;
    return e;
  }
  static PromptElement img(PromptImage im) {
    PromptElement e;
    e.is_word = false;
    e.image = std::move(im);
    return e;
  }
};

struct MultimodalPrompt {
  std::vector<PromptElement> elements;
  bool operator==(const MultimodalPrompt&) const = default;
};

// Success is always a pure function of the final scene; the fields below are
// frozen at generation time.
struct PredicateSpec {
  TaskType type = TaskType::PUT_INTO;
  int target_uid = -1;  // PUT_INTO

  struct RotGoal {
    int uid = 0;
    int expected_rot = 0;
    bool operator==(const RotGoal&) const = default;
  };
  std::vector<RotGoal> rot_goals;  // TWIST: every object's required final rotation

  struct CellGoal {
    int uid = 0;
    sim::Cell cell;
    int rot = 0;
    bool operator==(const CellGoal&) const = default;
  };
  std::vector<CellGoal> goals;  // REARRANGE_RESTORE / FOLLOW_MOTION / FOLLOW_ORDER
  bool check_rotation = false;  // FOLLOW_MOTION

  bool operator==(const PredicateSpec&) const = default;
};

bool predicate_holds(const PredicateSpec& pred, const sim::Scene& final_scene);

struct TaskInstance {
  TaskType task_type = TaskType::PUT_INTO;
  Level level = Level::L1;
  uint64_t seed = 0;
  MultimodalPrompt prompt;
  sim::Scene initial_scene;
  PredicateSpec predicate;
  int expert_steps = 0;  // nominal demonstration length, used for episode step limits
  bool operator==(const TaskInstance&) const = default;
};

struct Trajectory {
  sim::Scene start_scene;                      // the scene behind o_0
  std::vector<sim::Observation> observations;  // o_0 .. o_T
  std::vector<sim::ActionPrim> actions;        // a_0 .. a_{T-1}
  bool operator==(const Trajectory&) const = default;
};

// Action tokenization: 6 dimensions in decode order
// (pick_row, pick_col, pick_rot, place_row, place_col, place_rot).
constexpr int kActionDims = 6;

std::array<int, kActionDims> action_to_tokens(const sim::ActionPrim& a);
sim::ActionPrim action_from_tokens(const std::array<int, kActionDims>& t);
std::vector<int> action_head_sizes(const sim::SimConfig& cfg);  // {H, W, R, H, W, R}

// ---------------------------------------------------------------------------
// Suite configuration: generalization splits and per-family knobs.

struct SplitConfig {
  std::vector<int> train_shapes = {0, 1, 2, 3, 4, 5};
  std::vector<int> train_textures = {0, 1, 2, 3, 4, 5};
  std::vector<int> holdout_shapes = {6, 7};
  std::vector<int> holdout_textures = {6, 7};
  std::vector<TaskType> train_tasks = {TaskType::PUT_INTO, TaskType::REARRANGE_RESTORE, TaskType::TWIST,
                                       TaskType::FOLLOW_ORDER};
  std::vector<TaskType> l4_tasks = {TaskType::FOLLOW_MOTION};

  // The in-context split of the evaluation protocol: TWIST and FOLLOW_ORDER
  // join FOLLOW_MOTION in the held-out set.
  static SplitConfig default_split();
  static SplitConfig incontext_split();
};

struct GenParams {
  int put_into_objects_min = 2;  // target + distractors
  int put_into_objects_max = 3;
  int restore_objects_min = 2;
  int restore_objects_max = 3;
  int twist_objects_min = 2;
  int twist_objects_max = 3;
  int twist_examples = 3;  // in-context before/after pairs
  int motion_objects_min = 2;
  int motion_objects_max = 3;
  int motion_steps_min = 2;
  int motion_steps_max = 3;
  int order_objects_min = 2;
  int order_objects_max = 3;
  bool randomize_restore_order = false;  // expert restore order; canonical ascending uid when false
};

struct SuiteConfig {
  sim::SimConfig sim;
  SplitConfig split;
  GenParams gen;
};

// Training-set (shape, texture) combinations: train assets with even id sum.
// L2 uses the odd-sum complement over the same assets; L3 uses combinations
// containing at least one held-out asset id.
std::vector<std::pair<int, int>> combos_for_level(const SplitConfig& split, Level level);

bool task_allowed_at_level(const SplitConfig& split, TaskType task, Level level);

// ---------------------------------------------------------------------------
// Operations

TaskInstance generate_instance(const SuiteConfig& cfg, TaskType task, Level level, uint64_t seed,
                               const model::Vocabulary& vocab);

Trajectory scripted_expert(const SuiteConfig& cfg, const TaskInstance& instance);

// Applies actions from start, throwing if any step is not OK.
Trajectory rollout_trajectory(const sim::Scene& start, const std::vector<sim::ActionPrim>& actions,
                              const sim::SimConfig& cfg);

struct TrainingSample {
  MultimodalPrompt prompt;
  Trajectory trajectory;
  bool operator==(const TrainingSample&) const = default;
};

// "Follow this motion :" + one SCENE_FRAME per observation; targets are the
// trajectory's own actions. Any task's trajectory is eligible.
TrainingSample make_pretrain_sample(const Trajectory& traj, const model::Vocabulary& vocab,
                                    const sim::SimConfig& cfg);

struct AugmentConfig {
  double color_jitter = 0.0;  // channel scale amplitude
  double gray_prob = 0.0;     // per-image grayscale probability
  int bbox_shift_max = 0;     // pixels; one (dx, dy) shared by all prompt-frame bboxes
};

// Perturbs prompt images only; trajectory observations, actions, and
// predicates are untouched. Identity strengths return the sample unchanged.
TrainingSample augment_sample(TrainingSample sample, uint64_t seed, const AugmentConfig& cfg);

// Each OBJECT_PATCH element is independently replaced by its text
// description ("the {texture} {shape}") with probability p_replace.
// SCENE_FRAME elements are never replaced.
MultimodalPrompt modified_ft_transform(const MultimodalPrompt& prompt, uint64_t seed, double p_replace,
                                       const model::Vocabulary& vocab);

// Rewrites held-out prompts into the pretraining form.
TaskInstance edit_holdout_prompt(const TaskInstance& instance, const model::Vocabulary& vocab);

// The dependency-structure dataset: two objects in one row, both displaced
// from a home row, demos restore them in random order. The first action is
// bimodal by construction.
TaskInstance make_mode_separation_instance(const SuiteConfig& cfg, uint64_t seed, const model::Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Dataset shards

struct Manifest {
  uint32_t format_version = 1;
  std::string split_name = "default";
  uint64_t generator_seed = 0;
  int demos_per_task = 0;
  sim::SimConfig sim;
  std::vector<TaskType> tasks;
  std::vector<std::pair<int, int>> combos;  // training combinations
};

std::string manifest_to_text(const Manifest& m);
Manifest manifest_from_text(const std::string& text);

struct ShardRecord {
  TaskInstance instance;
  Trajectory trajectory;
  bool operator==(const ShardRecord&) const = default;
};

struct DatasetShard {
  Manifest manifest;
  std::vector<ShardRecord> records;
};

void write_shard(const DatasetShard& shard, const std::string& path);
DatasetShard read_shard(const std::string& path);

}  // namespace mmp::tasks
