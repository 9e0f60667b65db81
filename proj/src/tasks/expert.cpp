#include <algorithm>
#include <stdexcept>

#include "tasks/tasks.hpp"

namespace mmp::tasks {

using core::Rng;
using sim::Scene;
using sim::SimConfig;

Trajectory rollout_trajectory(const Scene& start, const std::vector<sim::ActionPrim>& actions, const SimConfig& cfg) {
  Trajectory traj;
  traj.start_scene = start;
  Scene s = start;
  traj.observations.push_back(sim::observe(s, cfg));
  for (const auto& a : actions) {
    const auto [next, flag] = sim::step(s, a, cfg);
    if (flag != sim::StepFlag::OK)
      throw std::runtime_error(std::string("rollout: illegal action (") + sim::to_string(flag) + ")");
    s = next;
    traj.observations.push_back(sim::observe(s, cfg));
    traj.actions.push_back(a);
  }
  return traj;
}

namespace {

// Reads the required action off consecutive prompt frames: exactly one
// object may change cell or rotation per step.
sim::ActionPrim diff_frames(const PromptImage& before, const PromptImage& after, int rotations) {
  if (before.views.size() != after.views.size()) throw std::runtime_error("expert: frame object counts differ");
  const sim::ObjectSpec* from = nullptr;
  const sim::ObjectSpec* to = nullptr;
  for (const auto& bv : before.views) {
    for (const auto& av : after.views) {
      if (av.spec.object_uid != bv.spec.object_uid) continue;
      if (!(av.spec.cell == bv.spec.cell) || av.spec.rotation_bin != bv.spec.rotation_bin) {
        if (from != nullptr) throw std::runtime_error("expert: more than one object moved between frames");
        from = &bv.spec;
        to = &av.spec;
      }
    }
  }
  if (from == nullptr) throw std::runtime_error("expert: no motion between frames");
  sim::ActionPrim a;
  a.pick = from->cell;
  a.place = to->cell;
  a.place_rot_bin = (to->rotation_bin - from->rotation_bin + rotations) % rotations;
  return a;
}

std::vector<sim::ActionPrim> plan_actions(const SuiteConfig& cfg, const TaskInstance& inst) {
  const Scene& scene = inst.initial_scene;
  std::vector<sim::ActionPrim> actions;
  switch (inst.task_type) {
    case TaskType::PUT_INTO: {
      const sim::ObjectSpec* target = scene.object_by_uid(inst.predicate.target_uid);
      if (target == nullptr || scene.container_cells.empty()) throw std::runtime_error("expert: malformed put_into");
      actions.push_back({target->cell, 0, scene.container_cells.front(), 0});
      break;
    }
    case TaskType::REARRANGE_RESTORE: {
      std::vector<PredicateSpec::CellGoal> goals = inst.predicate.goals;
      std::sort(goals.begin(), goals.end(), [](const auto& a, const auto& b) { return a.uid < b.uid; });
      if (cfg.gen.randomize_restore_order) {
        Rng rng(Rng::mix(inst.seed, 0xE0E0));
        rng.shuffle(goals);
      }
      for (const auto& g : goals) {
        const sim::ObjectSpec* o = scene.object_by_uid(g.uid);
        if (o == nullptr) throw std::runtime_error("expert: missing object");
        if (o->cell == g.cell) continue;
        actions.push_back({o->cell, 0, g.cell, 0});
      }
      break;
    }
    case TaskType::TWIST: {
      for (const auto& rg : inst.predicate.rot_goals) {
        const sim::ObjectSpec* o = scene.object_by_uid(rg.uid);
        if (o == nullptr) throw std::runtime_error("expert: missing object");
        const int delta = (rg.expected_rot - o->rotation_bin + cfg.sim.rotations) % cfg.sim.rotations;
        if (delta == 0) continue;
        actions.push_back({o->cell, 0, o->cell, delta});
      }
      break;
    }
    case TaskType::FOLLOW_MOTION:
    case TaskType::FOLLOW_ORDER: {
      const PromptImage* prev = nullptr;
      for (const auto& e : inst.prompt.elements) {
        if (e.is_word) continue;
        if (e.image.kind != ImageKind::SCENE_FRAME) continue;
        if (prev != nullptr) actions.push_back(diff_frames(*prev, e.image, cfg.sim.rotations));
        prev = &e.image;
      }
      break;
    }
  }
  return actions;
}

}  // namespace

Trajectory scripted_expert(const SuiteConfig& cfg, const TaskInstance& inst) {
  if (predicate_holds(inst.predicate, inst.initial_scene)) {
    Trajectory traj;
    traj.start_scene = inst.initial_scene;
    traj.observations.push_back(sim::observe(inst.initial_scene, cfg.sim));
    return traj;
  }
  const auto actions = plan_actions(cfg, inst);
  Trajectory traj = rollout_trajectory(inst.initial_scene, actions, cfg.sim);

  Scene final_scene = inst.initial_scene;
  for (const auto& a : actions) final_scene = sim::step(final_scene, a, cfg.sim).first;
  if (!predicate_holds(inst.predicate, final_scene))
    throw std::runtime_error("expert: planned actions do not satisfy the success predicate");
  return traj;
}

}  // namespace mmp::tasks
