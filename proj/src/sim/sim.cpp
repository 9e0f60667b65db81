#include "sim/sim.hpp"

namespace mmp::sim {

using core::Rng;

void validate(const SimConfig& cfg) {
  if (cfg.board_w <= 0 || cfg.board_h <= 0) throw std::invalid_argument("sim config: board dims must be positive");
  if (cfg.patch_k < 8) throw std::invalid_argument("sim config: patch_k must be >= 8");
  if (cfg.rotations <= 0) throw std::invalid_argument("sim config: rotations must be positive");
  if (cfg.shapes <= 0 || cfg.shapes > 8) throw std::invalid_argument("sim config: shapes must be in [1, 8]");
  if (cfg.textures <= 0 || cfg.textures > 8) throw std::invalid_argument("sim config: textures must be in [1, 8]");
}

const char* to_string(StepFlag flag) {
  switch (flag) {
    case StepFlag::OK: return "OK";
    case StepFlag::EMPTY_PICK: return "EMPTY_PICK";
    case StepFlag::BLOCKED_PLACE: return "BLOCKED_PLACE";
  }
  return "?";
}

Scene reset(uint64_t seed, const SimConfig& cfg, const SceneSpec& spec) {
  validate(cfg);
  if (spec.n_objects < 0) throw std::invalid_argument("reset: negative object count");
  if (spec.n_objects > cfg.board_w * cfg.board_h)
    throw std::invalid_argument("reset: requested objects exceed board capacity");
  const bool joint = !spec.combo_pool.empty();
  if (spec.n_objects > 0 && !joint && (spec.shape_pool.empty() || spec.texture_pool.empty()))
    throw std::invalid_argument("reset: empty asset pool");
  for (const int s : spec.shape_pool)
    if (s < 0 || s >= cfg.shapes) throw std::invalid_argument("reset: shape pool id out of range");
  for (const int t : spec.texture_pool)
    if (t < 0 || t >= cfg.textures) throw std::invalid_argument("reset: texture pool id out of range");
  for (const auto& [s, t] : spec.combo_pool)
    if (s < 0 || s >= cfg.shapes || t < 0 || t >= cfg.textures)
      throw std::invalid_argument("reset: combo pool id out of range");
  if (joint && spec.distinct_combos && spec.n_objects > static_cast<int>(spec.combo_pool.size()))
    throw std::invalid_argument("reset: combo pool too small for distinct draw");

  Rng rng(seed);
  Scene scene;
  scene.board_w = cfg.board_w;
  scene.board_h = cfg.board_h;

  std::vector<Cell> cells;
  cells.reserve(static_cast<size_t>(cfg.board_w) * cfg.board_h);
  for (int r = 0; r < cfg.board_h; ++r)
    for (int c = 0; c < cfg.board_w; ++c) cells.push_back({r, c});
  rng.shuffle(cells);

  std::vector<std::pair<int, int>> combos = spec.combo_pool;
  if (joint && spec.distinct_combos) rng.shuffle(combos);

  for (int i = 0; i < spec.n_objects; ++i) {
    ObjectSpec o;
    if (joint) {
      const auto& [s, t] =
          spec.distinct_combos ? combos[i] : combos[rng.next_below(static_cast<uint32_t>(combos.size()))];
      o.shape_id = s;
      o.texture_id = t;
    } else {
      o.shape_id = spec.shape_pool[rng.next_below(static_cast<uint32_t>(spec.shape_pool.size()))];
      o.texture_id = spec.texture_pool[rng.next_below(static_cast<uint32_t>(spec.texture_pool.size()))];
    }
    o.rotation_bin = spec.randomize_rotation ? static_cast<int>(rng.next_below(static_cast<uint32_t>(cfg.rotations))) : 0;
    o.cell = cells[i];
    o.object_uid = i;
    scene.objects.push_back(o);
  }
  return scene;
}

std::pair<Scene, StepFlag> step(const Scene& scene, const ActionPrim& action, const SimConfig& cfg) {
  if (!scene.in_bounds(action.pick) || !scene.in_bounds(action.place))
    throw std::out_of_range("step: action cell out of bounds");
  if (action.place_rot_bin < 0 || action.place_rot_bin >= cfg.rotations ||
      action.pick_rot_bin < 0 || action.pick_rot_bin >= cfg.rotations)
    throw std::out_of_range("step: rotation bin out of range");

  const int picked = scene.object_at(action.pick);
  if (picked < 0) return {scene, StepFlag::EMPTY_PICK};

  // Placing back onto the pick cell is a rotation in place; any other
  // occupied cell blocks. Receptacle cells accept placement like any other
  // free cell.
  if (!(action.place == action.pick) && scene.object_at(action.place) >= 0)
    return {scene, StepFlag::BLOCKED_PLACE};

  Scene next = scene;
  ObjectSpec& o = next.objects[picked];
  o.cell = action.place;
  o.rotation_bin = (o.rotation_bin + action.place_rot_bin) % cfg.rotations;
  return {next, StepFlag::OK};
}

Observation observe(const Scene& scene, const SimConfig& cfg) {
  Observation obs;
  obs.views.reserve(scene.objects.size());
  for (const ObjectSpec& o : scene.objects) {
    ObjectView v;
    v.patch = render_object(o.shape_id, o.texture_id, o.rotation_bin, cfg);
    v.bbox = cell_bbox(o.cell, cfg.patch_k);
    v.object_uid = o.object_uid;
    obs.views.push_back(std::move(v));
  }
  return obs;
}

}  // namespace mmp::sim
