#include <algorithm>
#include <stdexcept>

#include "tasks/tasks.hpp"

namespace mmp::tasks {

using core::Rng;
using model::Vocabulary;
using sim::Cell;
using sim::ObjectSpec;
using sim::Scene;
using sim::SimConfig;

const char* to_string(TaskType t) {
  switch (t) {
    case TaskType::PUT_INTO: return "put_into";
    case TaskType::REARRANGE_RESTORE: return "rearrange_restore";
    case TaskType::TWIST: return "twist";
    case TaskType::FOLLOW_MOTION: return "follow_motion";
    case TaskType::FOLLOW_ORDER: return "follow_order";
  }
  return "?";
}

const char* to_string(Level l) {
  switch (l) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::L3: return "L3";
    case Level::L4: return "L4";
  }
  return "?";
}

TaskType task_type_from_string(const std::string& s) {
  for (const TaskType t : {TaskType::PUT_INTO, TaskType::REARRANGE_RESTORE, TaskType::TWIST, TaskType::FOLLOW_MOTION,
                           TaskType::FOLLOW_ORDER})
    if (s == to_string(t)) return t;
  throw std::invalid_argument("unknown task type '" + s + "'");
}

Level level_from_string(const std::string& s) {
  for (const Level l : {Level::L1, Level::L2, Level::L3, Level::L4})
    if (s == to_string(l)) return l;
  throw std::invalid_argument("unknown level '" + s + "'");
}

std::array<int, kActionDims> action_to_tokens(const sim::ActionPrim& a) {
  return {a.pick.row, a.pick.col, a.pick_rot_bin, a.place.row, a.place.col, a.place_rot_bin};
}

sim::ActionPrim action_from_tokens(const std::array<int, kActionDims>& t) {
  sim::ActionPrim a;
  a.pick = {t[0], t[1]};
  a.pick_rot_bin = t[2];
  a.place = {t[3], t[4]};
  a.place_rot_bin = t[5];
  return a;
}

std::vector<int> action_head_sizes(const SimConfig& cfg) {
  return {cfg.board_h, cfg.board_w, cfg.rotations, cfg.board_h, cfg.board_w, cfg.rotations};
}

SplitConfig SplitConfig::default_split() { return SplitConfig{}; }

SplitConfig SplitConfig::incontext_split() {
  SplitConfig s;
  s.train_tasks = {TaskType::PUT_INTO, TaskType::REARRANGE_RESTORE};
  s.l4_tasks = {TaskType::TWIST, TaskType::FOLLOW_ORDER, TaskType::FOLLOW_MOTION};
  return s;
}

std::vector<std::pair<int, int>> combos_for_level(const SplitConfig& split, Level level) {
  std::vector<std::pair<int, int>> out;
  if (level == Level::L1 || level == Level::L4) {
    for (const int s : split.train_shapes)
      for (const int t : split.train_textures)
        if ((s + t) % 2 == 0) out.emplace_back(s, t);
  } else if (level == Level::L2) {
    for (const int s : split.train_shapes)
      for (const int t : split.train_textures)
        if ((s + t) % 2 == 1) out.emplace_back(s, t);
  } else {
    for (const int s : split.holdout_shapes) {
      for (const int t : split.train_textures) out.emplace_back(s, t);
      for (const int t : split.holdout_textures) out.emplace_back(s, t);
    }
    for (const int s : split.train_shapes)
      for (const int t : split.holdout_textures) out.emplace_back(s, t);
  }
  return out;
}

bool task_allowed_at_level(const SplitConfig& split, TaskType task, Level level) {
  const auto& pool = level == Level::L4 ? split.l4_tasks : split.train_tasks;
  return std::find(pool.begin(), pool.end(), task) != pool.end();
}

bool predicate_holds(const PredicateSpec& pred, const Scene& final_scene) {
  switch (pred.type) {
    case TaskType::PUT_INTO: {
      const ObjectSpec* o = final_scene.object_by_uid(pred.target_uid);
      return o != nullptr && final_scene.is_container_cell(o->cell);
    }
    case TaskType::TWIST: {
      for (const auto& rg : pred.rot_goals) {
        const ObjectSpec* o = final_scene.object_by_uid(rg.uid);
        if (o == nullptr || o->rotation_bin != rg.expected_rot) return false;
      }
      return true;
    }
    case TaskType::REARRANGE_RESTORE:
    case TaskType::FOLLOW_MOTION:
    case TaskType::FOLLOW_ORDER: {
      for (const auto& g : pred.goals) {
        const ObjectSpec* o = final_scene.object_by_uid(g.uid);
        if (o == nullptr || !(o->cell == g.cell)) return false;
        if (pred.check_rotation && o->rotation_bin != g.rot) return false;
      }
      return true;
    }
  }
  return false;
}

namespace {

std::vector<PromptElement> word_elements(const Vocabulary& vocab, const std::string& text) {
  std::vector<PromptElement> out;
  for (const int id : vocab.encode(text)) out.push_back(PromptElement::word(id));
  return out;
}

void append_words(MultimodalPrompt& p, const Vocabulary& vocab, const std::string& text) {
  for (auto& e : word_elements(vocab, text)) p.elements.push_back(std::move(e));
}

PromptImage object_patch(const ObjectSpec& spec, const SimConfig& cfg) {
  PromptImage im;
  im.kind = ImageKind::OBJECT_PATCH;
  PromptView v;
  v.spec = spec;
  v.view.patch = sim::render_object(spec.shape_id, spec.texture_id, spec.rotation_bin, cfg);
  v.view.bbox = {0.0f, 0.0f, static_cast<float>(cfg.patch_k), static_cast<float>(cfg.patch_k)};
  v.view.object_uid = spec.object_uid;
  im.views.push_back(std::move(v));
  return im;
}

PromptImage scene_frame(const Scene& scene, const SimConfig& cfg) {
  PromptImage im;
  im.kind = ImageKind::SCENE_FRAME;
  const sim::Observation obs = sim::observe(scene, cfg);
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    PromptView v;
    v.spec = scene.objects[i];
    v.view = obs.views[i];
    im.views.push_back(std::move(v));
  }
  return im;
}

std::vector<Cell> free_cells(const Scene& scene) {
  std::vector<Cell> out;
  for (int r = 0; r < scene.board_h; ++r)
    for (int c = 0; c < scene.board_w; ++c)
      if (scene.object_at({r, c}) < 0) out.push_back({r, c});
  return out;
}

int draw_range(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.next_below(static_cast<uint32_t>(hi - lo + 1))); }

sim::SceneSpec level_scene_spec(const SuiteConfig& cfg, Level level, int n_objects) {
  sim::SceneSpec spec;
  spec.n_objects = n_objects;
  spec.combo_pool = combos_for_level(cfg.split, level);
  spec.distinct_combos = true;
  spec.randomize_rotation = true;
  return spec;
}

int draw_train_texture(const SuiteConfig& cfg, Rng& rng) {
  return cfg.split.train_textures[rng.next_below(static_cast<uint32_t>(cfg.split.train_textures.size()))];
}

TaskInstance gen_put_into(const SuiteConfig& cfg, Level level, uint64_t seed, const Vocabulary& vocab) {
  Rng rng(Rng::mix(seed, 0x9001));
  const int n = draw_range(rng, cfg.gen.put_into_objects_min, cfg.gen.put_into_objects_max);
  Scene scene = sim::reset(Rng::mix(seed, 0x9002), cfg.sim, level_scene_spec(cfg, level, n));

  const int target_idx = static_cast<int>(rng.next_below(static_cast<uint32_t>(n)));

  // Bowl with its opening one cell to the right.
  std::vector<Cell> candidates;
  for (const Cell& c : free_cells(scene)) {
    const Cell mouth{c.row, c.col + 1};
    if (scene.in_bounds(mouth) && scene.object_at(mouth) < 0) candidates.push_back(c);
  }
  if (candidates.empty()) throw std::runtime_error("put_into: no room for container");
  rng.shuffle(candidates);
  ObjectSpec bowl;
  bowl.shape_id = cfg.sim.bowl_shape();
  bowl.texture_id = draw_train_texture(cfg, rng);
  bowl.rotation_bin = 0;
  bowl.cell = candidates[0];
  bowl.object_uid = n;
  scene.objects.push_back(bowl);
  scene.container_cells.push_back({bowl.cell.row, bowl.cell.col + 1});

  TaskInstance inst;
  inst.task_type = TaskType::PUT_INTO;
  inst.level = level;
  inst.seed = seed;
  inst.initial_scene = scene;
  inst.predicate.type = TaskType::PUT_INTO;
  inst.predicate.target_uid = target_idx;
  inst.expert_steps = 1;

  append_words(inst.prompt, vocab, "put");
  inst.prompt.elements.push_back(PromptElement::img(object_patch(scene.objects[target_idx], cfg.sim)));
  append_words(inst.prompt, vocab, "into");
  inst.prompt.elements.push_back(PromptElement::img(object_patch(bowl, cfg.sim)));
  append_words(inst.prompt, vocab, ".");
  return inst;
}

TaskInstance gen_rearrange_restore(const SuiteConfig& cfg, Level level, uint64_t seed, const Vocabulary& vocab) {
  Rng rng(Rng::mix(seed, 0x9101));
  const int n = draw_range(rng, cfg.gen.restore_objects_min, cfg.gen.restore_objects_max);
  const Scene home = sim::reset(Rng::mix(seed, 0x9102), cfg.sim, level_scene_spec(cfg, level, n));

  // Initial scene: every object displaced to a cell no object calls home.
  Scene displaced = home;
  std::vector<Cell> spots = free_cells(home);
  rng.shuffle(spots);
  for (int i = 0; i < n; ++i) displaced.objects[i].cell = spots[i];

  TaskInstance inst;
  inst.task_type = TaskType::REARRANGE_RESTORE;
  inst.level = level;
  inst.seed = seed;
  inst.initial_scene = displaced;
  inst.predicate.type = TaskType::REARRANGE_RESTORE;
  for (const auto& o : home.objects) inst.predicate.goals.push_back({o.object_uid, o.cell, o.rotation_bin});
  inst.expert_steps = n;

  append_words(inst.prompt, vocab, "rearrange then restore to this setup :");
  inst.prompt.elements.push_back(PromptElement::img(scene_frame(home, cfg.sim)));
  append_words(inst.prompt, vocab, ".");
  return inst;
}

TaskInstance gen_twist(const SuiteConfig& cfg, Level level, uint64_t seed, const Vocabulary& vocab) {
  Rng rng(Rng::mix(seed, 0x9201));
  const int n = draw_range(rng, cfg.gen.twist_objects_min, cfg.gen.twist_objects_max);
  Scene scene = sim::reset(Rng::mix(seed, 0x9202), cfg.sim, level_scene_spec(cfg, level, n));

  const int target_idx = static_cast<int>(rng.next_below(static_cast<uint32_t>(n)));
  const ObjectSpec& target = scene.objects[target_idx];
  const int delta = 1 + static_cast<int>(rng.next_below(static_cast<uint32_t>(cfg.sim.rotations - 1)));

  TaskInstance inst;
  inst.task_type = TaskType::TWIST;
  inst.level = level;
  inst.seed = seed;
  inst.initial_scene = scene;
  inst.predicate.type = TaskType::TWIST;
  for (const auto& o : scene.objects) {
    const int expected =
        o.object_uid == target.object_uid ? (o.rotation_bin + delta) % cfg.sim.rotations : o.rotation_bin;
    inst.predicate.rot_goals.push_back({o.object_uid, expected});
  }
  inst.expert_steps = 1;

  append_words(inst.prompt, vocab, "twist is defined as rotating object a specific angle . for examples :");
  // In-context pairs demonstrate the same rotation delta on other assets.
  auto example_combos = combos_for_level(cfg.split, level);
  std::erase_if(example_combos,
                [&](const auto& c) { return c.first == target.shape_id && c.second == target.texture_id; });
  rng.shuffle(example_combos);
  for (int i = 0; i < cfg.gen.twist_examples; ++i) {
    const auto& [s, t] = example_combos[i % example_combos.size()];
    ObjectSpec before;
    before.shape_id = s;
    before.texture_id = t;
    before.rotation_bin = static_cast<int>(rng.next_below(static_cast<uint32_t>(cfg.sim.rotations)));
    before.cell = {0, 0};
    before.object_uid = -1;
    ObjectSpec after = before;
    after.rotation_bin = (before.rotation_bin + delta) % cfg.sim.rotations;
    append_words(inst.prompt, vocab, "from");
    inst.prompt.elements.push_back(PromptElement::img(object_patch(before, cfg.sim)));
    append_words(inst.prompt, vocab, "to");
    inst.prompt.elements.push_back(PromptElement::img(object_patch(after, cfg.sim)));
    append_words(inst.prompt, vocab, ".");
  }
  append_words(inst.prompt, vocab, "now twist all");
  append_words(inst.prompt, vocab, model::object_description(target.shape_id, target.texture_id, false));
  append_words(inst.prompt, vocab, "objects .");
  return inst;
}

TaskInstance gen_follow_motion(const SuiteConfig& cfg, Level level, uint64_t seed, const Vocabulary& vocab) {
  Rng rng(Rng::mix(seed, 0x9301));
  const int n = draw_range(rng, cfg.gen.motion_objects_min, cfg.gen.motion_objects_max);
  const Scene start = sim::reset(Rng::mix(seed, 0x9302), cfg.sim, level_scene_spec(cfg, level, n));
  const int target_idx = static_cast<int>(rng.next_below(static_cast<uint32_t>(n)));
  const int steps = draw_range(rng, cfg.gen.motion_steps_min, cfg.gen.motion_steps_max);

  std::vector<sim::ActionPrim> actions;
  Scene s = start;
  Cell at = s.objects[target_idx].cell;
  for (int i = 0; i < steps; ++i) {
    std::vector<Cell> spots = free_cells(s);
    rng.shuffle(spots);
    sim::ActionPrim a;
    a.pick = at;
    a.place = spots[0];
    actions.push_back(a);
    s = sim::step(s, a, cfg.sim).first;
    at = a.place;
  }

  TaskInstance inst;
  inst.task_type = TaskType::FOLLOW_MOTION;
  inst.level = level;
  inst.seed = seed;
  inst.initial_scene = start;
  inst.predicate.type = TaskType::FOLLOW_MOTION;
  inst.predicate.check_rotation = true;
  for (const auto& o : s.objects) inst.predicate.goals.push_back({o.object_uid, o.cell, o.rotation_bin});
  inst.expert_steps = steps;

  // Exactly the pretraining prompt form: T actions need T + 1 frames.
  append_words(inst.prompt, vocab, "follow this motion :");
  Scene frame_scene = start;
  inst.prompt.elements.push_back(PromptElement::img(scene_frame(frame_scene, cfg.sim)));
  for (const auto& a : actions) {
    frame_scene = sim::step(frame_scene, a, cfg.sim).first;
    inst.prompt.elements.push_back(PromptElement::img(scene_frame(frame_scene, cfg.sim)));
  }
  return inst;
}

TaskInstance gen_follow_order(const SuiteConfig& cfg, Level level, uint64_t seed, const Vocabulary& vocab) {
  Rng rng(Rng::mix(seed, 0x9401));
  const int n = draw_range(rng, cfg.gen.order_objects_min, cfg.gen.order_objects_max);
  Scene scene = sim::reset(Rng::mix(seed, 0x9402), cfg.sim, level_scene_spec(cfg, level, n));

  // Tray with an n-cell lane to its right.
  std::vector<Cell> anchors;
  for (const Cell& c : free_cells(scene)) {
    bool ok = c.col + n < scene.board_w;
    for (int j = 1; ok && j <= n; ++j)
      if (scene.object_at({c.row, c.col + j}) >= 0) ok = false;
    if (ok) anchors.push_back(c);
  }
  if (anchors.empty()) throw std::runtime_error("follow_order: no room for lane");
  rng.shuffle(anchors);
  ObjectSpec tray;
  tray.shape_id = cfg.sim.tray_shape();
  tray.texture_id = draw_train_texture(cfg, rng);
  tray.rotation_bin = 0;
  tray.cell = anchors[0];
  tray.object_uid = n;
  scene.objects.push_back(tray);
  for (int j = 1; j <= n; ++j) scene.container_cells.push_back({tray.cell.row, tray.cell.col + j});

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<sim::ActionPrim> actions;
  Scene s = scene;
  for (int i = 0; i < n; ++i) {
    sim::ActionPrim a;
    a.pick = s.objects[order[i]].cell;
    a.place = scene.container_cells[i];
    actions.push_back(a);
    s = sim::step(s, a, cfg.sim).first;
  }

  TaskInstance inst;
  inst.task_type = TaskType::FOLLOW_ORDER;
  inst.level = level;
  inst.seed = seed;
  inst.initial_scene = scene;
  inst.predicate.type = TaskType::FOLLOW_ORDER;
  for (const auto& o : s.objects) inst.predicate.goals.push_back({o.object_uid, o.cell, 0});
  inst.expert_steps = n;

  append_words(inst.prompt, vocab, "stack objects in this order :");
  Scene frame_scene = scene;
  inst.prompt.elements.push_back(PromptElement::img(scene_frame(frame_scene, cfg.sim)));
  for (const auto& a : actions) {
    frame_scene = sim::step(frame_scene, a, cfg.sim).first;
    inst.prompt.elements.push_back(PromptElement::img(scene_frame(frame_scene, cfg.sim)));
  }
  append_words(inst.prompt, vocab, ".");
  return inst;
}

}  // namespace

TaskInstance generate_instance(const SuiteConfig& cfg, TaskType task, Level level, uint64_t seed,
                               const Vocabulary& vocab) {
  sim::validate(cfg.sim);
  if (!task_allowed_at_level(cfg.split, task, level))
    throw std::invalid_argument(std::string("task ") + to_string(task) + " is not in the " + to_string(level) +
                                " task set of this split");
  switch (task) {
    case TaskType::PUT_INTO: return gen_put_into(cfg, level, seed, vocab);
    case TaskType::REARRANGE_RESTORE: return gen_rearrange_restore(cfg, level, seed, vocab);
    case TaskType::TWIST: return gen_twist(cfg, level, seed, vocab);
    case TaskType::FOLLOW_MOTION: return gen_follow_motion(cfg, level, seed, vocab);
    case TaskType::FOLLOW_ORDER: return gen_follow_order(cfg, level, seed, vocab);
  }
  throw std::logic_error("unreachable");
}

TaskInstance make_mode_separation_instance(const SuiteConfig& cfg, uint64_t seed, const Vocabulary& vocab) {
  Rng rng(Rng::mix(seed, 0x9501));
  auto combos = combos_for_level(cfg.split, Level::L1);
  rng.shuffle(combos);

  const int rows = cfg.sim.board_h;
  const int cols = cfg.sim.board_w;
  const int home_row = static_cast<int>(rng.next_below(static_cast<uint32_t>(rows)));
  int disp_row = static_cast<int>(rng.next_below(static_cast<uint32_t>(rows - 1)));
  if (disp_row >= home_row) ++disp_row;
  const int c1 = static_cast<int>(rng.next_below(static_cast<uint32_t>(cols - 1)));
  int c2 = c1 + 1 + static_cast<int>(rng.next_below(static_cast<uint32_t>(cols - c1 - 1)));

  Scene home;
  home.board_w = cols;
  home.board_h = rows;
  home.objects.push_back({combos[0].first, combos[0].second, 0, {home_row, c1}, 0});
  home.objects.push_back({combos[1].first, combos[1].second, 0, {home_row, c2}, 1});

  Scene displaced = home;
  displaced.objects[0].cell = {disp_row, c1};
  displaced.objects[1].cell = {disp_row, c2};

  TaskInstance inst;
  inst.task_type = TaskType::REARRANGE_RESTORE;
  inst.level = Level::L1;
  inst.seed = seed;
  inst.initial_scene = displaced;
  inst.predicate.type = TaskType::REARRANGE_RESTORE;
  for (const auto& o : home.objects) inst.predicate.goals.push_back({o.object_uid, o.cell, o.rotation_bin});
  inst.expert_steps = 2;

  append_words(inst.prompt, vocab, "rearrange then restore to this setup :");
  inst.prompt.elements.push_back(PromptElement::img(scene_frame(home, cfg.sim)));
  append_words(inst.prompt, vocab, ".");
  return inst;
}

}  // namespace mmp::tasks
