#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace mmp::sim {

// Grid tabletop world. Cells hold at most one object; motion is a two-pose
// pick-and-place primitive over cells. Movable shape ids live in
// [0, shapes); two reserved container glyphs (bowl, tray) follow at
// shapes and shapes + 1. Containers are ordinary objects; the cells they
// serve are marked separately on the scene as receptacles.
struct SimConfig {
  int board_w = 8;   // columns
  int board_h = 8;   // rows
  int patch_k = 16;  // object patch side, pixels
  int rotations = 4; // rotation bins, 360/rotations degrees each
  int shapes = 8;    // movable shape pool size
  int textures = 8;

  static constexpr int kContainerShapes = 2;
  int total_shapes() const { return shapes + kContainerShapes; }
  int bowl_shape() const { return shapes; }
  int tray_shape() const { return shapes + 1; }
};

void validate(const SimConfig& cfg);

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct ObjectSpec {
  int shape_id = 0;
  int texture_id = 0;
  int rotation_bin = 0;
  Cell cell;
  int object_uid = 0;
  bool operator==(const ObjectSpec&) const = default;
};

struct Scene {
  int board_w = 0;
  int board_h = 0;
  std::vector<ObjectSpec> objects;
  std::vector<Cell> container_cells;

  bool in_bounds(const Cell& c) const { return c.row >= 0 && c.row < board_h && c.col >= 0 && c.col < board_w; }

  // Index into objects, or -1.
  int object_at(const Cell& c) const {
    for (size_t i = 0; i < objects.size(); ++i)
      if (objects[i].cell == c) return static_cast<int>(i);
    return -1;
  }

  bool is_container_cell(const Cell& c) const {
    for (const Cell& cc : container_cells)
      if (cc == c) return true;
    return false;
  }

  const ObjectSpec* object_by_uid(int uid) const {
    for (const auto& o : objects)
      if (o.object_uid == uid) return &o;
    return nullptr;
  }

  bool operator==(const Scene&) const = default;
};

// Two-pose action over cells. pick_rot_bin mirrors the constant initial
// rotation of the underlying primitive: the expert always emits 0 and the
// dynamics ignore the value.
struct ActionPrim {
  Cell pick;
  int pick_rot_bin = 0;
  Cell place;
  int place_rot_bin = 0;
  bool operator==(const ActionPrim&) const = default;
};

enum class StepFlag { OK, EMPTY_PICK, BLOCKED_PLACE };

const char* to_string(StepFlag flag);

struct ObjectView {
  std::vector<float> patch;     // patch_k * patch_k * 3, row-major, [0,1]
  std::array<float, 4> bbox{};  // x_min, y_min, x_max, y_max in pixels
  int object_uid = 0;
  bool operator==(const ObjectView&) const = default;
};

struct Observation {
  std::vector<ObjectView> views;
  bool operator==(const Observation&) const = default;
};

// Scene-generation parameters: which assets may appear and how many objects
// to place. When combo_pool is non-empty, (shape, texture) pairs are drawn
// jointly from it instead of independently from the id pools; the task layer
// uses this to control which combinations a generalization level may see.
// Containers are added by the task layer after reset.
struct SceneSpec {
  int n_objects = 0;
  std::vector<int> shape_pool;
  std::vector<int> texture_pool;
  std::vector<std::pair<int, int>> combo_pool;
  bool distinct_combos = false;
  bool randomize_rotation = true;
};

Scene reset(uint64_t seed, const SimConfig& cfg, const SceneSpec& spec);

std::pair<Scene, StepFlag> step(const Scene& scene, const ActionPrim& action, const SimConfig& cfg);

Observation observe(const Scene& scene, const SimConfig& cfg);

// Deterministic procedural glyph: the base-frame silhouette is colored by
// texture (with a fixed within-object shading gradient) and then rotated
// counterclockwise by rotation_bin * (360 / rotations) degrees. Quarter-turn
// rotations are exact pixel permutations.
std::vector<float> render_object(int shape_id, int texture_id, int rotation_bin, const SimConfig& cfg);

std::array<float, 4> cell_bbox(const Cell& cell, int patch_k);

std::array<float, 3> texture_color(int texture_id);

}  // namespace mmp::sim
