#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "core/rng.hpp"
#include "sim/sim.hpp"

using namespace mmp::sim;
using mmp::core::Rng;

namespace {

SimConfig default_cfg() { return SimConfig{}; }

SceneSpec full_pool_spec(int n) {
  SceneSpec spec;
  spec.n_objects = n;
  for (int i = 0; i < 8; ++i) {
    spec.shape_pool.push_back(i);
    spec.texture_pool.push_back(i);
  }
  return spec;
}

// Independent quarter-turn oracle: 90 degrees counterclockwise about the
// patch center maps out(r, c) = in(c, K-1-r).
std::vector<float> rot90_ccw(const std::vector<float>& img, int k) {
  std::vector<float> out(img.size());
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c)
      for (int ch = 0; ch < 3; ++ch)
        out[(static_cast<size_t>(r) * k + c) * 3 + ch] = img[(static_cast<size_t>(c) * k + (k - 1 - r)) * 3 + ch];
  return out;
}

}  // namespace

TEST_CASE("reset: deterministic given (seed, spec)") {
  const auto cfg = default_cfg();
  const auto spec = full_pool_spec(5);
  CHECK(reset(123, cfg, spec) == reset(123, cfg, spec));
  CHECK_FALSE(reset(123, cfg, spec) == reset(124, cfg, spec));
}

TEST_CASE("reset: zero objects gives an empty scene") {
  const auto scene = reset(9, default_cfg(), full_pool_spec(0));
  CHECK(scene.objects.empty());
  CHECK(scene.board_w == 8);
}

TEST_CASE("reset: over-capacity request is an error") {
  CHECK_THROWS(reset(1, default_cfg(), full_pool_spec(65)));
}

TEST_CASE("reset: asset draws are uniform within 3 sigma over 10k draws") {
  const auto cfg = default_cfg();
  const auto spec = full_pool_spec(1);
  std::map<int, int> shape_counts, texture_counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto scene = reset(1000 + static_cast<uint64_t>(i), cfg, spec);
    shape_counts[scene.objects[0].shape_id]++;
    texture_counts[scene.objects[0].texture_id]++;
  }
  const double p = 1.0 / 8.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (const auto& [id, count] : shape_counts) {
    INFO("shape " << id);
    CHECK(std::fabs(count - n * p) < 3 * sigma);
  }
  for (const auto& [id, count] : texture_counts) {
    INFO("texture " << id);
    CHECK(std::fabs(count - n * p) < 3 * sigma);
  }
}

TEST_CASE("render: repeated calls are bitwise identical") {
  const auto cfg = default_cfg();
  CHECK(render_object(3, 2, 1, cfg) == render_object(3, 2, 1, cfg));
}

TEST_CASE("render: rotation bin 1 equals the exact 90-degree pixel rotation") {
  const auto cfg = default_cfg();
  for (int s = 0; s < cfg.total_shapes(); ++s) {
    for (int t = 0; t < 2; ++t) {
      const auto base = render_object(s, t, 0, cfg);
      INFO("shape " << s << " texture " << t);
      CHECK(render_object(s, t, 1, cfg) == rot90_ccw(base, cfg.patch_k));
      CHECK(render_object(s, t, 2, cfg) == rot90_ccw(rot90_ccw(base, cfg.patch_k), cfg.patch_k));
    }
  }
}

TEST_CASE("render: distinct (shape, texture) pairs yield distinct images") {
  const auto cfg = default_cfg();
  std::set<std::vector<float>> images;
  for (int s = 0; s < cfg.total_shapes(); ++s)
    for (int t = 0; t < cfg.textures; ++t) images.insert(render_object(s, t, 0, cfg));
  CHECK(images.size() == static_cast<size_t>(cfg.total_shapes() * cfg.textures));
}

TEST_CASE("render: every movable glyph is rotation-asymmetric") {
  const auto cfg = default_cfg();
  for (int s = 0; s < cfg.shapes; ++s) {
    std::set<std::vector<float>> rots;
    for (int r = 0; r < cfg.rotations; ++r) rots.insert(render_object(s, 0, r, cfg));
    INFO("shape " << s);
    CHECK(rots.size() == static_cast<size_t>(cfg.rotations));
  }
}

TEST_CASE("step: empty pick leaves the scene unchanged") {
  const auto cfg = default_cfg();
  const auto scene = reset(5, cfg, full_pool_spec(2));
  Cell empty_cell{};
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      if (scene.object_at({r, c}) < 0) empty_cell = {r, c};
  const auto [next, flag] = step(scene, {empty_cell, 0, {0, 0}, 0}, cfg);
  CHECK(flag == StepFlag::EMPTY_PICK);
  CHECK(next == scene);
}

TEST_CASE("step: move with rotation, verified by state inspection") {
  const auto cfg = default_cfg();
  Scene scene;
  scene.board_w = scene.board_h = 8;
  scene.objects.push_back({4, 1, 2, {2, 3}, 0});
  const auto [next, flag] = step(scene, {{2, 3}, 0, {4, 4}, 1}, cfg);
  CHECK(flag == StepFlag::OK);
  REQUIRE(next.objects.size() == 1);
  CHECK(next.objects[0].cell == Cell{4, 4});
  CHECK(next.objects[0].rotation_bin == 3);
  CHECK(next.objects[0].shape_id == 4);
  CHECK(next.objects[0].texture_id == 1);
}

TEST_CASE("step: blocked place leaves the scene unchanged") {
  const auto cfg = default_cfg();
  Scene scene;
  scene.board_w = scene.board_h = 8;
  scene.objects.push_back({0, 0, 0, {1, 1}, 0});
  scene.objects.push_back({1, 1, 0, {2, 2}, 1});
  const auto [next, flag] = step(scene, {{1, 1}, 0, {2, 2}, 0}, cfg);
  CHECK(flag == StepFlag::BLOCKED_PLACE);
  CHECK(next == scene);
}

TEST_CASE("step: placing on the pick cell rotates in place") {
  const auto cfg = default_cfg();
  Scene scene;
  scene.board_w = scene.board_h = 8;
  scene.objects.push_back({0, 0, 3, {5, 5}, 0});
  const auto [next, flag] = step(scene, {{5, 5}, 0, {5, 5}, 2}, cfg);
  CHECK(flag == StepFlag::OK);
  CHECK(next.objects[0].cell == Cell{5, 5});
  CHECK(next.objects[0].rotation_bin == 1);  // (3 + 2) mod 4
}

TEST_CASE("step: out-of-bounds cells are errors, not flags") {
  const auto cfg = default_cfg();
  const auto scene = reset(5, cfg, full_pool_spec(1));
  CHECK_THROWS(step(scene, {{-1, 0}, 0, {0, 0}, 0}, cfg));
  CHECK_THROWS(step(scene, {{0, 0}, 0, {0, 8}, 0}, cfg));
}

TEST_CASE("step: any legal step conserves the object multiset") {
  const auto cfg = default_cfg();
  Rng rng(31);
  Scene scene = reset(77, cfg, full_pool_spec(6));
  auto multiset = [](const Scene& s) {
    std::multiset<std::pair<int, int>> m;
    for (const auto& o : s.objects) m.insert({o.shape_id, o.texture_id});
    return m;
  };
  const auto before = multiset(scene);
  for (int i = 0; i < 300; ++i) {
    ActionPrim a;
    a.pick = {static_cast<int>(rng.next_below(8)), static_cast<int>(rng.next_below(8))};
    a.place = {static_cast<int>(rng.next_below(8)), static_cast<int>(rng.next_below(8))};
    a.place_rot_bin = static_cast<int>(rng.next_below(4));
    scene = step(scene, a, cfg).first;
    CHECK(multiset(scene) == before);
    CHECK(scene.objects.size() == 6);
  }
}

TEST_CASE("step: R single-bin rotations return to the starting bin") {
  const auto cfg = default_cfg();
  Scene scene;
  scene.board_w = scene.board_h = 8;
  scene.objects.push_back({2, 2, 1, {3, 3}, 0});
  Scene s = scene;
  for (int i = 0; i < cfg.rotations; ++i) s = step(s, {{3, 3}, 0, {3, 3}, 1}, cfg).first;
  CHECK(s == scene);
}

TEST_CASE("observe: one view per object, empty scene gives none") {
  const auto cfg = default_cfg();
  CHECK(observe(reset(3, cfg, full_pool_spec(0)), cfg).views.empty());
  const auto scene = reset(3, cfg, full_pool_spec(4));
  CHECK(observe(scene, cfg).views.size() == 4);
}

TEST_CASE("observe: bbox matches the affine cell-to-pixel formula") {
  const auto cfg = default_cfg();
  const auto scene = reset(17, cfg, full_pool_spec(5));
  const auto obs = observe(scene, cfg);
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    // Independent evaluation of the documented map: x = col * K, y = row * K.
    const float k = static_cast<float>(cfg.patch_k);
    CHECK(obs.views[i].bbox[0] == static_cast<float>(o.cell.col) * k);
    CHECK(obs.views[i].bbox[1] == static_cast<float>(o.cell.row) * k);
    CHECK(obs.views[i].bbox[2] == static_cast<float>(o.cell.col + 1) * k);
    CHECK(obs.views[i].bbox[3] == static_cast<float>(o.cell.row + 1) * k);
  }
}

TEST_CASE("observe: patches equal render_object of the current spec") {
  const auto cfg = default_cfg();
  auto scene = reset(21, cfg, full_pool_spec(3));
  scene = step(scene, {scene.objects[0].cell, 0, scene.objects[0].cell, 1}, cfg).first;
  const auto obs = observe(scene, cfg);
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    CHECK(obs.views[i].patch == render_object(o.shape_id, o.texture_id, o.rotation_bin, cfg));
    CHECK(obs.views[i].object_uid == o.object_uid);
  }
}

TEST_CASE("determinism: seed and action sequence fully determine the scene") {
  const auto cfg = default_cfg();
  auto run = [&] {
    Scene s = reset(99, cfg, full_pool_spec(4));
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      ActionPrim a;
      a.pick = {static_cast<int>(rng.next_below(8)), static_cast<int>(rng.next_below(8))};
      a.place = {static_cast<int>(rng.next_below(8)), static_cast<int>(rng.next_below(8))};
      a.place_rot_bin = static_cast<int>(rng.next_below(4));
      s = step(s, a, cfg).first;
    }
    return s;
  };
  CHECK(run() == run());
}
