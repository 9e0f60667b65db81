#include <cmath>

#include "sim/sim.hpp"

namespace mmp::sim {

namespace {

// 8x8 silhouettes. Every movable glyph is asymmetric under quarter-turn
// rotation so orientation is always visible in pixels.
constexpr const char* kGlyphs[10][8] = {
    // 0 arrow
    {"00011000", "00111100", "01111110", "00011000", "00011000", "00011000", "00011000", "00000000"},
    // 1 ell
    {"00000000", "00110000", "00110000", "00110000", "00110000", "00111110", "00111110", "00000000"},
    // 2 tee
    {"00000000", "01111110", "01111110", "00011000", "00011000", "00011000", "00011000", "00000000"},
    // 3 vee
    {"00000000", "11000011", "11000011", "01100110", "01100110", "00111100", "00011000", "00000000"},
    // 4 hook
    {"00000000", "00001100", "00001100", "00001100", "01001100", "01101100", "00111100", "00000000"},
    // 5 flag
    {"00000000", "01111100", "01111100", "01111100", "01000000", "01000000", "01000000", "00000000"},
    // 6 wedge
    {"00000000", "01000000", "01100000", "01110000", "01111000", "01111100", "01111110", "00000000"},
    // 7 dagger
    {"00011000", "00011000", "01111110", "00011000", "00011000", "00011000", "00001000", "00000000"},
    // 8 bowl (container)
    {"00000000", "11000011", "11000011", "11000011", "11100111", "01111110", "00111100", "00000000"},
    // 9 tray (container)
    {"00000000", "10000001", "10000001", "10000001", "10000001", "11111111", "11111111", "00000000"},
};

constexpr float kBackground = 0.05f;

bool glyph_filled(int shape_id, int r8, int c8) { return kGlyphs[shape_id][r8][c8] == '1'; }

}  // namespace

std::array<float, 3> texture_color(int texture_id) {
  static const std::array<float, 3> colors[8] = {
      {0.85f, 0.10f, 0.10f},  // red
      {0.10f, 0.75f, 0.15f},  // green
      {0.15f, 0.25f, 0.90f},  // blue
      {0.92f, 0.85f, 0.10f},  // yellow
      {0.55f, 0.15f, 0.75f},  // purple
      {0.95f, 0.55f, 0.10f},  // orange
      {0.10f, 0.80f, 0.85f},  // cyan
      {0.95f, 0.95f, 0.95f},  // white
  };
  return colors[texture_id % 8];
}

std::vector<float> render_object(int shape_id, int texture_id, int rotation_bin, const SimConfig& cfg) {
  if (shape_id < 0 || shape_id >= cfg.total_shapes()) throw std::out_of_range("render_object: shape_id out of range");
  if (texture_id < 0 || texture_id >= cfg.textures) throw std::out_of_range("render_object: texture_id out of range");
  if (rotation_bin < 0 || rotation_bin >= cfg.rotations)
    throw std::out_of_range("render_object: rotation_bin out of range");

  const int k = cfg.patch_k;
  const auto color = texture_color(texture_id);

  // Base frame: silhouette colored with a top-to-bottom shading gradient so
  // rotation stays visible even for near-symmetric silhouettes.
  std::vector<float> base(static_cast<size_t>(k) * k * 3, kBackground);
  for (int r = 0; r < k; ++r) {
    const int r8 = r * 8 / k;
    const float shade = 0.70f + 0.30f * (static_cast<float>(r) / static_cast<float>(k - 1));
    for (int c = 0; c < k; ++c) {
      const int c8 = c * 8 / k;
      if (glyph_filled(shape_id, r8, c8)) {
        float* px = base.data() + (static_cast<size_t>(r) * k + c) * 3;
        px[0] = color[0] * shade;
        px[1] = color[1] * shade;
        px[2] = color[2] * shade;
      }
    }
  }
  if (rotation_bin == 0) return base;

  // Counterclockwise rotation via nearest-neighbor inverse sampling over
  // pixel centers. For quarter turns this reduces to an exact permutation.
  const double theta = 2.0 * 3.141592653589793238462643 * rotation_bin / cfg.rotations;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double half = 0.5 * k;
  std::vector<float> out(static_cast<size_t>(k) * k * 3, kBackground);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const double x = c + 0.5 - half;
      const double y = half - (r + 0.5);
      const double xs = x * cs + y * sn;
      const double ys = -x * sn + y * cs;
      const int ci = static_cast<int>(std::lround(xs + half - 0.5));
      const int ri = static_cast<int>(std::lround(half - ys - 0.5));
      if (ri < 0 || ri >= k || ci < 0 || ci >= k) continue;
      const float* src = base.data() + (static_cast<size_t>(ri) * k + ci) * 3;
      float* dst = out.data() + (static_cast<size_t>(r) * k + c) * 3;
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  }
  return out;
}

std::array<float, 4> cell_bbox(const Cell& cell, int patch_k) {
  const float k = static_cast<float>(patch_k);
  return {static_cast<float>(cell.col) * k, static_cast<float>(cell.row) * k, static_cast<float>(cell.col + 1) * k,
          static_cast<float>(cell.row + 1) * k};
}

}  // namespace mmp::sim
