#include "model/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace mmp::model {

using core::Graph;
using core::ParamStore;

TokenizedPrompt tokenize_prompt(const tasks::MultimodalPrompt& prompt, const Vocabulary& vocab) {
  TokenizedPrompt tok;
  for (const auto& e : prompt.elements) {
    if (e.is_word) {
      TokenizedPrompt::Item it;
      it.is_word = true;
      it.word_id = e.word_id >= 0 && e.word_id < vocab.size() ? e.word_id : vocab.unk_id();
      tok.items.push_back(it);
      tok.visual.push_back(false);
    } else {
      for (const auto& v : e.image.views) {
        TokenizedPrompt::Item it;
        it.is_word = false;
        it.view = &v;
        tok.items.push_back(it);
        tok.visual.push_back(true);
      }
    }
  }
  return tok;
}

ObjectEncoder::ObjectEncoder(ParamStore& ps, const EncoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
  using Init = ParamStore::Init;
  if (cfg.d % 4 != 0) throw std::invalid_argument("object encoder: d must be divisible by 4");
  const int in = cfg.patch_k * cfg.patch_k * 3;
  const int hp = 2 * cfg.d;
  const int dp = 3 * cfg.d / 4;
  const int db = cfg.d / 4;
  const double w_std = 0.02;
  patch_w1_ = ps.add("obj_enc.patch.w1", in, hp, Init::Normal, w_std, seed);
  patch_b1_ = ps.add("obj_enc.patch.b1", 1, hp, Init::Zeros, 0, seed);
  patch_w2_ = ps.add("obj_enc.patch.w2", hp, dp, Init::Normal, w_std, seed);
  patch_b2_ = ps.add("obj_enc.patch.b2", 1, dp, Init::Zeros, 0, seed);
  bbox_w1_ = ps.add("obj_enc.bbox.w1", kBboxFeatures, db, Init::Normal, 0.1, seed);
  bbox_b1_ = ps.add("obj_enc.bbox.b1", 1, db, Init::Zeros, 0, seed);
  bbox_w2_ = ps.add("obj_enc.bbox.w2", db, db, Init::Normal, 0.1, seed);
  bbox_b2_ = ps.add("obj_enc.bbox.b2", 1, db, Init::Zeros, 0, seed);
  fuse_w1_ = ps.add("obj_enc.fuse.w1", cfg.d, cfg.d, Init::Normal, w_std, seed);
  fuse_b1_ = ps.add("obj_enc.fuse.b1", 1, cfg.d, Init::Zeros, 0, seed);
  fuse_w2_ = ps.add("obj_enc.fuse.w2", cfg.d, cfg.d, Init::Normal, w_std, seed);
  fuse_b2_ = ps.add("obj_enc.fuse.b2", 1, cfg.d, Init::Zeros, 0, seed);
}

int ObjectEncoder::encode_views(Graph& g, const ParamStore& ps,
                                const std::vector<const sim::ObjectView*>& views) const {
  if (views.empty()) throw std::invalid_argument("encode_views: empty view list");
  const int n = static_cast<int>(views.size());
  const int in = cfg_.patch_k * cfg_.patch_k * 3;
  std::vector<float> patches(static_cast<size_t>(n) * in);
  std::vector<float> bboxes(static_cast<size_t>(n) * kBboxFeatures);
  const float px_w = static_cast<float>(cfg_.board_w * cfg_.patch_k);
  const float px_h = static_cast<float>(cfg_.board_h * cfg_.patch_k);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(views[i]->patch.size()) != in)
      throw std::invalid_argument("encode_views: patch size mismatch");
    std::copy(views[i]->patch.begin(), views[i]->patch.end(), patches.begin() + static_cast<size_t>(i) * in);
    const float norm[4] = {views[i]->bbox[0] / px_w, views[i]->bbox[1] / px_h, views[i]->bbox[2] / px_w,
                           views[i]->bbox[3] / px_h};
    // Raw normalized coords plus sinusoidal features; the harmonics make
    // grid cells linearly separable for the downstream heads.
    float* f = bboxes.data() + static_cast<size_t>(i) * kBboxFeatures;
    int w = 0;
    for (int c = 0; c < 4; ++c) f[w++] = norm[c];
    for (const float freq : {1.0f, 2.0f, 4.0f, 8.0f}) {
      for (int c = 0; c < 4; ++c) {
        f[w++] = std::sin(6.2831853f * freq * norm[c]);
        f[w++] = std::cos(6.2831853f * freq * norm[c]);
      }
    }
  }
  auto p = [&](int slot) { return g.param(slot, ps.at(slot)); };
  const int patch_in = g.input(n, in, patches.data());
  const int bbox_in = g.input(n, kBboxFeatures, bboxes.data());
  const int pe = g.add_row(g.matmul(g.relu(g.add_row(g.matmul(patch_in, p(patch_w1_)), p(patch_b1_))), p(patch_w2_)),
                           p(patch_b2_));
  const int be =
      g.add_row(g.matmul(g.relu(g.add_row(g.matmul(bbox_in, p(bbox_w1_)), p(bbox_b1_))), p(bbox_w2_)), p(bbox_b2_));
  const int cat = g.concat_cols({pe, be});
  return g.add_row(g.matmul(g.relu(g.add_row(g.matmul(cat, p(fuse_w1_)), p(fuse_b1_))), p(fuse_w2_)), p(fuse_b2_));
}

PromptEncoder::PromptEncoder(ParamStore& ps, const EncoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
  using Init = ParamStore::Init;
  if (cfg.d % cfg.lm_heads != 0) throw std::invalid_argument("prompt encoder: d must be divisible by lm_heads");
  if (cfg.vocab_size <= 0) throw std::invalid_argument("prompt encoder: vocab_size must be set");
  word_emb_ = ps.add("lm.word_emb", cfg.vocab_size, cfg.d, Init::Normal, 0.02, seed);
  pos_emb_ = ps.add("lm.pos_emb", cfg.max_prompt_len, cfg.d, Init::Normal, 0.02, seed);
  for (int l = 0; l < cfg.lm_layers; ++l)
    blocks_.push_back(register_block(ps, "lm.layer" + std::to_string(l), cfg.d, seed));
  final_g_ = ps.add("lm.final.g", 1, cfg.d, Init::Ones, 0, seed);
  final_b_ = ps.add("lm.final.b", 1, cfg.d, Init::Zeros, 0, seed);
}

int PromptEncoder::encode(Graph& g, const ParamStore& ps, const TokenizedPrompt& tok, const ObjectEncoder& obj_enc,
                          PromptMode mode, float dropout) const {
  const int p_len = tok.length();
  if (p_len == 0) throw std::invalid_argument("prompt_encode: empty prompt");
  if (p_len > cfg_.max_prompt_len)
    throw std::invalid_argument("prompt_encode: prompt length " + std::to_string(p_len) + " exceeds max " +
                                std::to_string(cfg_.max_prompt_len));

  // Contiguous word/visual segments keep the graph small.
  std::vector<int> segments;          // node per segment
  std::vector<int> visual_segments;   // node per visual segment, in order
  size_t i = 0;
  while (i < tok.items.size()) {
    const bool vis = tok.visual[i];
    size_t j = i;
    while (j < tok.items.size() && tok.visual[j] == vis) ++j;
    if (vis) {
      std::vector<const sim::ObjectView*> views;
      for (size_t k = i; k < j; ++k) views.push_back(&tok.items[k].view->view);
      const int node = obj_enc.encode_views(g, ps, views);
      segments.push_back(node);
      visual_segments.push_back(node);
    } else {
      std::vector<int> ids;
      for (size_t k = i; k < j; ++k) ids.push_back(tok.items[k].word_id);
      segments.push_back(g.embed(g.param(word_emb_, ps.at(word_emb_)), ids));
    }
    i = j;
  }
  const int inputs = segments.size() == 1 ? segments[0] : g.concat_rows(segments);

  int x = g.add(inputs, g.slice_rows(g.param(pos_emb_, ps.at(pos_emb_)), 0, p_len));
  for (const auto& bp : blocks_) x = transformer_block(g, ps, bp, x, -1, cfg_.lm_heads, dropout);
  x = g.layer_norm(x, g.param(final_g_, ps.at(final_g_)), g.param(final_b_, ps.at(final_b_)));

  if (mode == PromptMode::LM_PLUS_RC) {
    // Residual addend: the raw input visual tokens at visual positions,
    // exact zeros elsewhere.
    std::vector<int> addend;
    size_t seg = 0;
    size_t vseg = 0;
    i = 0;
    std::vector<float> zeros(static_cast<size_t>(cfg_.max_prompt_len) * cfg_.d, 0.0f);
    while (i < tok.items.size()) {
      const bool vis = tok.visual[i];
      size_t j = i;
      while (j < tok.items.size() && tok.visual[j] == vis) ++j;
      if (vis)
        addend.push_back(visual_segments[vseg++]);
      else
        addend.push_back(g.input(static_cast<int>(j - i), cfg_.d, zeros.data()));
      ++seg;
      i = j;
    }
    x = g.add(x, addend.size() == 1 ? addend[0] : g.concat_rows(addend));
  }
  return x;
}

}  // namespace mmp::model
