#pragma once

#include <cmath>
#include <string>

#include "core/graph.hpp"
#include "core/params.hpp"

namespace mmp::model {

// Pre-norm transformer block shared by the prompt encoder (no mask) and the
// policy decoder (additive attention mask).
struct BlockParams {
  int ln1_g, ln1_b;
  int wq, bq, wk, bk, wv, bv, wo, bo;
  int ln2_g, ln2_b;
  int w1, b1, w2, b2;
};

inline BlockParams register_block(core::ParamStore& ps, const std::string& prefix, int d, uint64_t seed) {
  using Init = core::ParamStore::Init;
  const double w_std = 0.02;
  BlockParams bp;
  bp.ln1_g = ps.add(prefix + ".ln1.g", 1, d, Init::Ones, 0, seed);
  bp.ln1_b = ps.add(prefix + ".ln1.b", 1, d, Init::Zeros, 0, seed);
  bp.wq = ps.add(prefix + ".attn.wq", d, d, Init::Normal, w_std, seed);
  bp.bq = ps.add(prefix + ".attn.bq", 1, d, Init::Zeros, 0, seed);
  bp.wk = ps.add(prefix + ".attn.wk", d, d, Init::Normal, w_std, seed);
  bp.bk = ps.add(prefix + ".attn.bk", 1, d, Init::Zeros, 0, seed);
  bp.wv = ps.add(prefix + ".attn.wv", d, d, Init::Normal, w_std, seed);
  bp.bv = ps.add(prefix + ".attn.bv", 1, d, Init::Zeros, 0, seed);
  bp.wo = ps.add(prefix + ".attn.wo", d, d, Init::Normal, w_std, seed);
  bp.bo = ps.add(prefix + ".attn.bo", 1, d, Init::Zeros, 0, seed);
  bp.ln2_g = ps.add(prefix + ".ln2.g", 1, d, Init::Ones, 0, seed);
  bp.ln2_b = ps.add(prefix + ".ln2.b", 1, d, Init::Zeros, 0, seed);
  bp.w1 = ps.add(prefix + ".mlp.w1", d, 4 * d, Init::Normal, w_std, seed);
  bp.b1 = ps.add(prefix + ".mlp.b1", 1, 4 * d, Init::Zeros, 0, seed);
  bp.w2 = ps.add(prefix + ".mlp.w2", 4 * d, d, Init::Normal, w_std, seed);
  bp.b2 = ps.add(prefix + ".mlp.b2", 1, d, Init::Zeros, 0, seed);
  return bp;
}

// x: L x d. mask < 0 means bidirectional; otherwise an L x L additive mask
// node (0 visible, large negative hidden).
inline int transformer_block(core::Graph& g, const core::ParamStore& ps, const BlockParams& bp, int x, int mask,
                             int heads, float dropout) {
  const int d = g.cols(x);
  const int dh = d / heads;
  auto p = [&](int slot) { return g.param(slot, ps.at(slot)); };

  const int xn = g.layer_norm(x, p(bp.ln1_g), p(bp.ln1_b));
  const int q = g.add_row(g.matmul(xn, p(bp.wq)), p(bp.bq));
  const int k = g.add_row(g.matmul(xn, p(bp.wk)), p(bp.bk));
  const int v = g.add_row(g.matmul(xn, p(bp.wv)), p(bp.bv));

  std::vector<int> ctx;
  for (int h = 0; h < heads; ++h) {
    const int qh = g.slice_cols(q, h * dh, (h + 1) * dh);
    const int kh = g.slice_cols(k, h * dh, (h + 1) * dh);
    const int vh = g.slice_cols(v, h * dh, (h + 1) * dh);
    int att = g.scale(g.matmul(qh, kh, false, true), 1.0f / std::sqrt(static_cast<float>(dh)));
    if (mask >= 0) att = g.add(att, mask);
    ctx.push_back(g.matmul(g.softmax_rows(att), vh));
  }
  const int merged = heads == 1 ? ctx[0] : g.concat_cols(ctx);
  const int attn_out = g.add_row(g.matmul(merged, p(bp.wo)), p(bp.bo));
  int h1 = g.add(x, g.dropout(attn_out, dropout));

  const int hn = g.layer_norm(h1, p(bp.ln2_g), p(bp.ln2_b));
  const int mid = g.gelu(g.add_row(g.matmul(hn, p(bp.w1)), p(bp.b1)));
  const int mlp_out = g.add_row(g.matmul(mid, p(bp.w2)), p(bp.b2));
  return g.add(h1, g.dropout(mlp_out, dropout));
}

}  // namespace mmp::model
