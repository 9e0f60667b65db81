#pragma once

// Finite-difference gradient verification harness. Runs the same graph code
// the trainer uses, instantiated with double, and compares reverse-mode
// gradients against central differences. Independent of the backward pass by
// construction: the numeric side only ever calls forward evaluations.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace gradcheck {

using mmp::core::Graph64;
using mmp::core::Rng;
using mmp::core::Tensor64;

// Builds a scalar loss; must bind params[i] with g.param(i, params[i]).
using BuildFn = std::function<int(Graph64&, const std::vector<Tensor64>&)>;

struct Report {
  double max_rel_err = 0.0;
  std::string where;
};

inline double eval_loss(const BuildFn& build, const std::vector<Tensor64>& params) {
  Graph64 g;
  return g.scalar(build(g, params));
}

// Central differences with step h. Relative error uses
// |a - n| / max(|a|, |n|, 1e-4) so that finite-difference noise on
// near-zero gradients does not dominate.
inline Report check(const BuildFn& build, std::vector<Tensor64> params, double h = 1e-5) {
  Graph64 g;
  const int loss = build(g, params);
  g.backward(loss);
  std::vector<Tensor64> analytic;
  for (const auto& p : params) analytic.push_back(Tensor64::zeros(p.shape));
  g.visit_param_grads([&](int slot, int rows, int cols, const double* grad) {
    (void)rows;
    (void)cols;
    for (size_t i = 0; i < analytic[slot].values.size(); ++i) analytic[slot].values[i] = grad[i];
  });

  Report rep;
  for (size_t p = 0; p < params.size(); ++p) {
    for (size_t i = 0; i < params[p].values.size(); ++i) {
      const double keep = params[p].values[i];
      params[p].values[i] = keep + h;
      const double lp = eval_loss(build, params);
      params[p].values[i] = keep - h;
      const double lm = eval_loss(build, params);
      params[p].values[i] = keep;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[p].values[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.where = "param " + std::to_string(p) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

inline Tensor64 random_tensor(Rng& rng, int rows, int cols, double scale = 0.8) {
  Tensor64 t = Tensor64::zeros({rows, cols});
  for (auto& v : t.values) v = rng.next_normal() * scale;
  return t;
}

// Keeps values away from the relu kink so finite differences stay valid.
inline Tensor64 random_tensor_off_zero(Rng& rng, int rows, int cols) {
  Tensor64 t = random_tensor(rng, rows, cols);
  for (auto& v : t.values)
    if (std::fabs(v) < 0.1) v += v >= 0 ? 0.25 : -0.25;
  return t;
}

struct NamedCase {
  std::string name;
  BuildFn build;
  std::vector<Tensor64> params;
};

// One small graph per supported op. Ops without parameters of their own are
// checked through parameter-carrying inputs.
inline std::vector<NamedCase> per_op_cases(uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedCase> cases;

  auto matmul_case = [&](bool ta, bool tb) {
    std::vector<Tensor64> ps = {random_tensor(rng, 3, 4), random_tensor(rng, 4, 5)};
    if (ta) std::swap(ps[0].shape[0], ps[0].shape[1]);
    if (tb) std::swap(ps[1].shape[0], ps[1].shape[1]);
    cases.push_back({std::string("matmul_") + (ta ? "t" : "n") + (tb ? "t" : "n"),
                     [ta, tb](Graph64& g, const std::vector<Tensor64>& p) {
                       return g.sum_all(g.matmul(g.param(0, p[0]), g.param(1, p[1]), ta, tb));
                     },
                     ps});
  };
  matmul_case(false, false);
  matmul_case(false, true);
  matmul_case(true, false);
  matmul_case(true, true);

  cases.push_back({"add",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     return g.sum_all(g.mul(g.add(g.param(0, p[0]), g.param(1, p[1])), g.param(0, p[0])));
                   },
                   {random_tensor(rng, 3, 3), random_tensor(rng, 3, 3)}});

  cases.push_back({"add_row",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     return g.sum_all(g.gelu(g.add_row(g.param(0, p[0]), g.param(1, p[1]))));
                   },
                   {random_tensor(rng, 4, 3), random_tensor(rng, 1, 3)}});

  cases.push_back({"mul_scale",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     return g.sum_all(g.scale(g.mul(g.param(0, p[0]), g.param(1, p[1])), 1.7));
                   },
                   {random_tensor(rng, 2, 5), random_tensor(rng, 2, 5)}});

  cases.push_back({"relu",
                   [](Graph64& g, const std::vector<Tensor64>& p) { return g.sum_all(g.relu(g.param(0, p[0]))); },
                   {random_tensor_off_zero(rng, 4, 4)}});

  cases.push_back({"gelu",
                   [](Graph64& g, const std::vector<Tensor64>& p) { return g.sum_all(g.gelu(g.param(0, p[0]))); },
                   {random_tensor(rng, 4, 4)}});

  cases.push_back({"layer_norm",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     const int y = g.layer_norm(g.param(0, p[0]), g.param(1, p[1]), g.param(2, p[2]));
                     return g.sum_all(g.mul(y, y));
                   },
                   {random_tensor(rng, 3, 6), random_tensor(rng, 1, 6), random_tensor(rng, 1, 6)}});

  cases.push_back({"embed",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     const int e = g.embed(g.param(0, p[0]), {1, 0, 2, 1});
                     return g.sum_all(g.mul(e, e));
                   },
                   {random_tensor(rng, 4, 3)}});

  cases.push_back({"softmax_rows",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     const int s = g.softmax_rows(g.param(0, p[0]));
                     return g.sum_all(g.mul(s, g.param(1, p[1])));
                   },
                   {random_tensor(rng, 3, 5), random_tensor(rng, 3, 5)}});

  cases.push_back({"ce_loss",
                   [](Graph64& g, const std::vector<Tensor64>& p) { return g.ce_loss(g.param(0, p[0]), 2); },
                   {random_tensor(rng, 1, 6)}});

  cases.push_back({"concat_slice_rows",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     const int cat = g.concat_rows({g.param(0, p[0]), g.param(1, p[1])});
                     const int s = g.slice_rows(cat, 1, 4);
                     return g.sum_all(g.mul(s, s));
                   },
                   {random_tensor(rng, 2, 3), random_tensor(rng, 3, 3)}});

  cases.push_back({"concat_slice_cols",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     const int cat = g.concat_cols({g.param(0, p[0]), g.param(1, p[1])});
                     const int s = g.slice_cols(cat, 1, 4);
                     return g.sum_all(g.mul(s, s));
                   },
                   {random_tensor(rng, 3, 2), random_tensor(rng, 3, 3)}});

  cases.push_back({"add_n",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     const int s = g.add_n({g.param(0, p[0]), g.param(1, p[1]), g.param(0, p[0])});
                     return g.sum_all(g.mul(s, s));
                   },
                   {random_tensor(rng, 2, 4), random_tensor(rng, 2, 4)}});

  cases.push_back({"dropout",
                   [](Graph64& g, const std::vector<Tensor64>& p) {
                     Rng drop(99);
                     g.set_training(true);
                     g.set_dropout_rng(&drop);
                     return g.sum_all(g.mul(g.dropout(g.param(0, p[0]), 0.3), g.param(1, p[1])));
                   },
                   {random_tensor(rng, 4, 4), random_tensor(rng, 4, 4)}});

  return cases;
}

// A small randomized model mixing attention-style and MLP-style pieces:
// embedding lookup, two matmul layers with bias and nonlinearity, layer norm,
// a single-head attention block, and a cross-entropy head.
inline NamedCase composed_model(uint64_t seed) {
  Rng rng(seed);
  const int tokens = 4;
  const int d = 6;
  const int vocab = 7;
  std::vector<Tensor64> ps;
  ps.push_back(random_tensor(rng, vocab, d, 0.5));  // 0: embedding table
  ps.push_back(random_tensor(rng, d, d, 0.5));      // 1: wq
  ps.push_back(random_tensor(rng, d, d, 0.5));      // 2: wk
  ps.push_back(random_tensor(rng, d, d, 0.5));      // 3: wv
  ps.push_back(random_tensor(rng, 1, d, 0.3));      // 4: bias
  ps.push_back(random_tensor(rng, 1, d, 0.5));      // 5: ln gamma
  ps.push_back(random_tensor(rng, 1, d, 0.3));      // 6: ln beta
  ps.push_back(random_tensor(rng, d, 2 * d, 0.5));  // 7: mlp in
  ps.push_back(random_tensor(rng, 2 * d, d, 0.5));  // 8: mlp out
  ps.push_back(random_tensor(rng, d, vocab, 0.5));  // 9: head

  std::vector<int> ids;
  for (int i = 0; i < tokens; ++i) ids.push_back(static_cast<int>(rng.next_below(vocab)));
  const int target = static_cast<int>(rng.next_below(vocab));

  BuildFn build = [ids, target, tokens, d](Graph64& g, const std::vector<Tensor64>& p) {
    const int x0 = g.embed(g.param(0, p[0]), ids);
    const int q = g.matmul(x0, g.param(1, p[1]));
    const int k = g.matmul(x0, g.param(2, p[2]));
    const int v = g.matmul(x0, g.param(3, p[3]));
    const int att = g.scale(g.matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(d)));
    const int probs = g.softmax_rows(att);
    const int ctx = g.add(x0, g.matmul(probs, v));
    const int ln = g.layer_norm(ctx, g.param(5, p[5]), g.param(6, p[6]));
    const int h = g.gelu(g.add_row(g.matmul(ln, g.param(7, p[7])), g.concat_cols({g.param(4, p[4]), g.param(4, p[4])})));
    const int out = g.add(ln, g.matmul(h, g.param(8, p[8])));
    const int pooled = g.slice_rows(out, tokens - 1, tokens);
    const int logits = g.matmul(pooled, g.param(9, p[9]));
    return g.ce_loss(logits, target);
  };
  return {"composed_model_" + std::to_string(seed), build, ps};
}

}  // namespace gradcheck
