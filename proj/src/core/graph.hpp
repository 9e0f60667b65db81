#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/kernels.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace mmp::core {

enum class Op : uint8_t {
  Input,
  Param,
  MatMul,
  Add,
  AddRow,
  Mul,
  Scale,
  Relu,
  Gelu,
  LayerNorm,
  Embed,
  SoftmaxRows,
  CeLoss,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
  SumAll,
  AddN,
  Dropout,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddRow: return "add_row";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Gelu: return "gelu";
    case Op::LayerNorm: return "layer_norm";
    case Op::Embed: return "embed";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::CeLoss: return "ce_loss";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::SliceCols: return "slice_cols";
    case Op::SumAll: return "sum_all";
    case Op::AddN: return "add_n";
    case Op::Dropout: return "dropout";
  }
  return "?";
}

// Reverse-mode tape over 2-D nodes (vectors are 1 x n, scalars 1 x 1).
// Values and gradients live in bump arenas that keep their capacity across
// reset(), so a graph object can be rebuilt per sample with almost no
// allocation. Node creation order is the topological order; backward walks
// the tape in reverse with fixed serial reductions, making results
// reproducible for identical inputs.
template <typename T>
class GraphT {
public:
  struct Node {
    Op op;
    int rows, cols;
    size_t off;       // value/grad offset (shared between the two arenas)
    size_t scratch;   // scratch offset, or npos
    int a, b, c;      // parents
    int i0, i1;       // op-specific ints (slice bounds, target, flags, slot)
    T f0;             // op-specific scalar
    int ids_off, ids_len;
    bool ng;          // needs grad
  };

  static constexpr size_t npos = static_cast<size_t>(-1);

  void reset() {
    nodes_.clear();
    ids_.clear();
    used_ = 0;
    scratch_used_ = 0;
    param_nodes_.clear();
    param_order_.clear();
  }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  void set_dropout_rng(Rng* rng) { rng_ = rng; }

  int size() const { return static_cast<int>(nodes_.size()); }
  int rows(int id) const { return nodes_[id].rows; }
  int cols(int id) const { return nodes_[id].cols; }
  const T* values(int id) const { return val_.data() + nodes_[id].off; }
  T* values_mut(int id) { return val_.data() + nodes_[id].off; }
  const T* grads(int id) const { return grad_.data() + nodes_[id].off; }
  T scalar(int id) const {
    if (nodes_[id].rows != 1 || nodes_[id].cols != 1) throw std::logic_error("scalar: node is not 1x1");
    return values(id)[0];
  }

  TensorT<T> value_tensor(int id) const {
    const Node& n = nodes_[id];
    return TensorT<T>({n.rows, n.cols}, std::vector<T>(values(id), values(id) + count(n)));
  }

  int input(int r, int c, const T* data) {
    const int id = make(Op::Input, r, c, -1, -1, -1, false);
    std::memcpy(values_mut(id), data, count(nodes_[id]) * sizeof(T));
    check_finite(id);
    return id;
  }

  int input(const TensorT<T>& t) { return input(t.rows(), t.cols(), t.values.data()); }

  // Binds an external parameter tensor; repeated binds of one slot share a node.
  int param(int slot, const TensorT<T>& t) {
    auto it = param_nodes_.find(slot);
    if (it != param_nodes_.end()) return it->second;
    const int id = make(Op::Param, t.rows(), t.cols(), -1, -1, -1, true);
    nodes_[id].i0 = slot;
    std::memcpy(values_mut(id), t.values.data(), count(nodes_[id]) * sizeof(T));
    check_finite(id);
    param_nodes_.emplace(slot, id);
    param_order_.push_back(id);
    return id;
  }

  int matmul(int a, int b, bool ta = false, bool tb = false) {
    const int m = ta ? nodes_[a].cols : nodes_[a].rows;
    const int k = ta ? nodes_[a].rows : nodes_[a].cols;
    const int kb = tb ? nodes_[b].cols : nodes_[b].rows;
    const int n = tb ? nodes_[b].rows : nodes_[b].cols;
    if (k != kb) throw std::invalid_argument("matmul: inner dimension mismatch");
    const int id = make(Op::MatMul, m, n, a, b, -1, needs(a) || needs(b));
    nodes_[id].i0 = (ta ? 1 : 0) | (tb ? 2 : 0);
    kernels::matmul(values(a), values(b), values_mut(id), m, n, k, ta, tb, false);
    check_finite(id);
    return id;
  }

  int add(int a, int b) {
    require_same_shape(a, b, "add");
    const int id = make(Op::Add, nodes_[a].rows, nodes_[a].cols, a, b, -1, needs(a) || needs(b));
    const T* pa = values(a);
    const T* pb = values(b);
    T* po = values_mut(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    check_finite(id);
    return id;
  }

  // a (m x n) + bias (1 x n) broadcast over rows.
  int add_row(int a, int bias) {
    if (nodes_[bias].rows != 1 || nodes_[bias].cols != nodes_[a].cols)
      throw std::invalid_argument("add_row: bias must be 1 x cols(a)");
    const int id = make(Op::AddRow, nodes_[a].rows, nodes_[a].cols, a, bias, -1, needs(a) || needs(bias));
    const T* pa = values(a);
    const T* pb = values(bias);
    T* po = values_mut(id);
    for (int r = 0; r < nodes_[id].rows; ++r)
      for (int c = 0; c < nodes_[id].cols; ++c, ++po, ++pa) *po = *pa + pb[c];
    check_finite(id);
    return id;
  }

  int mul(int a, int b) {
    require_same_shape(a, b, "mul");
    const int id = make(Op::Mul, nodes_[a].rows, nodes_[a].cols, a, b, -1, needs(a) || needs(b));
    const T* pa = values(a);
    const T* pb = values(b);
    T* po = values_mut(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    check_finite(id);
    return id;
  }

  int scale(int a, T f) {
    const int id = make(Op::Scale, nodes_[a].rows, nodes_[a].cols, a, -1, -1, needs(a));
    nodes_[id].f0 = f;
    const T* pa = values(a);
    T* po = values_mut(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] * f;
    check_finite(id);
    return id;
  }

  int relu(int a) {
    const int id = make(Op::Relu, nodes_[a].rows, nodes_[a].cols, a, -1, -1, needs(a));
    const T* pa = values(a);
    T* po = values_mut(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
    check_finite(id);
    return id;
  }

  int gelu(int a) {
    const int id = make(Op::Gelu, nodes_[a].rows, nodes_[a].cols, a, -1, -1, needs(a));
    const T* pa = values(a);
    T* po = values_mut(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i) po[i] = gelu_fwd(pa[i]);
    check_finite(id);
    return id;
  }

  // Row-wise layer normalization with trainable gain/shift (1 x n each).
  int layer_norm(int a, int gamma, int beta, T eps = T(1e-5)) {
    const int n = nodes_[a].cols;
    if (nodes_[gamma].rows != 1 || nodes_[gamma].cols != n || nodes_[beta].rows != 1 || nodes_[beta].cols != n)
      throw std::invalid_argument("layer_norm: gamma/beta must be 1 x cols(a)");
    const int id = make(Op::LayerNorm, nodes_[a].rows, n, a, gamma, beta, needs(a) || needs(gamma) || needs(beta),
                        /*scratch_count=*/2 * static_cast<size_t>(nodes_[a].rows));
    nodes_[id].f0 = eps;
    const T* pa = values(a);
    const T* pg = values(gamma);
    const T* pb = values(beta);
    T* po = values_mut(id);
    T* sc = scratch_mut(id);
    for (int r = 0; r < nodes_[id].rows; ++r) {
      const T* x = pa + static_cast<size_t>(r) * n;
      T mu = T(0);
      for (int j = 0; j < n; ++j) mu += x[j];
      mu /= T(n);
      T var = T(0);
      for (int j = 0; j < n; ++j) {
        const T d = x[j] - mu;
        var += d * d;
      }
      var /= T(n);
      const T rstd = T(1) / std::sqrt(var + eps);
      sc[2 * r] = mu;
      sc[2 * r + 1] = rstd;
      T* y = po + static_cast<size_t>(r) * n;
      for (int j = 0; j < n; ++j) y[j] = (x[j] - mu) * rstd * pg[j] + pb[j];
    }
    check_finite(id);
    return id;
  }

  // Gathers rows of table (V x d) at ids; out is len(ids) x d.
  int embed(int table, const std::vector<int>& ids) {
    const int v = nodes_[table].rows;
    const int d = nodes_[table].cols;
    for (const int i : ids)
      if (i < 0 || i >= v) throw std::out_of_range("embed: id out of range");
    const int id = make(Op::Embed, static_cast<int>(ids.size()), d, table, -1, -1, needs(table));
    put_ids(id, ids);
    const T* pt = values(table);
    T* po = values_mut(id);
    for (size_t r = 0; r < ids.size(); ++r)
      std::memcpy(po + r * d, pt + static_cast<size_t>(ids[r]) * d, sizeof(T) * d);
    check_finite(id);
    return id;
  }

  int softmax_rows(int a) {
    const int id = make(Op::SoftmaxRows, nodes_[a].rows, nodes_[a].cols, a, -1, -1, needs(a));
    const int n = nodes_[a].cols;
    const T* pa = values(a);
    T* po = values_mut(id);
    for (int r = 0; r < nodes_[id].rows; ++r, pa += n, po += n) {
      T m = pa[0];
      for (int j = 1; j < n; ++j)
        if (pa[j] > m) m = pa[j];
      T s = T(0);
      for (int j = 0; j < n; ++j) {
        po[j] = std::exp(pa[j] - m);
        s += po[j];
      }
      const T inv = T(1) / s;
      for (int j = 0; j < n; ++j) po[j] *= inv;
    }
    check_finite(id);
    return id;
  }

  // -log softmax(logits)[target] for a 1 x n logits node.
  int ce_loss(int logits, int target) {
    if (nodes_[logits].rows != 1) throw std::invalid_argument("ce_loss: logits must be 1 x n");
    const int n = nodes_[logits].cols;
    if (target < 0 || target >= n) throw std::out_of_range("ce_loss: target out of range");
    const int id = make(Op::CeLoss, 1, 1, logits, -1, -1, needs(logits), /*scratch_count=*/static_cast<size_t>(n));
    nodes_[id].i0 = target;
    const T* l = values(logits);
    T* p = scratch_mut(id);
    T m = l[0];
    for (int j = 1; j < n; ++j)
      if (l[j] > m) m = l[j];
    T s = T(0);
    for (int j = 0; j < n; ++j) {
      p[j] = std::exp(l[j] - m);
      s += p[j];
    }
    const T inv = T(1) / s;
    for (int j = 0; j < n; ++j) p[j] *= inv;
    values_mut(id)[0] = std::log(s) + m - l[target];
    check_finite(id);
    return id;
  }

  int concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
    const int c = nodes_[parts[0]].cols;
    int r = 0;
    bool ng = false;
    for (const int p : parts) {
      if (nodes_[p].cols != c) throw std::invalid_argument("concat_rows: column mismatch");
      r += nodes_[p].rows;
      ng = ng || needs(p);
    }
    const int id = make(Op::ConcatRows, r, c, -1, -1, -1, ng);
    put_ids(id, parts);
    T* po = values_mut(id);
    for (const int p : parts) {
      std::memcpy(po, values(p), count(nodes_[p]) * sizeof(T));
      po += count(nodes_[p]);
    }
    return id;
  }

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    const int r = nodes_[parts[0]].rows;
    int c = 0;
    bool ng = false;
    for (const int p : parts) {
      if (nodes_[p].rows != r) throw std::invalid_argument("concat_cols: row mismatch");
      c += nodes_[p].cols;
      ng = ng || needs(p);
    }
    const int id = make(Op::ConcatCols, r, c, -1, -1, -1, ng);
    put_ids(id, parts);
    T* po = values_mut(id);
    int off = 0;
    for (const int p : parts) {
      const int pc = nodes_[p].cols;
      const T* pv = values(p);
      for (int i = 0; i < r; ++i)
        std::memcpy(po + static_cast<size_t>(i) * c + off, pv + static_cast<size_t>(i) * pc, sizeof(T) * pc);
      off += pc;
    }
    return id;
  }

  int slice_rows(int a, int r0, int r1) {
    if (r0 < 0 || r1 > nodes_[a].rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    const int id = make(Op::SliceRows, r1 - r0, nodes_[a].cols, a, -1, -1, needs(a));
    nodes_[id].i0 = r0;
    nodes_[id].i1 = r1;
    std::memcpy(values_mut(id), values(a) + static_cast<size_t>(r0) * nodes_[a].cols, count(nodes_[id]) * sizeof(T));
    return id;
  }

  int slice_cols(int a, int c0, int c1) {
    if (c0 < 0 || c1 > nodes_[a].cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    const int id = make(Op::SliceCols, nodes_[a].rows, c1 - c0, a, -1, -1, needs(a));
    nodes_[id].i0 = c0;
    nodes_[id].i1 = c1;
    const int ac = nodes_[a].cols;
    const int oc = c1 - c0;
    const T* pa = values(a);
    T* po = values_mut(id);
    for (int r = 0; r < nodes_[id].rows; ++r)
      std::memcpy(po + static_cast<size_t>(r) * oc, pa + static_cast<size_t>(r) * ac + c0, sizeof(T) * oc);
    return id;
  }

  int sum_all(int a) {
    const int id = make(Op::SumAll, 1, 1, a, -1, -1, needs(a));
    const T* pa = values(a);
    T s = T(0);
    const size_t n = count(nodes_[a]);
    for (size_t i = 0; i < n; ++i) s += pa[i];
    values_mut(id)[0] = s;
    check_finite(id);
    return id;
  }

  int add_n(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("add_n: empty list");
    bool ng = false;
    for (const int p : parts) {
      if (nodes_[p].rows != nodes_[parts[0]].rows || nodes_[p].cols != nodes_[parts[0]].cols)
        throw std::invalid_argument("add_n: shape mismatch");
      ng = ng || needs(p);
    }
    const int id = make(Op::AddN, nodes_[parts[0]].rows, nodes_[parts[0]].cols, -1, -1, -1, ng);
    put_ids(id, parts);
    T* po = values_mut(id);
    const size_t n = count(nodes_[id]);
    std::memset(po, 0, n * sizeof(T));
    for (const int p : parts) {
      const T* pv = values(p);
      for (size_t i = 0; i < n; ++i) po[i] += pv[i];
    }
    check_finite(id);
    return id;
  }

  // Inverted dropout. Identity when not training or rate <= 0.
  int dropout(int a, double rate) {
    if (!training_ || rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    if (rng_ == nullptr) throw std::logic_error("dropout: no rng attached");
    const int id = make(Op::Dropout, nodes_[a].rows, nodes_[a].cols, a, -1, -1, needs(a), count(nodes_[a]));
    nodes_[id].f0 = static_cast<T>(rate);
    const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
    const T* pa = values(a);
    T* po = values_mut(id);
    T* mask = scratch_mut(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i) {
      mask[i] = rng_->next_real() < rate ? T(0) : keep_scale;
      po[i] = pa[i] * mask[i];
    }
    return id;
  }

  void backward(int loss) {
    if (nodes_[loss].rows != 1 || nodes_[loss].cols != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!std::isfinite(static_cast<double>(scalar(loss)))) throw std::runtime_error("backward: loss is not finite");
    std::fill(grad_.begin(), grad_.begin() + static_cast<ptrdiff_t>(used_), T(0));
    grad_mut(loss)[0] = T(1);
    for (int id = loss; id >= 0; --id) {
      const Node& nd = nodes_[id];
      if (!nd.ng || nd.op == Op::Input || nd.op == Op::Param) continue;
      step_backward(id);
    }
  }

  // Visits bound parameters in bind order: f(slot, rows, cols, grad_ptr).
  template <typename F>
  void visit_param_grads(F&& f) const {
    for (const int id : param_order_) {
      const Node& nd = nodes_[id];
      f(nd.i0, nd.rows, nd.cols, grads(id));
    }
  }

private:
  std::vector<Node> nodes_;
  std::vector<T> val_;
  std::vector<T> grad_;
  std::vector<T> scratch_;
  std::vector<int> ids_;
  size_t used_ = 0;
  size_t scratch_used_ = 0;
  std::unordered_map<int, int> param_nodes_;
  std::vector<int> param_order_;
  bool training_ = false;
  Rng* rng_ = nullptr;

  static size_t count(const Node& n) { return static_cast<size_t>(n.rows) * static_cast<size_t>(n.cols); }
  bool needs(int id) const { return nodes_[id].ng; }
  T* grad_mut(int id) { return grad_.data() + nodes_[id].off; }
  T* scratch_mut(int id) { return scratch_.data() + nodes_[id].scratch; }
  const T* scratch_ptr(int id) const { return scratch_.data() + nodes_[id].scratch; }

  int make(Op op, int r, int c, int a, int b, int cc, bool ng, size_t scratch_count = 0) {
    if (r <= 0 || c <= 0) throw std::invalid_argument(std::string(op_name(op)) + ": empty shape");
    Node nd;
    nd.op = op;
    nd.rows = r;
    nd.cols = c;
    nd.off = used_;
    nd.a = a;
    nd.b = b;
    nd.c = cc;
    nd.i0 = 0;
    nd.i1 = 0;
    nd.f0 = T(0);
    nd.ids_off = 0;
    nd.ids_len = 0;
    nd.ng = ng;
    const size_t n = count(nd);
    used_ += n;
    if (val_.size() < used_) {
      val_.resize(used_);
      grad_.resize(used_);
    }
    nd.scratch = npos;
    if (scratch_count > 0) {
      nd.scratch = scratch_used_;
      scratch_used_ += scratch_count;
      if (scratch_.size() < scratch_used_) scratch_.resize(scratch_used_);
    }
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void put_ids(int id, const std::vector<int>& ids) {
    nodes_[id].ids_off = static_cast<int>(ids_.size());
    nodes_[id].ids_len = static_cast<int>(ids.size());
    ids_.insert(ids_.end(), ids.begin(), ids.end());
  }

  const int* node_ids(const Node& n) const { return ids_.data() + n.ids_off; }

  void require_same_shape(int a, int b, const char* what) const {
    if (nodes_[a].rows != nodes_[b].rows || nodes_[a].cols != nodes_[b].cols)
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }

  void check_finite(int id) const {
    const T* p = values(id);
    const size_t n = count(nodes_[id]);
    for (size_t i = 0; i < n; ++i)
      if (!std::isfinite(static_cast<double>(p[i])))
        throw std::runtime_error(std::string("non-finite value produced by op '") + op_name(nodes_[id].op) +
                                 "' (node " + std::to_string(id) + ")");
  }

  static T gelu_fwd(T x) {
    const T k = T(0.7978845608028654);  // sqrt(2/pi)
    const T u = k * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
  }

  static T gelu_bwd(T x) {
    const T k = T(0.7978845608028654);
    const T u = k * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    const T du = k * (T(1) + T(0.134145) * x * x);
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
  }

  void step_backward(int id) {
    const Node& nd = nodes_[id];
    const T* g = grads(id);
    switch (nd.op) {
      case Op::MatMul: {
        const bool ta = (nd.i0 & 1) != 0;
        const bool tb = (nd.i0 & 2) != 0;
        const int m = nd.rows;
        const int n = nd.cols;
        const int k = ta ? nodes_[nd.a].rows : nodes_[nd.a].cols;
        const T* av = values(nd.a);
        const T* bv = values(nd.b);
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a);
          if (!ta)
            kernels::matmul(g, bv, da, m, k, n, false, !tb, true);
          else
            kernels::matmul(bv, g, da, k, m, n, tb, true, true);
        }
        if (needs(nd.b)) {
          T* db = grad_mut(nd.b);
          if (!tb)
            kernels::matmul(av, g, db, k, n, m, !ta, false, true);
          else
            kernels::matmul(g, av, db, n, k, m, true, ta, true);
        }
        break;
      }
      case Op::Add: {
        const size_t n = count(nd);
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a);
          for (size_t i = 0; i < n; ++i) da[i] += g[i];
        }
        if (needs(nd.b)) {
          T* db = grad_mut(nd.b);
          for (size_t i = 0; i < n; ++i) db[i] += g[i];
        }
        break;
      }
      case Op::AddRow: {
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a);
          const size_t n = count(nd);
          for (size_t i = 0; i < n; ++i) da[i] += g[i];
        }
        if (needs(nd.b)) {
          T* db = grad_mut(nd.b);
          for (int r = 0; r < nd.rows; ++r) {
            const T* gr = g + static_cast<size_t>(r) * nd.cols;
            for (int j = 0; j < nd.cols; ++j) db[j] += gr[j];
          }
        }
        break;
      }
      case Op::Mul: {
        const size_t n = count(nd);
        const T* av = values(nd.a);
        const T* bv = values(nd.b);
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a);
          for (size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
        }
        if (needs(nd.b)) {
          T* db = grad_mut(nd.b);
          for (size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
        }
        break;
      }
      case Op::Scale: {
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a);
          const size_t n = count(nd);
          for (size_t i = 0; i < n; ++i) da[i] += g[i] * nd.f0;
        }
        break;
      }
      case Op::Relu: {
        if (needs(nd.a)) {
          const T* av = values(nd.a);
          T* da = grad_mut(nd.a);
          const size_t n = count(nd);
          for (size_t i = 0; i < n; ++i)
            if (av[i] > T(0)) da[i] += g[i];
        }
        break;
      }
      case Op::Gelu: {
        if (needs(nd.a)) {
          const T* av = values(nd.a);
          T* da = grad_mut(nd.a);
          const size_t n = count(nd);
          for (size_t i = 0; i < n; ++i) da[i] += g[i] * gelu_bwd(av[i]);
        }
        break;
      }
      case Op::LayerNorm: {
        const int n = nd.cols;
        const T* av = values(nd.a);
        const T* gv = values(nd.b);
        const T* sc = scratch_ptr(id);
        T* da = needs(nd.a) ? grad_mut(nd.a) : nullptr;
        T* dg = needs(nd.b) ? grad_mut(nd.b) : nullptr;
        T* db = needs(nd.c) ? grad_mut(nd.c) : nullptr;
        for (int r = 0; r < nd.rows; ++r) {
          const T mu = sc[2 * r];
          const T rstd = sc[2 * r + 1];
          const T* x = av + static_cast<size_t>(r) * n;
          const T* gr = g + static_cast<size_t>(r) * n;
          T m1 = T(0), m2 = T(0);
          for (int j = 0; j < n; ++j) {
            const T xh = (x[j] - mu) * rstd;
            const T gh = gr[j] * gv[j];
            m1 += gh;
            m2 += gh * xh;
            if (dg) dg[j] += gr[j] * xh;
            if (db) db[j] += gr[j];
          }
          if (da) {
            m1 /= T(n);
            m2 /= T(n);
            T* dar = da + static_cast<size_t>(r) * n;
            for (int j = 0; j < n; ++j) {
              const T xh = (x[j] - mu) * rstd;
              dar[j] += rstd * (gr[j] * gv[j] - m1 - xh * m2);
            }
          }
        }
        break;
      }
      case Op::Embed: {
        if (needs(nd.a)) {
          T* dt = grad_mut(nd.a);
          const int d = nd.cols;
          const int* ids = node_ids(nd);
          for (int r = 0; r < nd.rows; ++r) {
            T* row = dt + static_cast<size_t>(ids[r]) * d;
            const T* gr = g + static_cast<size_t>(r) * d;
            for (int j = 0; j < d; ++j) row[j] += gr[j];
          }
        }
        break;
      }
      case Op::SoftmaxRows: {
        if (needs(nd.a)) {
          const T* p = values(id);
          T* da = grad_mut(nd.a);
          const int n = nd.cols;
          for (int r = 0; r < nd.rows; ++r) {
            const T* pr = p + static_cast<size_t>(r) * n;
            const T* gr = g + static_cast<size_t>(r) * n;
            T dot = T(0);
            for (int j = 0; j < n; ++j) dot += pr[j] * gr[j];
            T* dar = da + static_cast<size_t>(r) * n;
            for (int j = 0; j < n; ++j) dar[j] += pr[j] * (gr[j] - dot);
          }
        }
        break;
      }
      case Op::CeLoss: {
        if (needs(nd.a)) {
          const T* p = scratch_ptr(id);
          T* da = grad_mut(nd.a);
          const int n = nodes_[nd.a].cols;
          const T g0 = g[0];
          for (int j = 0; j < n; ++j) da[j] += g0 * (p[j] - (j == nd.i0 ? T(1) : T(0)));
        }
        break;
      }
      case Op::ConcatRows: {
        const int* parts = node_ids(nd);
        const T* gp = g;
        for (int i = 0; i < nd.ids_len; ++i) {
          const Node& pn = nodes_[parts[i]];
          if (pn.ng) {
            T* dp = grad_mut(parts[i]);
            const size_t n = count(pn);
            for (size_t j = 0; j < n; ++j) dp[j] += gp[j];
          }
          gp += count(pn);
        }
        break;
      }
      case Op::ConcatCols: {
        const int* parts = node_ids(nd);
        int off = 0;
        for (int i = 0; i < nd.ids_len; ++i) {
          const Node& pn = nodes_[parts[i]];
          if (pn.ng) {
            T* dp = grad_mut(parts[i]);
            for (int r = 0; r < nd.rows; ++r) {
              const T* gr = g + static_cast<size_t>(r) * nd.cols + off;
              T* dr = dp + static_cast<size_t>(r) * pn.cols;
              for (int j = 0; j < pn.cols; ++j) dr[j] += gr[j];
            }
          }
          off += pn.cols;
        }
        break;
      }
      case Op::SliceRows: {
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a) + static_cast<size_t>(nd.i0) * nd.cols;
          const size_t n = count(nd);
          for (size_t i = 0; i < n; ++i) da[i] += g[i];
        }
        break;
      }
      case Op::SliceCols: {
        if (needs(nd.a)) {
          const int ac = nodes_[nd.a].cols;
          T* da = grad_mut(nd.a);
          for (int r = 0; r < nd.rows; ++r) {
            const T* gr = g + static_cast<size_t>(r) * nd.cols;
            T* dr = da + static_cast<size_t>(r) * ac + nd.i0;
            for (int j = 0; j < nd.cols; ++j) dr[j] += gr[j];
          }
        }
        break;
      }
      case Op::SumAll: {
        if (needs(nd.a)) {
          T* da = grad_mut(nd.a);
          const size_t n = count(nodes_[nd.a]);
          const T g0 = g[0];
          for (size_t i = 0; i < n; ++i) da[i] += g0;
        }
        break;
      }
      case Op::AddN: {
        const int* parts = node_ids(nd);
        const size_t n = count(nd);
        for (int i = 0; i < nd.ids_len; ++i) {
          if (nodes_[parts[i]].ng) {
            T* dp = grad_mut(parts[i]);
            for (size_t j = 0; j < n; ++j) dp[j] += g[j];
          }
        }
        break;
      }
      case Op::Dropout: {
        if (needs(nd.a)) {
          const T* mask = scratch_ptr(id);
          T* da = grad_mut(nd.a);
          const size_t n = count(nd);
          for (size_t i = 0; i < n; ++i) da[i] += g[i] * mask[i];
        }
        break;
      }
      case Op::Input:
      case Op::Param:
        break;
    }
  }
};

using Graph = GraphT<float>;
using Graph64 = GraphT<double>;

}  // namespace mmp::core
