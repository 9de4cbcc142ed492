#pragma once

// Forward/backward primitives of the translator: a GRU cell and multi-head
// scaled dot-product attention. Sequences are stored one item per row.

#include <random>
#include <vector>

#include "ovc/core_types.hpp"

namespace ovc {

/// r, z, n gates stacked in that order (3h rows).
struct GruWeights {
  Matrix w_x;  // 3h x in
  Matrix w_h;  // 3h x h
  Vector b_x;  // 3h
  Vector b_h;  // 3h

  static GruWeights zeros(int input, int hidden);
  int hidden() const { return static_cast<int>(w_h.cols()); }
  int input() const { return static_cast<int>(w_x.cols()); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_x", w_x);
    f(prefix + ".w_h", w_h);
    f(prefix + ".b_x", b_x);
    f(prefix + ".b_h", b_h);
  }
};

struct GruCache {
  Vector x, h_prev, r, z, n, gh_n;
};

/// h' = (1 - z) * n + z * h with
///   r = sigmoid(W_xr x + b_xr + W_hr h + b_hr)
///   z = sigmoid(W_xz x + b_xz + W_hz h + b_hz)
///   n = tanh(W_xn x + b_xn + r * (W_hn h + b_hn))
Vector gru_forward(const GruWeights& w, const Vector& x, const Vector& h, GruCache* cache = nullptr);

/// Accumulates parameter gradients into `grad`; writes input and previous-state
/// gradients to `dx` and `dh_prev` (overwritten, not accumulated).
void gru_backward(const GruWeights& w, const GruCache& cache, const Vector& dh, GruWeights& grad, Vector& dx,
                  Vector& dh_prev);

struct AttentionWeights {
  Matrix w_q, w_k, w_v, w_o;  // out x in
  Vector b_q, b_k, b_v, b_o;

  static AttentionWeights zeros(int query_dim, int key_dim, int model_dim);
  int model_dim() const { return static_cast<int>(w_o.rows()); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_q", w_q);
    f(prefix + ".b_q", b_q);
    f(prefix + ".w_k", w_k);
    f(prefix + ".b_k", b_k);
    f(prefix + ".w_v", w_v);
    f(prefix + ".b_v", b_v);
    f(prefix + ".w_o", w_o);
    f(prefix + ".b_o", b_o);
  }
};

struct AttentionCache {
  Matrix query, key, value;   // inputs
  Matrix q, k, v;             // projections
  std::vector<Matrix> probs;  // per head, a x b
  Matrix concat;
};

/// Returns the a x model_dim output; per-head a x b softmax weights go to
/// `weights` when given.
Matrix attention_forward(const AttentionWeights& w, int heads, const Matrix& query, const Matrix& key,
                         const Matrix& value, AttentionCache* cache = nullptr, std::vector<Matrix>* weights = nullptr);

/// Parameter gradients accumulate into `grad`. Input gradients are written to
/// the non-null outputs (overwritten).
void attention_backward(const AttentionWeights& w, int heads, const AttentionCache& cache, const Matrix& d_out,
                        AttentionWeights& grad, Matrix* d_query, Matrix* d_key, Matrix* d_value);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);
Vector softmax(const Vector& logits);

}  // namespace ovc
