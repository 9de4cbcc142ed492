#include "ovc/layers.hpp"

#include <cmath>

namespace ovc {

namespace {

Vector sigmoid(const Vector& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

GruWeights GruWeights::zeros(int input, int hidden) {
  return {Matrix::Zero(3 * hidden, input), Matrix::Zero(3 * hidden, hidden), Vector::Zero(3 * hidden),
          Vector::Zero(3 * hidden)};
}

Vector gru_forward(const GruWeights& w, const Vector& x, const Vector& h, GruCache* cache) {
  const Eigen::Index hd = w.hidden();
  if (x.size() != w.w_x.cols() || h.size() != hd) throw Error("gru_forward: dimension mismatch");
  const Vector gx = w.w_x * x + w.b_x;
  const Vector gh = w.w_h * h + w.b_h;
  const Vector r = sigmoid(gx.segment(0, hd) + gh.segment(0, hd));
  const Vector z = sigmoid(gx.segment(hd, hd) + gh.segment(hd, hd));
  const Vector gh_n = gh.segment(2 * hd, hd);
  const Vector n = (gx.segment(2 * hd, hd).array() + r.array() * gh_n.array()).tanh().matrix();
  Vector out = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
  if (cache) *cache = {x, h, r, z, n, gh_n};
  return out;
}

void gru_backward(const GruWeights& w, const GruCache& c, const Vector& dh, GruWeights& grad, Vector& dx,
                  Vector& dh_prev) {
  const Eigen::Index hd = w.hidden();
  const Vector dn = (dh.array() * (1.0 - c.z.array())).matrix();
  const Vector dz = (dh.array() * (c.h_prev.array() - c.n.array())).matrix();
  const Vector dn_pre = (dn.array() * (1.0 - c.n.array().square())).matrix();
  const Vector dr = (dn_pre.array() * c.gh_n.array()).matrix();
  const Vector dz_pre = (dz.array() * c.z.array() * (1.0 - c.z.array())).matrix();
  const Vector dr_pre = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();

  Vector dgx(3 * hd);
  dgx << dr_pre, dz_pre, dn_pre;
  Vector dgh(3 * hd);
  dgh << dr_pre, dz_pre, (dn_pre.array() * c.r.array()).matrix();

  grad.w_x.noalias() += dgx * c.x.transpose();
  grad.b_x += dgx;
  grad.w_h.noalias() += dgh * c.h_prev.transpose();
  grad.b_h += dgh;
  dx = w.w_x.transpose() * dgx;
  dh_prev = (dh.array() * c.z.array()).matrix() + w.w_h.transpose() * dgh;
}

AttentionWeights AttentionWeights::zeros(int query_dim, int key_dim, int model_dim) {
  return {Matrix::Zero(model_dim, query_dim), Matrix::Zero(model_dim, key_dim), Matrix::Zero(model_dim, key_dim),
          Matrix::Zero(model_dim, model_dim), Vector::Zero(model_dim),        Vector::Zero(model_dim),
          Vector::Zero(model_dim),            Vector::Zero(model_dim)};
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Vector softmax(const Vector& logits) {
  const Scalar mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

Matrix attention_forward(const AttentionWeights& w, int heads, const Matrix& query, const Matrix& key,
                         const Matrix& value, AttentionCache* cache, std::vector<Matrix>* weights) {
  const int dm = w.model_dim();
  if (heads <= 0 || dm % heads != 0) throw Error("attention: model dimension not divisible by head count");
  if (query.cols() != w.w_q.cols() || key.cols() != w.w_k.cols() || value.cols() != w.w_v.cols()) {
    throw Error("attention: input dimension mismatch");
  }
  if (key.rows() != value.rows()) throw Error("attention: key and value counts differ");
  if (key.rows() == 0) throw Error("attention: empty key set");

  const int dh = dm / heads;
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(dh));
  Matrix q = query * w.w_q.transpose();
  q.rowwise() += w.b_q.transpose();
  Matrix k = key * w.w_k.transpose();
  k.rowwise() += w.b_k.transpose();
  Matrix v = value * w.w_v.transpose();
  v.rowwise() += w.b_v.transpose();

  Matrix concat(query.rows(), dm);
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = softmax_rows(scale * (qh * kh.transpose()));
    concat.middleCols(h * dh, dh).noalias() = probs[static_cast<std::size_t>(h)] * v.middleCols(h * dh, dh);
  }
  Matrix out = concat * w.w_o.transpose();
  out.rowwise() += w.b_o.transpose();

  if (weights) *weights = probs;
  if (cache) {
    cache->query = query;
    cache->key = key;
    cache->value = value;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

void attention_backward(const AttentionWeights& w, int heads, const AttentionCache& c, const Matrix& d_out,
                        AttentionWeights& grad, Matrix* d_query, Matrix* d_key, Matrix* d_value) {
  const int dm = w.model_dim();
  const int dh = dm / heads;
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(dh));

  grad.b_o += d_out.colwise().sum().transpose();
  grad.w_o.noalias() += d_out.transpose() * c.concat;
  const Matrix d_concat = d_out * w.w_o;

  Matrix dq(c.q.rows(), dm), dk(c.k.rows(), dm), dv(c.v.rows(), dm);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[static_cast<std::size_t>(h)];
    const auto d_oh = d_concat.middleCols(h * dh, dh);
    const Matrix dp = d_oh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * d_oh;
    Matrix ds = p.array() * (dp.colwise() - (dp.array() * p.array()).rowwise().sum().matrix()).array();
    ds *= scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }

  grad.w_q.noalias() += dq.transpose() * c.query;
  grad.b_q += dq.colwise().sum().transpose();
  grad.w_k.noalias() += dk.transpose() * c.key;
  grad.b_k += dk.colwise().sum().transpose();
  grad.w_v.noalias() += dv.transpose() * c.value;
  grad.b_v += dv.colwise().sum().transpose();
  if (d_query) *d_query = dq * w.w_q;
  if (d_key) *d_key = dk * w.w_k;
  if (d_value) *d_value = dv * w.w_v;
}

}  // namespace ovc
