#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ovc/layers.hpp"
#include "test_util.hpp"

using namespace ovc;
using ovc::testing::random_matrix;
using ovc::testing::random_vector;

namespace {

GruWeights random_gru(int in, int h, std::mt19937_64& rng) {
  GruWeights w = GruWeights::zeros(in, h);
  w.w_x = random_matrix(3 * h, in, rng, 0.5);
  w.w_h = random_matrix(3 * h, h, rng, 0.5);
  w.b_x = random_vector(3 * h, rng, 0.5);
  w.b_h = random_vector(3 * h, rng, 0.5);
  return w;
}

AttentionWeights random_attention(int qd, int kd, int md, std::mt19937_64& rng) {
  AttentionWeights w = AttentionWeights::zeros(qd, kd, md);
  w.w_q = random_matrix(md, qd, rng, 0.5);
  w.w_k = random_matrix(md, kd, rng, 0.5);
  w.w_v = random_matrix(md, kd, rng, 0.5);
  w.w_o = random_matrix(md, md, rng, 0.5);
  w.b_q = random_vector(md, rng, 0.5);
  w.b_k = random_vector(md, rng, 0.5);
  w.b_v = random_vector(md, rng, 0.5);
  w.b_o = random_vector(md, rng, 0.5);
  return w;
}

Scalar sigmoid(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop GRU cell written from the gate equations.
Vector brute_gru(const GruWeights& w, const Vector& x, const Vector& h) {
  const int H = w.hidden();
  Vector out(H);
  for (int i = 0; i < H; ++i) {
    auto gate = [&](int g) {
      Scalar ax = w.b_x(g * H + i), ah = w.b_h(g * H + i);
      for (int k = 0; k < x.size(); ++k) ax += w.w_x(g * H + i, k) * x(k);
      for (int k = 0; k < H; ++k) ah += w.w_h(g * H + i, k) * h(k);
      return std::pair{ax, ah};
    };
    const auto [rx, rh] = gate(0);
    const auto [zx, zh] = gate(1);
    const auto [nx, nh] = gate(2);
    const Scalar r = sigmoid(rx + rh);
    const Scalar z = sigmoid(zx + zh);
    const Scalar n = std::tanh(nx + r * nh);
    out(i) = (1 - z) * n + z * h(i);
  }
  return out;
}

// Per-head loops over explicit dot products and exponentials.
Matrix brute_attention(const AttentionWeights& w, int heads, const Matrix& Q, const Matrix& K, const Matrix& V,
                       std::vector<Matrix>* probs) {
  const int md = w.model_dim();
  const int dh = md / heads;
  const Matrix q = (Q * w.w_q.transpose()).rowwise() + w.b_q.transpose();
  const Matrix k = (K * w.w_k.transpose()).rowwise() + w.b_k.transpose();
  const Matrix v = (V * w.w_v.transpose()).rowwise() + w.b_v.transpose();
  Matrix concat = Matrix::Zero(Q.rows(), md);
  for (int h = 0; h < heads; ++h) {
    Matrix p(Q.rows(), K.rows());
    for (Eigen::Index a = 0; a < Q.rows(); ++a) {
      std::vector<Scalar> scores(static_cast<std::size_t>(K.rows()));
      Scalar mx = -1e300;
      for (Eigen::Index b = 0; b < K.rows(); ++b) {
        Scalar s = 0;
        for (int d = 0; d < dh; ++d) s += q(a, h * dh + d) * k(b, h * dh + d);
        scores[static_cast<std::size_t>(b)] = s / std::sqrt(static_cast<Scalar>(dh));
        mx = std::max(mx, scores[static_cast<std::size_t>(b)]);
      }
      Scalar z = 0;
      for (auto& s : scores) z += (s = std::exp(s - mx));
      for (Eigen::Index b = 0; b < K.rows(); ++b) p(a, b) = scores[static_cast<std::size_t>(b)] / z;
      for (int d = 0; d < dh; ++d) {
        Scalar acc = 0;
        for (Eigen::Index b = 0; b < K.rows(); ++b) acc += p(a, b) * v(b, h * dh + d);
        concat(a, h * dh + d) = acc;
      }
    }
    if (probs) probs->push_back(p);
  }
  return (concat * w.w_o.transpose()).rowwise() + w.b_o.transpose();
}

}  // namespace

TEST(Gru, MatchesScalarOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const GruWeights w = random_gru(3, 5, rng);
    const Vector x = random_vector(3, rng), h = random_vector(5, rng);
    EXPECT_TRUE(gru_forward(w, x, h).isApprox(brute_gru(w, x, h), 1e-12));
  }
}

TEST(Gru, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const GruWeights w = random_gru(3, 4, rng);
  const Vector x = random_vector(3, rng), h = random_vector(4, rng), dh = random_vector(4, rng);
  const auto loss = [&](const GruWeights& ww, const Vector& xx, const Vector& hh) { return dh.dot(gru_forward(ww, xx, hh)); };
  GruCache cache;
  gru_forward(w, x, h, &cache);
  GruWeights g = GruWeights::zeros(3, 4);
  Vector dx, dh_prev;
  gru_backward(w, cache, dh, g, dx, dh_prev);
  const Scalar eps = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Vector xp = x, xm = x;
    xp(i) += eps;
    xm(i) -= eps;
    EXPECT_NEAR(dx(i), (loss(w, xp, h) - loss(w, xm, h)) / (2 * eps), 1e-8);
  }
  for (int i = 0; i < 4; ++i) {
    Vector hp = h, hm = h;
    hp(i) += eps;
    hm(i) -= eps;
    EXPECT_NEAR(dh_prev(i), (loss(w, x, hp) - loss(w, x, hm)) / (2 * eps), 1e-8);
  }
  GruWeights probe = w;
  std::vector<const Scalar*> analytic;
  g.visit("g", [&](const std::string&, auto& t) { analytic.push_back(t.data()); });
  std::size_t k = 0;
  probe.visit("p", [&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const Scalar saved = t.data()[i];
      t.data()[i] = saved + eps;
      const Scalar plus = loss(probe, x, h);
      t.data()[i] = saved - eps;
      const Scalar minus = loss(probe, x, h);
      t.data()[i] = saved;
      EXPECT_NEAR(analytic[k][i], (plus - minus) / (2 * eps), 1e-8);
    }
    ++k;
  });
}

TEST(Attention, MatchesBruteForceOracle) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const int heads = 1 + t % 3;
    const AttentionWeights w = random_attention(5, 4, 2 * heads, rng);
    const Matrix Q = random_matrix(3, 5, rng), K = random_matrix(4, 4, rng), V = random_matrix(4, 4, rng);
    std::vector<Matrix> p1, p2;
    const Matrix a = attention_forward(w, heads, Q, K, V, nullptr, &p1);
    const Matrix b = brute_attention(w, heads, Q, K, V, &p2);
    EXPECT_TRUE(a.isApprox(b, 1e-12));
    ASSERT_EQ(p1.size(), p2.size());
    for (std::size_t h = 0; h < p1.size(); ++h) EXPECT_TRUE(p1[h].isApprox(p2[h], 1e-12));
  }
}

TEST(Attention, RowsSumToOne) {
  std::mt19937_64 rng(14);
  const AttentionWeights w = random_attention(4, 3, 8, rng);
  std::vector<Matrix> probs;
  attention_forward(w, 4, random_matrix(5, 4, rng, 3.0), random_matrix(7, 3, rng, 3.0), random_matrix(7, 3, rng), nullptr,
                    &probs);
  ASSERT_EQ(probs.size(), 4u);
  for (const auto& p : probs) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  const AttentionWeights w = random_attention(4, 3, 6, rng);
  const Matrix Q = random_matrix(2, 4, rng), K = random_matrix(3, 3, rng), V = random_matrix(3, 3, rng);
  const Matrix G = random_matrix(2, 6, rng);
  const auto loss = [&](const AttentionWeights& ww, const Matrix& q, const Matrix& k, const Matrix& v) {
    return (attention_forward(ww, 2, q, k, v).array() * G.array()).sum();
  };
  AttentionCache cache;
  attention_forward(w, 2, Q, K, V, &cache);
  AttentionWeights g = AttentionWeights::zeros(4, 3, 6);
  Matrix dq, dk, dv;
  attention_backward(w, 2, cache, G, g, &dq, &dk, &dv);
  const Scalar eps = 1e-6;
  const auto check_input = [&](const Matrix& base, const Matrix& analytic, int which) {
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      Matrix p = base, m = base;
      p.data()[i] += eps;
      m.data()[i] -= eps;
      const Scalar fp = which == 0 ? loss(w, p, K, V) : which == 1 ? loss(w, Q, p, V) : loss(w, Q, K, p);
      const Scalar fm = which == 0 ? loss(w, m, K, V) : which == 1 ? loss(w, Q, m, V) : loss(w, Q, K, m);
      EXPECT_NEAR(analytic.data()[i], (fp - fm) / (2 * eps), 1e-8);
    }
  };
  check_input(Q, dq, 0);
  check_input(K, dk, 1);
  check_input(V, dv, 2);
  AttentionWeights probe = w;
  std::vector<const Scalar*> analytic;
  g.visit("g", [&](const std::string&, auto& t) { analytic.push_back(t.data()); });
  std::size_t k = 0;
  probe.visit("p", [&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const Scalar saved = t.data()[i];
      t.data()[i] = saved + eps;
      const Scalar plus = loss(probe, Q, K, V);
      t.data()[i] = saved - eps;
      const Scalar minus = loss(probe, Q, K, V);
      t.data()[i] = saved;
      EXPECT_NEAR(analytic[k][i], (plus - minus) / (2 * eps), 1e-8);
    }
    ++k;
  });
}

TEST(Softmax, StableForLargeLogits) {
  Vector v(3);
  v << 1000, 1000, -1000;
  const Vector p = softmax(v);
  EXPECT_NEAR(p(0), 0.5, 1e-12);
  EXPECT_NEAR(p(2), 0.0, 1e-12);
  EXPECT_TRUE(p.allFinite());
}
