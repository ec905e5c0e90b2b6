#include "doctest.h"

#include <cmath>

#include "adlab/graph.hpp"
#include "adlab/linalg.hpp"
#include "adlab/rng.hpp"

using namespace adlab;
using ad::Graph;
using ad::NodeId;

namespace {

Tensor random_tensor(const Shape& s, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s);
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

Tensor random_spd(std::int64_t n, RngStream& rng) {
  Tensor m = random_tensor({n, n}, rng);
  Tensor a = linalg::matmul(m, linalg::transpose(m));
  for (std::int64_t i = 0; i < n; ++i) a.at(i, i) += static_cast<double>(n);
  return a;
}

}  // namespace

TEST_CASE("forward basics") {
  Graph g;
  NodeId x = g.param("x", Tensor::scalar(0.0));
  NodeId y = g.exp(x);
  CHECK(g.forward(y).value() == doctest::Approx(1.0));

  // solve inverts multiply: A (A^{-1} b) = b
  RngStream rng(7);
  Graph g2;
  Tensor A = random_spd(5, rng);
  Tensor b = random_tensor({5}, rng);
  NodeId an = g2.constant(A);
  NodeId bn = g2.constant(b);
  NodeId xs = g2.chol_solve(an, bn);
  NodeId back = g2.matmul(an, g2.reshape(xs, {5, 1}));
  const Tensor& r = g2.forward(back);
  for (std::int64_t i = 0; i < 5; ++i) CHECK(r.at(i, 0) == doctest::Approx(b.at(i)).epsilon(1e-10));
}

TEST_CASE("trace of Cholesky factor product for 2I") {
  Graph g;
  Tensor a = Tensor::identity(3);
  for (auto& v : a.data) v *= 2.0;
  NodeId l = g.cholesky(g.constant(a));
  NodeId prod = g.matmul(l, g.transpose(l));
  NodeId tr = g.sum(g.mul(prod, g.constant(Tensor::identity(3))));
  CHECK(g.forward(tr).value() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("d/dx exp(x) at 0 is 1") {
  Graph g;
  NodeId x = g.param("x", Tensor::scalar(0.0));
  NodeId y = g.exp(x);
  g.forward(y);
  auto grads = g.backward(y);
  CHECK(grads.at("x").value() == doctest::Approx(1.0));
}

TEST_CASE("grad of sum(W x) vs finite differences") {
  RngStream rng(3);
  Graph g;
  Tensor w0 = random_tensor({4, 3}, rng);
  Tensor x0 = random_tensor({3, 1}, rng);
  NodeId w = g.param("W", w0);
  NodeId y = g.sum(g.matmul(w, g.constant(x0)));
  auto report = g.grad_check(y, {"W"}, 1e-5, 1e-4);
  CHECK(report.pass);
  // structure: each row of dW is x broadcast
  g.forward(y);
  auto grads = g.backward(y);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 3; ++j)
      CHECK(grads.at("W").at(i, j) == doctest::Approx(x0.at(j, 0)).epsilon(1e-12));
}

TEST_CASE("gradient through linear solve matches finite differences") {
  RngStream rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    Graph g;
    Tensor m0 = random_tensor({4, 4}, rng);
    Tensor b0 = random_tensor({4}, rng);
    NodeId m = g.param("M", m0);
    NodeId b = g.param("b", b0);
    // A = M M^T + 4 I keeps the solve well conditioned while exercising dA
    NodeId a = g.add(g.matmul(m, g.transpose(m)),
                     g.constant([&] {
                       Tensor t = Tensor::identity(4);
                       for (auto& v : t.data) v *= 4.0;
                       return t;
                     }()));
    NodeId x = g.chol_solve(a, b);
    NodeId loss = g.sum(g.mul(x, g.constant(random_tensor({4}, rng))));
    auto report = g.grad_check(loss, {}, 1e-5, 1e-4);
    CHECK(report.pass);
  }
}

TEST_CASE("linear-solve adjoint identity") {
  // grad_b = A^{-T} gbar and grad_A = -(A^{-T} gbar) x^T for x = A^{-1} b.
  RngStream rng(13);
  Tensor A = random_spd(4, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor c = random_tensor({4}, rng);  // cotangent seed via loss = c . x
  Graph g;
  NodeId an = g.param("A", A);
  NodeId bn = g.param("b", b);
  NodeId x = g.chol_solve(an, bn);
  NodeId loss = g.dot(x, g.constant(c));
  g.forward(loss);
  auto grads = g.backward(loss);

  Tensor xv = linalg::chol_solve(A, b);
  Tensor w = linalg::chol_solve(A, c);  // A symmetric: A^{-T} = A^{-1}
  for (std::int64_t i = 0; i < 4; ++i)
    CHECK(grads.at("b").at(i) == doctest::Approx(w.at(i)).epsilon(1e-9));
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j)
      CHECK(grads.at("A").at(i, j) == doctest::Approx(-w.at(i) * xv.at(j)).epsilon(1e-9));
}

TEST_CASE("every primitive passes finite-difference check") {
  RngStream rng(29);

  SUBCASE("elementwise and reductions") {
    Graph g;
    NodeId a = g.param("a", random_tensor({3, 4}, rng, 0.5, 2.0));
    NodeId b = g.param("b", random_tensor({3, 4}, rng, 0.5, 2.0));
    NodeId t = g.mul(g.add(a, b), g.sub(a, b));
    t = g.add(t, g.exp(g.neg(a)));
    t = g.add(t, g.log(b));
    t = g.add(t, g.recip(b));
    t = g.add(t, g.sigmoid(a));
    NodeId rows = g.mean_axis(t, 1);
    NodeId cols = g.sum_axis(t, 0);
    NodeId loss = g.add(g.mean(rows), g.sum(g.relu(g.add_const(cols, -3.0))));
    loss = g.add(loss, g.scale(g.reduce_max(g.reshape(a, {12})), 0.25));
    CHECK(g.grad_check(loss, {}, 1e-6, 1e-4).pass);
  }

  SUBCASE("matmul transpose concat broadcast") {
    Graph g;
    NodeId a = g.param("a", random_tensor({3, 2}, rng));
    NodeId v = g.param("v", random_tensor({3}, rng));
    NodeId w = g.param("w", random_tensor({2}, rng));
    NodeId m = g.matmul(g.transpose(a), a);
    NodeId s = g.sum(m);
    NodeId cat = g.concat(v, w);
    NodeId loss = g.add(s, g.sum(g.mul(cat, g.broadcast(g.mean(cat), {5}))));
    CHECK(g.grad_check(loss, {}, 1e-6, 1e-4).pass);
  }

  SUBCASE("cholesky and triangular solves") {
    Graph g;
    NodeId m = g.param("m", random_tensor({4, 4}, rng));
    NodeId b = g.param("b", random_tensor({4}, rng));
    NodeId a = g.add(g.matmul(m, g.transpose(m)), g.constant([&] {
                       Tensor t = Tensor::identity(4);
                       for (auto& v : t.data) v *= 4.0;
                       return t;
                     }()));
    NodeId l = g.cholesky(a);
    NodeId y = g.tri_solve(l, b, false);
    NodeId z = g.tri_solve(l, y, true);
    NodeId loss = g.add(g.sum(g.mul(z, b)), g.sum(l));
    CHECK(g.grad_check(loss, {}, 1e-5, 1e-4).pass);
  }

  SUBCASE("softmax and variance helpers") {
    Graph g;
    NodeId x = g.param("x", random_tensor({6}, rng));
    NodeId sm = g.softmax(x, 0.7);
    NodeId loss = g.add(g.variance(sm), g.dot(sm, x));
    CHECK(g.grad_check(loss, {}, 1e-6, 1e-4).pass);
  }
}

TEST_CASE("stop-gradient and step masks give exact zeros") {
  Graph g;
  NodeId x = g.param("x", Tensor::scalar(0.7));
  NodeId blocked = g.mul(g.stop_grad(x), g.constant(Tensor::scalar(3.0)));
  NodeId stepped = g.step_pos(x);
  NodeId loss = g.add(blocked, stepped);
  g.forward(loss);
  auto grads = g.backward(loss);
  CHECK(grads.at("x").value() == 0.0);
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Graph g;
  NodeId x = g.param("x", Tensor::scalar(0.0));
  NodeId y = g.relu(x);
  g.forward(y);
  CHECK(g.backward(y).at("x").value() == 0.0);
}

TEST_CASE("cholesky reconstruction accuracy") {
  RngStream rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_spd(6, rng);
    Tensor l = linalg::cholesky_spd(a).L;
    Tensor rec = linalg::matmul(l, linalg::transpose(l));
    double norm_a = 0, err = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
      norm_a = std::max(norm_a, std::abs(a.data[i]));
      err = std::max(err, std::abs(a.data[i] - rec.data[i]));
    }
    CHECK(err < 1e-10 * norm_a);
  }
}

TEST_CASE("jitter policy recovers semidefinite input and eventually errors") {
  // duplicated rows make the Gram matrix exactly singular
  Tensor a = Tensor::mat(3, 3, {1.0, 1.0, 0.2, 1.0, 1.0, 0.2, 0.2, 0.2, 1.0});
  auto f = linalg::cholesky_spd(a);
  CHECK(f.jitter > 0.0);
  Tensor rec = linalg::matmul(f.L, linalg::transpose(f.L));
  CHECK(rec.at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));

  Tensor indef = Tensor::mat(2, 2, {1.0, 2.0, 2.0, 1.0});
  CHECK_THROWS_AS(linalg::cholesky_spd(indef), std::runtime_error);
}

TEST_CASE("purity: repeated forward/backward identical") {
  RngStream rng(5);
  Graph g;
  NodeId m = g.param("m", random_tensor({3, 3}, rng));
  NodeId a = g.add(g.matmul(m, g.transpose(m)), g.constant([&] {
                     Tensor t = Tensor::identity(3);
                     for (auto& v : t.data) v *= 3.0;
                     return t;
                   }()));
  NodeId loss = g.sum(g.cholesky(a));
  double v1 = g.forward(loss).value();
  auto g1 = g.backward(loss);
  double v2 = g.forward(loss).value();
  auto g2 = g.backward(loss);
  CHECK(v1 == v2);
  for (std::int64_t i = 0; i < 9; ++i) CHECK(g1.at("m").at(i) == g2.at("m").at(i));
}

TEST_CASE("error paths") {
  Graph g;
  NodeId a = g.param("a", Tensor::zeros({2, 3}));
  NodeId b = g.param("b", Tensor::zeros({3, 2}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("node"), std::invalid_argument);

  Graph g2;
  NodeId x = g2.param("x", Tensor::vec({1.0, 2.0}));
  NodeId y = g2.exp(x);
  g2.forward(y);
  CHECK_THROWS_AS(g2.backward(y), std::invalid_argument);  // non-scalar output

  NodeId s = g2.sum(y);
  g2.forward(s);
  g2.exp(s);  // mutate after forward
  CHECK_THROWS_AS(g2.backward(s), std::invalid_argument);

  Graph g3;
  NodeId z = g3.param("z", Tensor::scalar(-1.0));
  NodeId w = g3.log(z);
  CHECK_THROWS_AS(g3.forward(w), std::runtime_error);  // non-finite intermediate
}
