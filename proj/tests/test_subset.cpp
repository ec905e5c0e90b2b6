#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "adlab/rng.hpp"
#include "adlab/subset.hpp"

using namespace adlab;
using subset::HardSubset;
using subset::PolicyParams;
using subset::WeightVec;

namespace {

// Independent enumeration of the K-subset law: walk every ordered sequence and
// accumulate the product of sequential ratios. No logs, no library calls.
std::map<std::vector<int>, double> enumerate_subset_law(const std::vector<double>& w, int k) {
  std::map<std::vector<int>, double> probs;
  const int n = static_cast<int>(w.size());
  double total = 0;
  for (double v : w) total += v;
  std::vector<int> seq;
  std::vector<char> used(static_cast<size_t>(n), 0);
  auto rec = [&](auto&& self, double prob, double remaining) -> void {
    if (static_cast<int>(seq.size()) == k) {
      std::vector<int> key = seq;
      std::sort(key.begin(), key.end());
      probs[key] += prob;
      return;
    }
    for (int i = 0; i < n; ++i) {
      if (used[static_cast<size_t>(i)]) continue;
      used[static_cast<size_t>(i)] = 1;
      seq.push_back(i);
      self(self, prob * w[static_cast<size_t>(i)] / remaining, remaining - w[static_cast<size_t>(i)]);
      seq.pop_back();
      used[static_cast<size_t>(i)] = 0;
    }
  };
  rec(rec, 1.0, total);
  return probs;
}

}  // namespace

TEST_CASE("weights from params") {
  PolicyParams p{Tensor::vec({0.0, 0.0, 0.0})};
  WeightVec w = subset::weights_from_params(p);
  for (double v : w.w.data) CHECK(v == doctest::Approx(1.0));

  PolicyParams p2{Tensor::vec({std::log(2.0), 0.0})};
  WeightVec w2 = subset::weights_from_params(p2);
  CHECK(w2.w.at(0) == doctest::Approx(2.0));
  CHECK(w2.w.at(1) == doctest::Approx(1.0));

  PolicyParams big{Tensor::vec({800.0})};
  CHECK(std::isfinite(subset::weights_from_params(big).w.at(0)));

  // dw/dtheta = w, checked through the graph engine
  ad::Graph g;
  ad::NodeId theta = g.param("theta", Tensor::vec({0.3, -0.8, 1.1}));
  ad::NodeId loss = g.sum(g.exp(theta));
  CHECK(g.grad_check(loss, {}, 1e-6, 1e-4).pass);
  g.forward(loss);
  auto grads = g.backward(loss);
  for (std::int64_t i = 0; i < 3; ++i)
    CHECK(grads.at("theta").at(i) == doctest::Approx(std::exp(g.param_value("theta").at(i))));
}

TEST_CASE("wrs sequence log-probability") {
  WeightVec unit{Tensor::vec({1.0, 1.0})};
  CHECK(subset::wrs_sequence_logprob(unit, {0, 1}) == doctest::Approx(std::log(0.5)));

  WeightVec w21{Tensor::vec({2.0, 1.0})};
  CHECK(subset::wrs_sequence_logprob(w21, {0, 1}) == doctest::Approx(std::log(2.0 / 3.0)));

  // all 3! full orderings sum to one
  WeightVec w3{Tensor::vec({0.3, 1.2, 2.5})};
  std::vector<int> perm{0, 1, 2};
  double total = 0;
  do {
    total += std::exp(subset::wrs_sequence_logprob(w3, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(subset::wrs_sequence_logprob(w3, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(subset::wrs_sequence_logprob(w3, {0, 5}), std::invalid_argument);
}

TEST_CASE("wrs sequence gradient vs finite differences") {
  RngStream rng(3);
  Tensor theta = Tensor::vec({0.2, -0.5, 0.9, 0.1});
  std::vector<int> seq{2, 0};
  WeightVec w = subset::weights_from_params({theta});
  Tensor grad = subset::wrs_sequence_logprob_grad_theta(w, seq);
  const double h = 1e-6;
  for (std::int64_t i = 0; i < 4; ++i) {
    Tensor up = theta, dn = theta;
    up.at(i) += h;
    dn.at(i) -= h;
    const double fd = (subset::wrs_sequence_logprob(subset::weights_from_params({up}), seq) -
                       subset::wrs_sequence_logprob(subset::weights_from_params({dn}), seq)) /
                      (2 * h);
    CHECK(grad.at(i) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("subset log-probability") {
  WeightVec uni{Tensor::vec({1.0, 1.0, 1.0})};
  HardSubset s01{{0, 1}, 3};
  CHECK(std::exp(subset::subset_logprob(uni, s01)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // w = (2,1,1), S = first two items: (2/4)(1/2) + (1/4)(2/3) = 5/12
  WeightVec w211{Tensor::vec({2.0, 1.0, 1.0})};
  CHECK(std::exp(subset::subset_logprob(w211, s01)) == doctest::Approx(5.0 / 12.0).epsilon(1e-12));

  // total probability over all C(5,2) subsets
  WeightVec w5{Tensor::vec({5.0, 4.0, 3.0, 2.0, 1.0})};
  double total = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) total += std::exp(subset::subset_logprob(w5, HardSubset{{i, j}, 5}));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));

  HardSubset big{{0, 1, 2, 3, 4, 5, 6, 7, 8}, 9};
  WeightVec w9{Tensor::ones({9})};
  CHECK_THROWS_AS(subset::subset_logprob(w9, big), std::invalid_argument);
}

TEST_CASE("subset score gradient vs finite differences") {
  Tensor theta = Tensor::vec({0.4, -0.2, 0.0, 0.7, -0.9});
  HardSubset s{{1, 3}, 5};
  Tensor grad = subset::subset_logprob_grad_theta(subset::weights_from_params({theta}), s);
  const double h = 1e-6;
  for (std::int64_t i = 0; i < 5; ++i) {
    Tensor up = theta, dn = theta;
    up.at(i) += h;
    dn.at(i) -= h;
    const double fd = (subset::subset_logprob(subset::weights_from_params({up}), s) -
                       subset::subset_logprob(subset::weights_from_params({dn}), s)) /
                      (2 * h);
    CHECK(grad.at(i) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("scale invariance of the subset law") {
  WeightVec w{Tensor::vec({0.5, 1.5, 2.5, 0.7})};
  WeightVec scaled{w.w};
  for (auto& v : scaled.w.data) v *= 37.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      HardSubset s{{i, j}, 4};
      CHECK(std::abs(subset::subset_logprob(w, s) - subset::subset_logprob(scaled, s)) < 1e-12);
    }
}

TEST_CASE("hard subset sampling") {
  RngStream rng(77);
  WeightVec w{Tensor::vec({5.0, 4.0, 3.0, 2.0, 1.0})};

  SUBCASE("K = n selects the whole pool") {
    auto s = subset::sample_hard_subset(w, 5, rng);
    CHECK(s.subset.indices == std::vector<int>{0, 1, 2, 3, 4});
  }

  SUBCASE("sampling law matches the enumeration oracle") {
    auto oracle = enumerate_subset_law({5, 4, 3, 2, 1}, 2);
    std::map<std::vector<int>, int> counts;
    const int draws = 200000;
    for (int d = 0; d < draws; ++d) {
      auto s = subset::sample_hard_subset(w, 2, rng);
      counts[s.subset.indices]++;
    }
    double tv = 0;
    for (const auto& [key, p] : oracle)
      tv += std::abs(p - counts[key] / static_cast<double>(draws));
    tv *= 0.5;
    CHECK(tv < 0.01);
  }

  SUBCASE("a dominant weight is almost always selected") {
    WeightVec dom{Tensor::vec({1e6, 1.0, 1.0, 1.0, 1.0})};
    int hit = 0;
    for (int d = 0; d < 10000; ++d) {
      auto s = subset::sample_hard_subset(dom, 2, rng);
      if (std::find(s.subset.indices.begin(), s.subset.indices.end(), 0) != s.subset.indices.end())
        ++hit;
    }
    CHECK(hit >= 9990);
  }

  SUBCASE("K > n rejected") {
    CHECK_THROWS_AS(subset::sample_hard_subset(w, 6, rng), std::invalid_argument);
  }
}

TEST_CASE("soft K-subset relaxation") {
  RngStream rng(15);

  SUBCASE("single element pool") {
    WeightVec w{Tensor::vec({3.0})};
    Tensor a = subset::soft_k_subset(w, 1, 0.5, Tensor::vec({0.3}));
    CHECK(a.at(0) == doctest::Approx(1.0));
  }

  SUBCASE("sum is exactly K and entries lie in [0,1]") {
    for (int trial = 0; trial < 1000; ++trial) {
      auto r = rng.child(trial);
      const int n = 2 + r.uniform_int(9);
      const int k = 1 + r.uniform_int(n);
      const double tau = std::pow(10.0, -2.0 + 4.0 * r.uniform());
      Tensor theta = Tensor::zeros({n});
      for (auto& v : theta.data) v = 2.0 * r.gaussian();
      Tensor keys = Tensor::zeros({n});
      for (auto& v : keys.data) v = r.gumbel();
      Tensor a = subset::soft_k_subset(subset::weights_from_params({theta}), k, tau, keys);
      double s = 0;
      for (double v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
        s += v;
      }
      CHECK(std::abs(s - k) < 1e-9);
    }
  }

  SUBCASE("low temperature matches hard top-K with shared keys") {
    int matches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      auto r = rng.child(5000 + trial);
      WeightVec w{Tensor::vec({1.0, 2.0, 0.5, 1.5, 0.8})};
      auto hard = subset::sample_hard_subset(w, 2, r);
      Tensor a = subset::soft_k_subset(w, 2, 1e-3, hard.gumbels);
      std::vector<std::pair<double, int>> order;
      for (int i = 0; i < 5; ++i) order.push_back({a.at(i), i});
      std::sort(order.begin(), order.end(), std::greater<>());
      std::vector<int> top{order[0].second, order[1].second};
      std::sort(top.begin(), top.end());
      if (top == hard.subset.indices) ++matches;
    }
    CHECK(matches == 1000);
  }

  SUBCASE("near-zero temperature approaches the indicator vector") {
    auto r = rng.child(99);
    WeightVec w{Tensor::vec({1.0, 2.0, 0.5, 1.5})};
    auto hard = subset::sample_hard_subset(w, 2, r);
    Tensor a = subset::soft_k_subset(w, 2, 1e-4, hard.gumbels);
    for (int i = 0; i < 4; ++i) {
      const bool in = std::find(hard.subset.indices.begin(), hard.subset.indices.end(), i) !=
                      hard.subset.indices.end();
      CHECK(std::abs(a.at(i) - (in ? 1.0 : 0.0)) < 1e-6);
    }
  }

  SUBCASE("high temperature spreads mass uniformly") {
    double avg[4] = {0, 0, 0, 0};
    const int draws = 1000;
    WeightVec w{Tensor::ones({4})};
    for (int d = 0; d < draws; ++d) {
      auto r = rng.child(777, d);
      Tensor keys = Tensor::zeros({4});
      for (auto& v : keys.data) v = r.gumbel();
      Tensor a = subset::soft_k_subset(w, 2, 1e3, keys);
      for (int i = 0; i < 4; ++i) avg[i] += a.at(i);
    }
    for (double& v : avg) v /= draws;
    for (double v : avg) CHECK(std::abs(v - 0.5) < 0.05);
  }

  SUBCASE("tau <= 0 rejected") {
    WeightVec w{Tensor::ones({3})};
    CHECK_THROWS_AS(subset::soft_k_subset(w, 1, 0.0, Tensor::zeros({3})), std::invalid_argument);
  }
}

TEST_CASE("graph soft subset agrees with the plain version and is differentiable") {
  RngStream rng(21);
  Tensor theta = Tensor::vec({0.2, -0.4, 0.8, 0.0, -1.0, 0.5});
  Tensor keys = Tensor::zeros({6});
  for (auto& v : keys.data) v = rng.gumbel();
  const double tau = 0.3;

  Tensor plain = subset::soft_k_subset(subset::weights_from_params({theta}), 3, tau, keys);

  ad::Graph g;
  ad::NodeId th = g.param("theta", theta);
  ad::NodeId a = subset::build_soft_subset(g, g.exp(th), keys, 3, tau);
  ad::NodeId total = g.sum(a);
  g.forward(total);
  for (std::int64_t i = 0; i < 6; ++i)
    CHECK(g.value(a).at(i) == doctest::Approx(plain.at(i)).epsilon(1e-12));
  CHECK(g.value(total).value() == doctest::Approx(3.0).epsilon(1e-9));

  ad::Graph g2;
  ad::NodeId th2 = g2.param("theta", theta);
  ad::NodeId a2 = subset::build_soft_subset(g2, g2.exp(th2), keys, 3, tau);
  ad::NodeId loss = g2.dot(a2, g2.constant(Tensor::vec({0.3, -0.1, 0.7, 0.2, -0.5, 0.4})));
  CHECK(g2.grad_check(loss, {}, 1e-6, 1e-4).pass);
}
