#include "adlab/subset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace adlab::subset {

namespace {

void check_indices(const std::vector<int>& seq, std::int64_t n) {
  std::vector<char> seen(static_cast<size_t>(n), 0);
  for (int i : seq) {
    if (i < 0 || i >= n) throw std::invalid_argument("subset: index out of range");
    if (seen[static_cast<size_t>(i)]) throw std::invalid_argument("subset: repeated index");
    seen[static_cast<size_t>(i)] = 1;
  }
}

double logsumexp(const std::vector<double>& xs) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double s = 0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

WeightVec weights_from_params(const PolicyParams& params) {
  WeightVec out;
  out.w = params.theta;
  bool clamped = false;
  for (auto& v : out.w.data) {
    if (v > 700.0) {
      v = 700.0;
      clamped = true;
    }
    v = std::exp(v);
  }
  if (clamped) std::fprintf(stderr, "warning: policy parameter clamped at 700 before exp\n");
  return out;
}

double wrs_sequence_logprob(const WeightVec& w, const std::vector<int>& seq) {
  const std::int64_t n = w.w.numel();
  check_indices(seq, n);
  double total = 0;
  for (double v : w.w.data) total += v;
  double logp = 0;
  double remaining = total;
  for (int idx : seq) {
    logp += std::log(w.w.at(idx)) - std::log(remaining);
    remaining -= w.w.at(idx);
  }
  return logp;
}

Tensor wrs_sequence_logprob_grad_theta(const WeightVec& w, const std::vector<int>& seq) {
  const std::int64_t n = w.w.numel();
  check_indices(seq, n);
  double total = 0;
  for (double v : w.w.data) total += v;

  // d logp / d w_m = sum_j [ 1(m = i_j)/w_m - dS_j/dw_m / S_j ],
  // where S_j is the remaining weight before pick j and dS_j/dw_m = 1 unless
  // m was already picked.
  Tensor grad_w = Tensor::zeros({n});
  std::vector<char> picked(static_cast<size_t>(n), 0);
  double remaining = total;
  for (int idx : seq) {
    grad_w.at(idx) += 1.0 / w.w.at(idx);
    const double inv = 1.0 / remaining;
    for (std::int64_t m = 0; m < n; ++m)
      if (!picked[static_cast<size_t>(m)]) grad_w.at(m) -= inv;
    picked[static_cast<size_t>(idx)] = 1;
    remaining -= w.w.at(idx);
  }
  for (std::int64_t m = 0; m < n; ++m) grad_w.at(m) *= w.w.at(m);  // theta chain rule
  return grad_w;
}

double subset_logprob(const WeightVec& w, const HardSubset& s) {
  if (s.k() > kMaxEnumK)
    throw std::invalid_argument("subset_logprob: K exceeds enumeration bound " +
                                std::to_string(kMaxEnumK));
  std::vector<int> perm = s.indices;
  std::sort(perm.begin(), perm.end());
  std::vector<double> logs;
  do {
    logs.push_back(wrs_sequence_logprob(w, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return logsumexp(logs);
}

Tensor subset_logprob_grad_theta(const WeightVec& w, const HardSubset& s) {
  if (s.k() > kMaxEnumK)
    throw std::invalid_argument("subset_logprob_grad_theta: K exceeds enumeration bound");
  std::vector<int> perm = s.indices;
  std::sort(perm.begin(), perm.end());
  std::vector<double> logs;
  std::vector<Tensor> grads;
  do {
    logs.push_back(wrs_sequence_logprob(w, perm));
    grads.push_back(wrs_sequence_logprob_grad_theta(w, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  // grad log sum_s p_s = sum_s (p_s / sum p) grad log p_s
  const double lse = logsumexp(logs);
  Tensor out = Tensor::zeros(w.w.shape);
  for (size_t i = 0; i < logs.size(); ++i) {
    const double weight = std::exp(logs[i] - lse);
    for (std::int64_t m = 0; m < out.numel(); ++m) out.at(m) += weight * grads[i].at(m);
  }
  return out;
}

HardSample sample_hard_subset(const WeightVec& w, int k, RngStream& rng) {
  const std::int64_t n = w.w.numel();
  if (k > n) throw std::invalid_argument("sample_hard_subset: K > pool size");
  HardSample out;
  out.gumbels = Tensor::zeros({n});
  for (auto& v : out.gumbels.data) v = rng.gumbel();
  std::vector<std::pair<double, int>> keyed(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    keyed[static_cast<size_t>(i)] = {out.gumbels.at(i) + std::log(w.w.at(i)), static_cast<int>(i)};
  std::partial_sort(keyed.begin(), keyed.begin() + k, keyed.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  out.sequence.reserve(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) out.sequence.push_back(keyed[static_cast<size_t>(j)].second);
  out.subset.indices = out.sequence;
  std::sort(out.subset.indices.begin(), out.subset.indices.end());
  out.subset.n = static_cast<int>(n);
  return out;
}

Tensor soft_k_subset(const WeightVec& w, int k, double tau, const Tensor& gumbels) {
  const std::int64_t n = w.w.numel();
  if (tau <= 0.0) throw std::invalid_argument("soft_k_subset: tau must be > 0");
  if (k > n) throw std::invalid_argument("soft_k_subset: K > pool size");
  if (gumbels.numel() != n) throw std::invalid_argument("soft_k_subset: key length mismatch");
  std::vector<double> kappa(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) kappa[static_cast<size_t>(i)] = gumbels.at(i) + std::log(w.w.at(i));
  Tensor a = Tensor::zeros({n});
  std::vector<double> step(static_cast<size_t>(n));
  for (int j = 0; j < k; ++j) {
    double m = kappa[0];
    for (double v : kappa) m = std::max(m, v);
    double denom = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      step[static_cast<size_t>(i)] = std::exp((kappa[static_cast<size_t>(i)] - m) / tau);
      denom += step[static_cast<size_t>(i)];
    }
    for (std::int64_t i = 0; i < n; ++i) {
      const double aji = step[static_cast<size_t>(i)] / denom;
      a.at(i) += aji;
      kappa[static_cast<size_t>(i)] += std::log(std::max(1.0 - aji, 1e-12));
    }
  }
  return a;
}

ad::NodeId build_soft_subset(ad::Graph& g, ad::NodeId w_node, const Tensor& gumbels, int k,
                             double tau) {
  if (tau <= 0.0) throw std::invalid_argument("build_soft_subset: tau must be > 0");
  const std::int64_t n = gumbels.numel();
  ad::NodeId kappa = g.add(g.log(w_node), g.constant(gumbels));
  ad::NodeId total = -1;
  for (int j = 0; j < k; ++j) {
    ad::NodeId aj = g.softmax(kappa, tau);
    total = (total < 0) ? aj : g.add(total, aj);
    if (j + 1 < k) {
      // kappa += log(max(1 - a_j, 1e-12)), the max built from relu
      ad::NodeId one_minus = g.add_const(g.neg(aj), 1.0 - 1e-12);
      ad::NodeId clamped = g.add_const(g.relu(one_minus), 1e-12);
      kappa = g.add(kappa, g.log(clamped));
    }
  }
  (void)n;
  return total;
}

}  // namespace adlab::subset
