#pragma once

#include <utility>
#include <vector>

#include "adlab/graph.hpp"
#include "adlab/rng.hpp"
#include "adlab/tensor.hpp"

namespace adlab::subset {

// Enumeration bound for exact set probabilities (K! orderings).
inline constexpr int kMaxEnumK = 8;

struct PolicyParams {
  Tensor theta;  // unconstrained, one entry per pool point
};

struct WeightVec {
  Tensor w;  // strictly positive
};

struct HardSubset {
  std::vector<int> indices;  // sorted ascending
  int n = 0;                 // pool size

  int k() const { return static_cast<int>(indices.size()); }
};

// w_i = exp(theta_i), entries clamped at theta = 700 to avoid overflow.
WeightVec weights_from_params(const PolicyParams& params);

// log p_wrs of an ordered draw-without-replacement sequence.
double wrs_sequence_logprob(const WeightVec& w, const std::vector<int>& seq);

// d(log p_wrs)/d(theta) for the same sequence, via the chain rule through
// w = exp(theta).
Tensor wrs_sequence_logprob_grad_theta(const WeightVec& w, const std::vector<int>& seq);

// log of the set probability: sum of p_wrs over all K! orderings of S.
double subset_logprob(const WeightVec& w, const HardSubset& s);

Tensor subset_logprob_grad_theta(const WeightVec& w, const HardSubset& s);

// Top-K of Gumbel-perturbed keys r_i = g_i + log w_i. Returns the subset plus
// the raw Gumbel noise so callers can couple soft and hard draws. The sequence
// of indices in descending key order is distributed as sequential WRS.
struct HardSample {
  HardSubset subset;
  std::vector<int> sequence;  // descending key order
  Tensor gumbels;
};
HardSample sample_hard_subset(const WeightVec& w, int k, RngStream& rng);

// Iterated Gumbel-softmax relaxation: a in [0,1]^n with sum(a) = K exactly.
Tensor soft_k_subset(const WeightVec& w, int k, double tau, const Tensor& gumbels);

// In-graph version; w_node is rank-1 (typically exp(theta)), gumbels constant.
ad::NodeId build_soft_subset(ad::Graph& g, ad::NodeId w_node, const Tensor& gumbels, int k,
                             double tau);

}  // namespace adlab::subset
