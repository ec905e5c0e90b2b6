#pragma once

#include <vector>

#include "adlab/gp.hpp"
#include "adlab/graph.hpp"
#include "adlab/tensor.hpp"

namespace adlab {

// The scalar of interest g(f) under a hypothetical generator f, plus the
// Monte-Carlo variance objective G = Var_{f} g(f).
struct EstimandSpec {
  enum class Kind { kMse, kRecall, kAte };
  Kind kind = Kind::kMse;
  std::vector<double> model_values;  // psi at eval points; empty = naive zero predictor
  double noise_var = 0.01;           // aleatoric sigma^2 (MSE)
  double recall_temp = 0.1;
  int recall_draws = 1;
  double treatment_prob = 0.5;

  double psi(std::int64_t i) const {
    return model_values.empty() ? 0.0 : model_values[static_cast<size_t>(i)];
  }
};

// (1/n) sum_i ((f_i - psi_i)^2 + sigma^2). The aleatoric constant comes from
// the inner expectation over Y | f; it cannot move the variance objective but
// keeps estimate-vs-oracle errors on the right scale.
double g_mse(const Tensor& f, const EstimandSpec& spec);

// Smoothed recall: ratio of Gumbel-softmax pseudo-labels against the decision
// indicators psi > 0. f entries are probabilities; values outside (0,1) are
// clamped to [1e-6, 1-1e-6] with a warning. gumbels holds 2n draws (rows:
// per-point, cols: the two softmax arms).
double g_recall_smoothed(const Tensor& f, const EstimandSpec& spec, const Tensor& gumbels);

double g_ate(const Tensor& f1, const Tensor& f0);

// Sample variance of g-values, divisor N-1 when unbiased.
double variance_objective(const std::vector<double>& g_values, bool unbiased = true);

// Closed-form Var g(f) for the MSE estimand under a Gaussian posterior:
// (2 tr(V^2) + 4 delta^T V delta) / n^2 with delta = mean - psi. Used as an
// independent oracle; itself validated against brute-force MC in tests.
double variance_mse_closed_form(const gp::GaussianPosterior& post, const EstimandSpec& spec);

// Graph builders. F is an (n_f x n_eval) matrix of posterior draws (one row
// per sample); the result is the rank-1 node of per-row g values. For the
// recall estimand, recall_gumbels carries two (n_f x n_eval) draw matrices.
struct RecallDraws {
  Tensor g1;
  Tensor g2;
};
ad::NodeId build_g_rows(ad::Graph& g, ad::NodeId f_rows, const EstimandSpec& spec,
                        const RecallDraws* recall_draws);

}  // namespace adlab
