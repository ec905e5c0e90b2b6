#include "adlab/estimands.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace adlab {

namespace {

double clamp_prob(double p, bool* warned) {
  if (p < 1e-6 || p > 1.0 - 1e-6) {
    if (!*warned) {
      std::fprintf(stderr, "warning: recall latent clamped into (0,1)\n");
      *warned = true;
    }
    return std::min(std::max(p, 1e-6), 1.0 - 1e-6);
  }
  return p;
}

}  // namespace

double g_mse(const Tensor& f, const EstimandSpec& spec) {
  if (spec.kind != EstimandSpec::Kind::kMse) throw std::invalid_argument("g_mse: wrong estimand kind");
  const std::int64_t n = f.numel();
  if (!spec.model_values.empty() && static_cast<std::int64_t>(spec.model_values.size()) != n)
    throw std::invalid_argument("g_mse: model_values length mismatch");
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = f.at(i) - spec.psi(i);
    s += d * d + spec.noise_var;
  }
  return s / static_cast<double>(n);
}

double g_recall_smoothed(const Tensor& f, const EstimandSpec& spec, const Tensor& gumbels) {
  if (spec.kind != EstimandSpec::Kind::kRecall)
    throw std::invalid_argument("g_recall_smoothed: wrong estimand kind");
  const std::int64_t n = f.numel();
  if (gumbels.numel() != 2 * n)
    throw std::invalid_argument("g_recall_smoothed: expected 2n gumbel draws");
  static bool warned = false;
  double num = 0, den = 0;
  const double tau = spec.recall_temp;
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = clamp_prob(f.at(i), &warned);
    const double u = (std::log(p) + gumbels.at(i)) - (std::log(1.0 - p) + gumbels.at(n + i));
    const double x = u / tau;
    const double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    const double ind = spec.psi(i) > 0.0 ? 1.0 : 0.0;
    num += y * ind;
    den += y;
  }
  return den > 0.0 ? num / den : 0.0;
}

double g_ate(const Tensor& f1, const Tensor& f0) {
  if (f1.numel() != f0.numel()) throw std::invalid_argument("g_ate: length mismatch");
  double s = 0;
  for (std::int64_t i = 0; i < f1.numel(); ++i) s += f1.at(i) - f0.at(i);
  return s / static_cast<double>(f1.numel());
}

double variance_objective(const std::vector<double>& g_values, bool unbiased) {
  if (g_values.size() < 2) throw std::invalid_argument("variance_objective: need >= 2 samples");
  double mean = 0;
  for (double v : g_values) mean += v;
  mean /= static_cast<double>(g_values.size());
  double ss = 0;
  for (double v : g_values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(g_values.size() - (unbiased ? 1 : 0));
}

double variance_mse_closed_form(const gp::GaussianPosterior& post, const EstimandSpec& spec) {
  if (spec.kind != EstimandSpec::Kind::kMse)
    throw std::invalid_argument("variance_mse_closed_form: MSE estimand required");
  const std::int64_t n = post.mean.numel();
  // tr(V^2) for symmetric V
  double tr_v2 = 0;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) tr_v2 += post.cov.at(i, j) * post.cov.at(j, i);
  double quad = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    double row = 0;
    for (std::int64_t j = 0; j < n; ++j) row += post.cov.at(i, j) * (post.mean.at(j) - spec.psi(j));
    quad += (post.mean.at(i) - spec.psi(i)) * row;
  }
  return (2.0 * tr_v2 + 4.0 * quad) / (static_cast<double>(n) * static_cast<double>(n));
}

namespace {

// max(x, lo) elementwise built from relu
ad::NodeId clamp_low(ad::Graph& g, ad::NodeId x, double lo) {
  return g.add_const(g.relu(g.add_const(x, -lo)), lo);
}

// min(x, hi) elementwise
ad::NodeId clamp_high(ad::Graph& g, ad::NodeId x, double hi) {
  return g.neg(g.add_const(g.relu(g.add_const(g.neg(x), hi)), -hi));
}

}  // namespace

ad::NodeId build_g_rows(ad::Graph& g, ad::NodeId f_rows, const EstimandSpec& spec,
                        const RecallDraws* recall_draws) {
  // f_rows: (n_f x e) posterior draws at the eval points, one row per sample.
  const Shape shape = g.shape_of(f_rows);
  const std::int64_t n_f = shape.at(0), e = shape.at(1);
  switch (spec.kind) {
    case EstimandSpec::Kind::kMse: {
      ad::NodeId d = f_rows;
      if (!spec.model_values.empty()) {
        Tensor psi = Tensor::zeros({n_f, e});
        for (std::int64_t r = 0; r < n_f; ++r)
          for (std::int64_t c = 0; c < e; ++c) psi.at(r, c) = spec.model_values[static_cast<size_t>(c)];
        d = g.sub(f_rows, g.constant(psi));
      }
      ad::NodeId sq = g.mul(d, d);
      return g.add_const(g.mean_axis(sq, 1), spec.noise_var);
    }
    case EstimandSpec::Kind::kAte: {
      // first half of the eval columns is treated (z=1), second half control
      if (e % 2 != 0) throw std::invalid_argument("build_g_rows: ATE needs stacked eval halves");
      const std::int64_t half = e / 2;
      Tensor c = Tensor::zeros({e, 1});
      for (std::int64_t i = 0; i < half; ++i) {
        c.at(i, 0) = 1.0 / static_cast<double>(half);
        c.at(half + i, 0) = -1.0 / static_cast<double>(half);
      }
      return g.reshape(g.matmul(f_rows, g.constant(c)), {n_f});
    }
    case EstimandSpec::Kind::kRecall: {
      if (recall_draws == nullptr)
        throw std::invalid_argument("build_g_rows: recall estimand needs gumbel draws");
      ad::NodeId p = clamp_high(g, clamp_low(g, f_rows, 1e-6), 1.0 - 1e-6);
      ad::NodeId one_minus = g.add_const(g.neg(p), 1.0);
      Tensor dg = recall_draws->g1;
      for (size_t i = 0; i < dg.data.size(); ++i) dg.data[i] -= recall_draws->g2.data[i];
      ad::NodeId u = g.add(g.sub(g.log(p), g.log(one_minus)), g.constant(dg));
      ad::NodeId y = g.sigmoid(g.scale(u, 1.0 / spec.recall_temp));
      Tensor ind = Tensor::zeros({e, 1});
      for (std::int64_t i = 0; i < e; ++i) ind.at(i, 0) = spec.psi(i) > 0.0 ? 1.0 : 0.0;
      ad::NodeId num = g.reshape(g.matmul(y, g.constant(ind)), {n_f});
      ad::NodeId den = g.sum_axis(y, 1);
      return g.mul(num, g.recip(den));
    }
  }
  throw std::invalid_argument("build_g_rows: unknown estimand");
}

}  // namespace adlab
