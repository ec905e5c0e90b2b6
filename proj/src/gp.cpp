#include "adlab/gp.hpp"

#include <cmath>
#include <stdexcept>

#include "adlab/linalg.hpp"

namespace adlab::gp {

Tensor rbf_kernel(const Tensor& x, const Tensor& x2, const GpHyper& hyper) {
  if (x.rank() != 2 || x2.rank() != 2 || x.cols() != x2.cols())
    throw std::invalid_argument("rbf_kernel: feature dimension mismatch");
  const std::int64_t n = x.rows(), m = x2.rows(), d = x.cols();
  const double inv2l2 = 1.0 / (2.0 * hyper.lengthscale * hyper.lengthscale);
  Tensor k = Tensor::zeros({n, m});
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double d2 = 0;
      for (std::int64_t c = 0; c < d; ++c) {
        const double diff = x.at(i, c) - x2.at(j, c);
        d2 += diff * diff;
      }
      k.at(i, j) = hyper.signal_var * std::exp(-d2 * inv2l2);
    }
  }
  return k;
}

GaussianPosterior gp_posterior(const Tensor& xtrain, const Tensor& ytrain, const Tensor& xtest,
                               const GpHyper& hyper) {
  const std::int64_t t = xtrain.rank() == 2 ? xtrain.rows() : 0;
  const std::int64_t e = xtest.rows();
  GaussianPosterior post;
  if (t == 0) {
    post.mean = Tensor::full({e}, hyper.mean_const);
    post.cov = rbf_kernel(xtest, xtest, hyper);
    return post;
  }
  if (ytrain.numel() != t) throw std::invalid_argument("gp_posterior: label count mismatch");
  Tensor k = rbf_kernel(xtrain, xtrain, hyper);
  for (std::int64_t i = 0; i < t; ++i) k.at(i, i) += hyper.noise_var;
  Tensor kstar = rbf_kernel(xtrain, xtest, hyper);
  Tensor yc = Tensor::zeros({t});
  for (std::int64_t i = 0; i < t; ++i) yc.at(i) = ytrain.at(i) - hyper.mean_const;

  linalg::CholFactor f = linalg::cholesky_spd(k);
  Tensor alpha = linalg::solve_triangular(f.L, yc, false);
  alpha = linalg::solve_triangular(f.L, alpha, true);
  post.mean = linalg::matvec(linalg::transpose(kstar), alpha);
  for (auto& v : post.mean.data) v += hyper.mean_const;
  Tensor v = linalg::solve_triangular(f.L, kstar, false);
  post.cov = rbf_kernel(xtest, xtest, hyper);
  Tensor vtv = linalg::matmul(linalg::transpose(v), v);
  for (size_t i = 0; i < post.cov.data.size(); ++i) post.cov.data[i] -= vtv.data[i];
  return post;
}

PosteriorNodes build_weighted_posterior(ad::Graph& g, const Tensor& k_train,
                                        const Tensor& k_cross, const Tensor& k_test,
                                        ad::NodeId y_centered, ad::NodeId weights,
                                        const GpHyper& hyper) {
  const std::int64_t t = k_train.rows();
  const std::int64_t e = k_test.rows();

  ad::NodeId a_col = g.reshape(weights, {t, 1});
  ad::NodeId outer = g.matmul(a_col, g.transpose(a_col));
  Tensor offdiag = Tensor::ones({t, t});
  for (std::int64_t i = 0; i < t; ++i) offdiag.at(i, i) = 0.0;
  ad::NodeId mask = g.mul(g.constant(offdiag), outer);
  ad::NodeId ka = g.mul(g.constant(k_train), g.add(mask, g.constant(Tensor::identity(t))));
  Tensor noise = Tensor::zeros({t, t});
  for (std::int64_t i = 0; i < t; ++i) noise.at(i, i) = hyper.noise_var;
  ad::NodeId l = g.cholesky(g.add(ka, g.constant(noise)));

  ad::NodeId alpha = g.tri_solve(l, g.tri_solve(l, y_centered, false), true);
  ad::NodeId tile = g.matmul(a_col, g.constant(Tensor::ones({1, e})));
  ad::NodeId ka_star = g.mul(tile, g.constant(k_cross));
  ad::NodeId mean = g.reshape(g.matmul(g.transpose(ka_star), g.reshape(alpha, {t, 1})), {e});
  mean = g.add_const(mean, hyper.mean_const);

  ad::NodeId v = g.tri_solve(l, ka_star, false);
  ad::NodeId cov = g.sub(g.constant(k_test), g.matmul(g.transpose(v), v));
  return {mean, cov};
}

GaussianPosterior weighted_gp_posterior(const Tensor& xtrain, const Tensor& ytrain,
                                        const Tensor& xtest, const Tensor& weights,
                                        const GpHyper& hyper) {
  const std::int64_t t = xtrain.rows();
  if (weights.numel() != t)
    throw std::invalid_argument("weighted_gp_posterior: weight length != train rows");
  for (double w : weights.data)
    if (!(w >= 0.0 && w <= 1.0))
      throw std::invalid_argument("weighted_gp_posterior: weight out of [0,1]");
  Tensor yc = Tensor::zeros({t});
  for (std::int64_t i = 0; i < t; ++i) yc.at(i) = ytrain.at(i) - hyper.mean_const;

  ad::Graph g;
  ad::NodeId yn = g.constant(yc);
  ad::NodeId an = g.constant(weights);
  PosteriorNodes nodes = build_weighted_posterior(g, rbf_kernel(xtrain, xtrain, hyper),
                                                  rbf_kernel(xtrain, xtest, hyper),
                                                  rbf_kernel(xtest, xtest, hyper), yn, an, hyper);
  GaussianPosterior post;
  g.forward(nodes.cov);
  post.mean = g.value(nodes.mean);
  post.cov = g.value(nodes.cov);
  return post;
}

Tensor posterior_sample(const GaussianPosterior& post, const Tensor& z) {
  if (z.numel() != post.mean.numel())
    throw std::invalid_argument("posterior_sample: z length != mean length");
  Tensor l = linalg::cholesky_psd(post.cov);
  Tensor f = linalg::matvec(l, z);
  for (std::int64_t i = 0; i < f.numel(); ++i) f.at(i) += post.mean.at(i);
  return f;
}

Tensor latent_variance(const GaussianPosterior& post) {
  Tensor v = Tensor::zeros({post.cov.rows()});
  for (std::int64_t i = 0; i < post.cov.rows(); ++i) v.at(i) = post.cov.at(i, i);
  return v;
}

}  // namespace adlab::gp
