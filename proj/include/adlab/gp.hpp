#pragma once

#include "adlab/graph.hpp"
#include "adlab/tensor.hpp"

namespace adlab::gp {

struct GpHyper {
  double mean_const = 0.0;
  double lengthscale = 1.0;
  double signal_var = 0.69;
  double noise_var = 0.01;
};

struct GaussianPosterior {
  Tensor mean;  // latent mean at the query points
  Tensor cov;   // symmetric PSD covariance
};

// k(x, x') = signal_var * exp(-|x - x'|^2 / (2 lengthscale^2)); rows of X/X2
// are points, matching feature dimension required.
Tensor rbf_kernel(const Tensor& x, const Tensor& x2, const GpHyper& hyper);

// Standard GP regression posterior at test points. Zero training rows return
// the prior. The constant prior mean is handled by centering the labels.
GaussianPosterior gp_posterior(const Tensor& xtrain, const Tensor& ytrain, const Tensor& xtest,
                               const GpHyper& hyper);

// Soft-subset weighted posterior: K_a = K o ((11^T - I) o aa^T + I),
// K_{a,*} = a o K_* columnwise, then the usual Cholesky pipeline. Weights must
// lie in [0,1]; a K-hot weight vector reproduces gp_posterior on the selected
// rows and all-zero weights reproduce the prior.
GaussianPosterior weighted_gp_posterior(const Tensor& xtrain, const Tensor& ytrain,
                                        const Tensor& xtest, const Tensor& weights,
                                        const GpHyper& hyper);

// f = mean + L z with L L^T = cov (PSD-tolerant factorization); deterministic
// given z.
Tensor posterior_sample(const GaussianPosterior& post, const Tensor& z);

Tensor latent_variance(const GaussianPosterior& post);

// In-graph weighted posterior used by the differentiable rollout. The kernel
// blocks are constants of the current belief state; y_centered and weights are
// live nodes so gradients reach the pseudo-labels' weights.
struct PosteriorNodes {
  ad::NodeId mean;
  ad::NodeId cov;
};
PosteriorNodes build_weighted_posterior(ad::Graph& g, const Tensor& k_train,
                                        const Tensor& k_cross, const Tensor& k_test,
                                        ad::NodeId y_centered, ad::NodeId weights,
                                        const GpHyper& hyper);

}  // namespace adlab::gp
