#pragma once

#include <cstdint>

#include "vibspk/encoder.hpp"
#include "vibspk/rng.hpp"

namespace vibspk {

// softplus(x) = ln(1 + e^x), stable for large |x|.
double softplus(double x);
double softplus_derivative(double x);  // = logistic(x)
Vector softplus(const Vector& x);

enum class SigmaActivation { Softplus, Exp };

// Two linear heads over the pooled vector: mu and the pre-activation of
// sigma. Sigma positivity comes from softplus (exp optional).
struct VibHeadParams {
  DenseLayer mu_layer;     // 2F -> E
  DenseLayer sigma_layer;  // 2F -> E
  SigmaActivation sigma_activation = SigmaActivation::Softplus;

  Eigen::Index embedding_dim() const { return mu_layer.out_dim(); }
};

// Diagonal Gaussian p(z|x): N(mu, diag(sigma^2)).
struct StochasticEmbedding {
  Vector mu;
  Vector sigma;  // strictly positive
  Vector sigma_pre;  // pre-activation, kept for the backward pass
};

// J x E block of standard-normal draws, reproducible from
// (rng seed, step, utterance index).
struct NoiseBlock {
  Matrix e;  // J x E
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t utterance = 0;
};

NoiseBlock make_noise(const CounterRng& rng, std::uint64_t step,
                      std::uint64_t utterance, Eigen::Index samples,
                      Eigen::Index dim);

StochasticEmbedding head_forward(const Vector& pooled,
                                 const VibHeadParams& params);

// Accumulates d(pooled) and the head parameter gradients given gradients
// w.r.t. mu and sigma.
struct VibHeadGrads {
  DenseLayer mu_layer;
  DenseLayer sigma_layer;
};

VibHeadGrads head_zero_grads(const VibHeadParams& params);

Vector head_backward(const VibHeadParams& params, const Vector& pooled,
                     const StochasticEmbedding& emb, const Vector& d_mu,
                     const Vector& d_sigma, VibHeadGrads& grads);

// z^(j) = sigma (.) e^(j) + mu, rowwise over the noise block.
Matrix sample(const StochasticEmbedding& emb, const NoiseBlock& noise);

// KL( N(mu, diag(sigma^2)) || N(0, I) )
//   = 0.5 * sum_d (mu_d^2 + sigma_d^2 - 1 - 2 ln sigma_d)
double kl_to_standard_normal(const StochasticEmbedding& emb);

// d KL / d mu = mu; d KL / d sigma = sigma - 1/sigma.
void kl_gradients(const StochasticEmbedding& emb, Vector& d_mu,
                  Vector& d_sigma);

}  // namespace vibspk
