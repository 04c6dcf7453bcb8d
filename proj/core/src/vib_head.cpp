#include "vibspk/vib_head.hpp"

#include <cmath>
#include <stdexcept>

namespace vibspk {

double softplus(double x) {
  // ln(1+e^x) = max(x,0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_derivative(double x) {
  // logistic(x), evaluated without overflow
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

Vector softplus(const Vector& x) {
  return x.unaryExpr([](double v) { return softplus(v); });
}

NoiseBlock make_noise(const CounterRng& rng, std::uint64_t step,
                      std::uint64_t utterance, Eigen::Index samples,
                      Eigen::Index dim) {
  NoiseBlock block;
  block.seed = rng.seed();
  block.step = step;
  block.utterance = utterance;
  block.e.resize(samples, dim);
  const std::uint64_t key = CounterRng::derive_key(step, utterance, 0x6e6f6973ULL);
  for (Eigen::Index j = 0; j < samples; ++j)
    for (Eigen::Index d = 0; d < dim; ++d)
      block.e(j, d) = rng.normal(key, std::uint64_t(j) * dim + d);
  return block;
}

StochasticEmbedding head_forward(const Vector& pooled,
                                 const VibHeadParams& params) {
  if (pooled.size() != params.mu_layer.in_dim() ||
      pooled.size() != params.sigma_layer.in_dim())
    throw std::invalid_argument("vib head: pooled dim mismatch");
  StochasticEmbedding emb;
  emb.mu = params.mu_layer.W * pooled + params.mu_layer.b;
  emb.sigma_pre = params.sigma_layer.W * pooled + params.sigma_layer.b;
  emb.sigma = (params.sigma_activation == SigmaActivation::Softplus)
                  ? softplus(emb.sigma_pre)
                  : emb.sigma_pre.array().exp().matrix();
  return emb;
}

VibHeadGrads head_zero_grads(const VibHeadParams& params) {
  VibHeadGrads g;
  g.mu_layer = {Matrix::Zero(params.mu_layer.W.rows(), params.mu_layer.W.cols()),
                Vector::Zero(params.mu_layer.b.size())};
  g.sigma_layer = {
      Matrix::Zero(params.sigma_layer.W.rows(), params.sigma_layer.W.cols()),
      Vector::Zero(params.sigma_layer.b.size())};
  return g;
}

Vector head_backward(const VibHeadParams& params, const Vector& pooled,
                     const StochasticEmbedding& emb, const Vector& d_mu,
                     const Vector& d_sigma, VibHeadGrads& grads) {
  Vector d_pre;
  if (params.sigma_activation == SigmaActivation::Softplus) {
    d_pre = d_sigma.array() *
            emb.sigma_pre.unaryExpr([](double v) {
              return softplus_derivative(v);
            }).array();
  } else {
    d_pre = d_sigma.array() * emb.sigma.array();
  }
  grads.mu_layer.W.noalias() += d_mu * pooled.transpose();
  grads.mu_layer.b += d_mu;
  grads.sigma_layer.W.noalias() += d_pre * pooled.transpose();
  grads.sigma_layer.b += d_pre;
  return params.mu_layer.W.transpose() * d_mu +
         params.sigma_layer.W.transpose() * d_pre;
}

Matrix sample(const StochasticEmbedding& emb, const NoiseBlock& noise) {
  if (noise.e.cols() != emb.mu.size())
    throw std::invalid_argument("sample: noise dim mismatch");
  Matrix z = noise.e.array().rowwise() * emb.sigma.transpose().array();
  z.rowwise() += emb.mu.transpose();
  return z;
}

double kl_to_standard_normal(const StochasticEmbedding& emb) {
  if ((emb.sigma.array() <= 0.0).any())
    throw std::domain_error("kl: sigma must be positive");
  return 0.5 * (emb.mu.array().square() + emb.sigma.array().square() - 1.0 -
                2.0 * emb.sigma.array().log())
                   .sum();
}

void kl_gradients(const StochasticEmbedding& emb, Vector& d_mu,
                  Vector& d_sigma) {
  d_mu = emb.mu;
  d_sigma = emb.sigma.array() - emb.sigma.array().inverse();
}

}  // namespace vibspk
