#include "vibspk/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace vibspk {

ClassifierGrads classifier_zero_grads(const ClassifierHead& head) {
  return {Matrix::Zero(head.prototypes.rows(), head.prototypes.cols()),
          Vector::Zero(head.bias.size())};
}

double schedule_value(int epoch, const RampSchedule& sched) {
  if (epoch < sched.warmup_epochs) return 0.0;
  if (epoch >= sched.warmup_epochs + sched.ramp_epochs)
    return sched.final_value;
  const double p =
      double(epoch - sched.warmup_epochs) / double(sched.ramp_epochs);
  return sched.final_value * std::exp(std::log(sched.ramp_floor_ratio) * (1.0 - p));
}

double softmax_ce(const Vector& logits, Eigen::Index target) {
  if (target < 0 || target >= logits.size())
    throw std::out_of_range("softmax_ce: target index out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(target);
}

Vector softmax_ce_gradient(const Vector& logits, Eigen::Index target) {
  const double m = logits.maxCoeff();
  Vector p = (logits.array() - m).exp();
  p /= p.sum();
  p(target) -= 1.0;
  return p;
}

Vector affine_logits(const Vector& z, const ClassifierHead& head) {
  Vector logits = head.prototypes * z;
  if (head.has_bias()) logits += head.bias;
  return logits;
}

namespace {

struct AamCache {
  Vector cos;        // K
  Vector znorm;      // normalized z
  Vector row_norms;  // K
  double z_norm = 0.0;
  bool fallback = false;
  bool clamped = false;
  double sin_target = 0.0;
};

Vector aam_logits_impl(const Vector& z, const ClassifierHead& head,
                       Eigen::Index target, const AamConfig& cfg,
                       AamCache* cache) {
  const Eigen::Index K = head.num_classes();
  if (target < 0 || target >= K)
    throw std::out_of_range("aam_logits: target index out of range");
  const double zn = z.norm();
  if (zn == 0.0) throw std::domain_error("aam_logits: zero-norm embedding");
  const Vector zhat = z / zn;

  Vector cos(K), row_norms(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double pn = head.prototypes.row(k).norm();
    if (pn == 0.0) throw std::domain_error("aam_logits: zero-norm prototype");
    row_norms(k) = pn;
    cos(k) = head.prototypes.row(k).dot(zhat) / pn;
  }

  const double s = cfg.scale;
  Vector logits = s * cos;
  const double c = cos(target);
  const double cos_m = std::cos(cfg.margin);
  const double sin_m = std::sin(cfg.margin);
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - c * c));
  bool fallback = false;
  bool clamped = false;
  if (c >= -cos_m) {
    logits(target) = s * (c * cos_m - sin_t * sin_m);
  } else {
    // theta + m past pi: monotone linear continuation, clamped so the
    // target logit never leaves [-s, s cos m]
    const double modified = c - cfg.margin * sin_m;
    clamped = modified < -1.0;
    logits(target) = s * (clamped ? -1.0 : modified);
    fallback = true;
  }
  if (cache) {
    cache->cos = std::move(cos);
    cache->znorm = zhat;
    cache->row_norms = std::move(row_norms);
    cache->z_norm = zn;
    cache->fallback = fallback;
    cache->clamped = clamped;
    cache->sin_target = sin_t;
  }
  return logits;
}

}  // namespace

Vector aam_logits(const Vector& z, const ClassifierHead& head,
                  Eigen::Index target, const AamConfig& cfg) {
  return aam_logits_impl(z, head, target, cfg, nullptr);
}

double aam_loss_and_grad(const Vector& z, const ClassifierHead& head,
                         Eigen::Index target, const AamConfig& cfg,
                         Vector& d_z, ClassifierGrads& grads) {
  AamCache cache;
  const Vector logits = aam_logits_impl(z, head, target, cfg, &cache);
  const double loss = softmax_ce(logits, target);
  const Vector g = softmax_ce_gradient(logits, target);

  const double s = cfg.scale;
  Vector dl_dcos = Vector::Constant(g.size(), s);
  if (cache.fallback) {
    if (cache.clamped) dl_dcos(target) = 0.0;
  } else {
    const double c = cache.cos(target);
    const double sin_t = std::max(cache.sin_target, 1e-12);
    dl_dcos(target) =
        s * (std::cos(cfg.margin) + std::sin(cfg.margin) * c / sin_t);
  }

  d_z = Vector::Zero(z.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double w = g(k) * dl_dcos(k);
    if (w == 0.0) continue;
    const Vector phat = head.prototypes.row(k).transpose() / cache.row_norms(k);
    d_z += w * (phat - cache.cos(k) * cache.znorm) / cache.z_norm;
    grads.prototypes.row(k) +=
        (w * (cache.znorm - cache.cos(k) * phat) / cache.row_norms(k))
            .transpose();
  }
  return loss;
}

double ce_loss_and_grad(const Vector& z, const ClassifierHead& head,
                        Eigen::Index target, Vector& d_z,
                        ClassifierGrads& grads) {
  const Vector logits = affine_logits(z, head);
  const double loss = softmax_ce(logits, target);
  const Vector g = softmax_ce_gradient(logits, target);
  d_z = head.prototypes.transpose() * g;
  grads.prototypes.noalias() += g * z.transpose();
  if (head.has_bias()) grads.bias += g;
  return loss;
}

double vib_loss(const StochasticEmbedding& emb, const ClassifierHead& head,
                Eigen::Index target, const VibConfig& cfg,
                const NoiseBlock& noise) {
  Vector d_mu, d_sigma;
  ClassifierGrads grads = classifier_zero_grads(head);
  return vib_loss_and_grad(emb, head, target, cfg, noise, d_mu, d_sigma,
                           grads);
}

double vib_loss_and_grad(const StochasticEmbedding& emb,
                         const ClassifierHead& head, Eigen::Index target,
                         const VibConfig& cfg, const NoiseBlock& noise,
                         Vector& d_mu, Vector& d_sigma,
                         ClassifierGrads& grads, double* ce_term,
                         double* kl_term) {
  const Eigen::Index J = noise.e.rows();
  if (J != cfg.num_samples)
    throw std::invalid_argument("vib_loss: noise block size != J");
  if (noise.e.cols() != emb.mu.size())
    throw std::invalid_argument("vib_loss: noise dim mismatch");

  const Matrix z = sample(emb, noise);
  const Eigen::Index K = head.num_classes();
  const Eigen::Index E = emb.mu.size();
  const double inv_j = 1.0 / double(J);

  d_mu = Vector::Zero(E);
  d_sigma = Vector::Zero(E);
  double ce = 0.0;

  if (cfg.length_normalize) {
    // Normalized prototypes shared across samples.
    Vector row_norms(K);
    Matrix phat(K, E);
    for (Eigen::Index k = 0; k < K; ++k) {
      row_norms(k) = head.prototypes.row(k).norm();
      if (row_norms(k) == 0.0)
        throw std::domain_error("vib_loss: zero-norm prototype");
      phat.row(k) = head.prototypes.row(k) / row_norms(k);
    }
    Matrix d_phat = Matrix::Zero(K, E);
    for (Eigen::Index j = 0; j < J; ++j) {
      const Vector zj = z.row(j).transpose();
      const double zn = zj.norm();
      if (zn == 0.0) throw std::domain_error("vib_loss: zero-norm sample");
      const Vector zhat = zj / zn;
      const Vector logits = head.scale * (phat * zhat);
      ce += inv_j * softmax_ce(logits, target);
      const Vector g = inv_j * softmax_ce_gradient(logits, target);
      const Vector d_zhat = head.scale * (phat.transpose() * g);
      const Vector d_zj = (d_zhat - zhat.dot(d_zhat) * zhat) / zn;
      d_phat.noalias() += head.scale * (g * zhat.transpose());
      d_mu += d_zj;
      d_sigma += d_zj.cwiseProduct(noise.e.row(j).transpose());
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      const Vector dpk = d_phat.row(k).transpose();
      const Vector pk = phat.row(k).transpose();
      grads.prototypes.row(k) +=
          ((dpk - pk.dot(dpk) * pk) / row_norms(k)).transpose();
    }
  } else {
    for (Eigen::Index j = 0; j < J; ++j) {
      const Vector zj = z.row(j).transpose();
      const Vector logits = affine_logits(zj, head);
      ce += inv_j * softmax_ce(logits, target);
      const Vector g = inv_j * softmax_ce_gradient(logits, target);
      const Vector d_zj = head.prototypes.transpose() * g;
      grads.prototypes.noalias() += g * zj.transpose();
      if (head.has_bias()) grads.bias += g;
      d_mu += d_zj;
      d_sigma += d_zj.cwiseProduct(noise.e.row(j).transpose());
    }
  }

  const double kl = kl_to_standard_normal(emb);
  Vector kl_dmu, kl_dsigma;
  kl_gradients(emb, kl_dmu, kl_dsigma);
  d_mu += cfg.beta * kl_dmu;
  d_sigma += cfg.beta * kl_dsigma;

  if (ce_term) *ce_term = ce;
  if (kl_term) *kl_term = kl;
  return ce + cfg.beta * kl;
}

}  // namespace vibspk
