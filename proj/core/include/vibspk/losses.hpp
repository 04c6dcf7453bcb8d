#pragma once

#include "vibspk/vib_head.hpp"

namespace vibspk {

// Per-speaker prototypes (decoder parameters). With length_normalize
// set, rows and the embedding are unit-normalized functionally before
// the logit computation and the result scaled by s; the stored rows stay
// unconstrained.
struct ClassifierHead {
  Matrix prototypes;  // K x E
  Vector bias;        // K, or empty when unused
  double scale = 30.0;
  bool length_normalize = false;

  Eigen::Index num_classes() const { return prototypes.rows(); }
  Eigen::Index embedding_dim() const { return prototypes.cols(); }
  bool has_bias() const { return bias.size() > 0; }
};

struct ClassifierGrads {
  Matrix prototypes;
  Vector bias;
};

ClassifierGrads classifier_zero_grads(const ClassifierHead& head);

struct AamConfig {
  double margin = 0.2;  // in [0, pi/2)
  double scale = 30.0;
};

struct VibConfig {
  double beta = 0.0;
  int num_samples = 10;  // J
  bool length_normalize = false;  // VIB vs VIB_LN
};

// margin (AAM) / beta (VIB) ramp: zero through warmup, exponential rise
// over the ramp, then constant at final_value.
struct RampSchedule {
  int warmup_epochs = 20;
  int ramp_epochs = 20;
  double final_value = 0.0;
  double ramp_floor_ratio = 1e-3;
};

double schedule_value(int epoch, const RampSchedule& sched);

// loss = logsumexp(logits) - logits[target]
double softmax_ce(const Vector& logits, Eigen::Index target);

// softmax(logits) - onehot(target)
Vector softmax_ce_gradient(const Vector& logits, Eigen::Index target);

// Plain affine logits: prototypes * z (+ bias).
Vector affine_logits(const Vector& z, const ClassifierHead& head);

// Scaled cosine logits with margin m added to the target angle. When
// cos(theta) < cos(pi - m) the monotone fallback s*(cos(theta) - m sin m)
// replaces the angle addition.
Vector aam_logits(const Vector& z, const ClassifierHead& head,
                  Eigen::Index target, const AamConfig& cfg);

// d(loss)/dz and prototype gradients for the AAM-CE composition.
double aam_loss_and_grad(const Vector& z, const ClassifierHead& head,
                         Eigen::Index target, const AamConfig& cfg,
                         Vector& d_z, ClassifierGrads& grads);

// CE with affine logits; gradients accumulated into grads.
double ce_loss_and_grad(const Vector& z, const ClassifierHead& head,
                        Eigen::Index target, Vector& d_z,
                        ClassifierGrads& grads);

// Monte-Carlo VIB objective:
//   (1/J) sum_j CE(logits(z^(j)), target) + beta * KL(emb || N(0,I)).
// With cfg.length_normalize the samples and prototypes are unit-normalized
// and the logits scaled (no bias); otherwise affine logits are used.
double vib_loss(const StochasticEmbedding& emb, const ClassifierHead& head,
                Eigen::Index target, const VibConfig& cfg,
                const NoiseBlock& noise);

// Same, with gradients w.r.t. (mu, sigma) and the classifier.
double vib_loss_and_grad(const StochasticEmbedding& emb,
                         const ClassifierHead& head, Eigen::Index target,
                         const VibConfig& cfg, const NoiseBlock& noise,
                         Vector& d_mu, Vector& d_sigma,
                         ClassifierGrads& grads, double* ce_term = nullptr,
                         double* kl_term = nullptr);

}  // namespace vibspk
