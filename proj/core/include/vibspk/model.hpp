#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vibspk/losses.hpp"

namespace vibspk {

enum class LossKind { Ce, Aam, Vib, VibLn };

LossKind parse_loss_kind(const std::string& token);  // ce|aam|vib|vib_ln
std::string loss_kind_name(LossKind kind);

// Full trainable model: frame-level encoder, embedding head(s), and the
// speaker-prototype classifier. CE/AAM models carry only the mu layer;
// VIB models add the sigma layer. CE and VIB use an affine classifier
// with bias; AAM and VIB_LN use scaled-cosine logits without bias.
struct SpeakerModel {
  LossKind kind = LossKind::Ce;
  EncoderParams encoder;
  VibHeadParams head;  // sigma_layer empty (0x0) for CE/AAM
  ClassifierHead classifier;

  bool stochastic() const {
    return kind == LossKind::Vib || kind == LossKind::VibLn;
  }
  Eigen::Index embedding_dim() const { return head.mu_layer.out_dim(); }
  Eigen::Index num_classes() const { return classifier.num_classes(); }
};

struct ModelConfig {
  Eigen::Index feature_dim = 20;
  std::vector<Eigen::Index> frame_layer_dims = {32};
  Eigen::Index embedding_dim = 16;
  Eigen::Index num_speakers = 0;
  double scale = 30.0;
  LossKind kind = LossKind::Ce;
  SigmaActivation sigma_activation = SigmaActivation::Softplus;
};

// Seeded random init; weights ~ N(0, 1/fan_in), biases zero. The sigma
// pre-activation bias starts at softplus^{-1}(1) so sigma begins near 1.
SpeakerModel init_model(const ModelConfig& cfg, std::uint64_t seed);

struct ModelGrads {
  EncoderGrads encoder;
  VibHeadGrads head;
  ClassifierGrads classifier;
};

ModelGrads zero_grads(const SpeakerModel& model);

// Named parameter blocks in a fixed order, used by the flat-vector
// packing, checkpoints, and grad-check reporting.
std::vector<std::pair<std::string, Eigen::Index>> param_layout(
    const SpeakerModel& model);

Eigen::Index param_count(const SpeakerModel& model);
Vector pack_params(const SpeakerModel& model);
void unpack_params(const Vector& flat, SpeakerModel& model);
Vector pack_grads(const SpeakerModel& model, const ModelGrads& grads);

// Loss configuration resolved for one step (scheduled margin/beta).
struct StepLossConfig {
  double margin = 0.0;  // AAM
  double beta = 0.0;    // VIB / VIB_LN
  int num_samples = 10;
};

struct LossBreakdown {
  double loss = 0.0;
  double ce_term = 0.0;
  double kl_term = 0.0;
};

// Forward+backward through the full model for one utterance. Noise is
// required for stochastic models and ignored otherwise. Gradients are
// accumulated with weight `grad_weight`.
LossBreakdown utterance_loss(const SpeakerModel& model, const Matrix& frames,
                             Eigen::Index target, const StepLossConfig& cfg,
                             const NoiseBlock* noise, ModelGrads* grads,
                             double grad_weight = 1.0);

struct Batch {
  std::vector<const Matrix*> frames;
  std::vector<Eigen::Index> targets;
  std::vector<std::uint64_t> utterance_indices;  // keys for noise
};

// Mean loss over the batch with scheduled margin/beta; gradients for all
// parameters. Noise keyed by (rng, step, utterance index).
LossBreakdown batch_objective(const SpeakerModel& model, const Batch& batch,
                              const StepLossConfig& cfg, const CounterRng& rng,
                              std::uint64_t step, ModelGrads* grads);

// Deterministic extraction embedding: mu head over the pooled vector.
Vector extract_embedding(const SpeakerModel& model, const Matrix& frames);

}  // namespace vibspk
