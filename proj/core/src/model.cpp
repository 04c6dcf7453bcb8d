#include "vibspk/model.hpp"

#include <cmath>
#include <stdexcept>

namespace vibspk {

LossKind parse_loss_kind(const std::string& token) {
  if (token == "ce") return LossKind::Ce;
  if (token == "aam") return LossKind::Aam;
  if (token == "vib") return LossKind::Vib;
  if (token == "vib_ln") return LossKind::VibLn;
  throw std::invalid_argument("unknown loss kind: " + token);
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Ce: return "ce";
    case LossKind::Aam: return "aam";
    case LossKind::Vib: return "vib";
    case LossKind::VibLn: return "vib_ln";
  }
  return "?";
}

namespace {

DenseLayer random_layer(Eigen::Index out, Eigen::Index in,
                        const CounterRng& rng, std::uint64_t key) {
  DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
  const double scale = 1.0 / std::sqrt(double(in));
  for (Eigen::Index r = 0; r < out; ++r)
    for (Eigen::Index c = 0; c < in; ++c)
      layer.W(r, c) = scale * rng.normal(key, std::uint64_t(r) * in + c);
  return layer;
}

bool uses_bias(LossKind kind) {
  return kind == LossKind::Ce || kind == LossKind::Vib;
}

bool cosine_head(LossKind kind) {
  return kind == LossKind::Aam || kind == LossKind::VibLn;
}

}  // namespace

SpeakerModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.num_speakers < 2)
    throw std::invalid_argument("init_model: need at least 2 speakers");
  CounterRng rng(seed);
  SpeakerModel m;
  m.kind = cfg.kind;

  Eigen::Index in = cfg.feature_dim;
  std::uint64_t block = 0;
  for (Eigen::Index dim : cfg.frame_layer_dims) {
    m.encoder.layers.push_back(
        random_layer(dim, in, rng, CounterRng::derive_key(0x696e6974, block++)));
    in = dim;
  }
  m.encoder.activation = Activation::Tanh;

  const Eigen::Index pooled = 2 * in;
  m.head.mu_layer = random_layer(cfg.embedding_dim, pooled, rng,
                                 CounterRng::derive_key(0x696e6974, block++));
  m.head.sigma_activation = cfg.sigma_activation;
  if (cfg.kind == LossKind::Vib || cfg.kind == LossKind::VibLn) {
    m.head.sigma_layer = random_layer(
        cfg.embedding_dim, pooled, rng, CounterRng::derive_key(0x696e6974, block++));
    // start sigma near 1: softplus(b) = 1  =>  b = ln(e - 1)
    const double b0 = (cfg.sigma_activation == SigmaActivation::Softplus)
                          ? std::log(std::exp(1.0) - 1.0)
                          : 0.0;
    m.head.sigma_layer.b.setConstant(b0);
  } else {
    m.head.sigma_layer = {Matrix(0, 0), Vector(0)};
  }

  m.classifier.prototypes =
      random_layer(cfg.num_speakers, cfg.embedding_dim, rng,
                   CounterRng::derive_key(0x696e6974, block++))
          .W;
  m.classifier.bias =
      uses_bias(cfg.kind) ? Vector::Zero(cfg.num_speakers) : Vector(0);
  m.classifier.scale = cfg.scale;
  m.classifier.length_normalize = cosine_head(cfg.kind);
  return m;
}

ModelGrads zero_grads(const SpeakerModel& model) {
  ModelGrads g;
  g.encoder = encoder_zero_grads(model.encoder);
  g.head = head_zero_grads(model.head);
  g.classifier = classifier_zero_grads(model.classifier);
  return g;
}

std::vector<std::pair<std::string, Eigen::Index>> param_layout(
    const SpeakerModel& model) {
  std::vector<std::pair<std::string, Eigen::Index>> out;
  for (std::size_t k = 0; k < model.encoder.layers.size(); ++k) {
    const auto& l = model.encoder.layers[k];
    out.emplace_back("frame" + std::to_string(k) + ".W", l.W.size());
    out.emplace_back("frame" + std::to_string(k) + ".b", l.b.size());
  }
  out.emplace_back("mu.W", model.head.mu_layer.W.size());
  out.emplace_back("mu.b", model.head.mu_layer.b.size());
  if (model.head.sigma_layer.W.size() > 0) {
    out.emplace_back("sigma.W", model.head.sigma_layer.W.size());
    out.emplace_back("sigma.b", model.head.sigma_layer.b.size());
  }
  out.emplace_back("prototypes", model.classifier.prototypes.size());
  if (model.classifier.has_bias())
    out.emplace_back("class_bias", model.classifier.bias.size());
  return out;
}

Eigen::Index param_count(const SpeakerModel& model) {
  Eigen::Index n = 0;
  for (const auto& [name, size] : param_layout(model)) n += size;
  return n;
}

namespace {

void copy_out(const Matrix& m, Vector& flat, Eigen::Index& pos) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) flat(pos++) = m(r, c);
}

void copy_in(Matrix& m, const Vector& flat, Eigen::Index& pos) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = flat(pos++);
}

void copy_out(const Vector& v, Vector& flat, Eigen::Index& pos) {
  flat.segment(pos, v.size()) = v;
  pos += v.size();
}

void copy_in(Vector& v, const Vector& flat, Eigen::Index& pos) {
  v = flat.segment(pos, v.size());
  pos += v.size();
}

}  // namespace

Vector pack_params(const SpeakerModel& model) {
  Vector flat(param_count(model));
  Eigen::Index pos = 0;
  for (const auto& l : model.encoder.layers) {
    copy_out(l.W, flat, pos);
    copy_out(l.b, flat, pos);
  }
  copy_out(model.head.mu_layer.W, flat, pos);
  copy_out(model.head.mu_layer.b, flat, pos);
  if (model.head.sigma_layer.W.size() > 0) {
    copy_out(model.head.sigma_layer.W, flat, pos);
    copy_out(model.head.sigma_layer.b, flat, pos);
  }
  copy_out(model.classifier.prototypes, flat, pos);
  if (model.classifier.has_bias()) copy_out(model.classifier.bias, flat, pos);
  return flat;
}

void unpack_params(const Vector& flat, SpeakerModel& model) {
  if (flat.size() != param_count(model))
    throw std::invalid_argument("unpack_params: size mismatch");
  Eigen::Index pos = 0;
  for (auto& l : model.encoder.layers) {
    copy_in(l.W, flat, pos);
    copy_in(l.b, flat, pos);
  }
  copy_in(model.head.mu_layer.W, flat, pos);
  copy_in(model.head.mu_layer.b, flat, pos);
  if (model.head.sigma_layer.W.size() > 0) {
    copy_in(model.head.sigma_layer.W, flat, pos);
    copy_in(model.head.sigma_layer.b, flat, pos);
  }
  copy_in(model.classifier.prototypes, flat, pos);
  if (model.classifier.has_bias()) copy_in(model.classifier.bias, flat, pos);
}

Vector pack_grads(const SpeakerModel& model, const ModelGrads& grads) {
  Vector flat(param_count(model));
  Eigen::Index pos = 0;
  for (const auto& l : grads.encoder.layers) {
    copy_out(l.W, flat, pos);
    copy_out(l.b, flat, pos);
  }
  copy_out(grads.head.mu_layer.W, flat, pos);
  copy_out(grads.head.mu_layer.b, flat, pos);
  if (model.head.sigma_layer.W.size() > 0) {
    copy_out(grads.head.sigma_layer.W, flat, pos);
    copy_out(grads.head.sigma_layer.b, flat, pos);
  }
  copy_out(grads.classifier.prototypes, flat, pos);
  if (model.classifier.has_bias()) copy_out(grads.classifier.bias, flat, pos);
  return flat;
}

LossBreakdown utterance_loss(const SpeakerModel& model, const Matrix& frames,
                             Eigen::Index target, const StepLossConfig& cfg,
                             const NoiseBlock* noise, ModelGrads* grads,
                             double grad_weight) {
  EncoderCache cache;
  const Vector pooled = encoder_forward(frames, model.encoder, &cache);

  LossBreakdown out;
  Vector d_mu = Vector::Zero(model.embedding_dim());
  Vector d_sigma;
  ClassifierGrads cgrads = classifier_zero_grads(model.classifier);
  StochasticEmbedding emb;

  if (model.stochastic()) {
    if (!noise)
      throw std::invalid_argument("utterance_loss: stochastic model needs noise");
    emb = head_forward(pooled, model.head);
    VibConfig vcfg{cfg.beta, int(noise->e.rows()),
                   model.kind == LossKind::VibLn};
    out.loss = vib_loss_and_grad(emb, model.classifier, target, vcfg, *noise,
                                 d_mu, d_sigma, cgrads, &out.ce_term,
                                 &out.kl_term);
  } else {
    emb.mu = model.head.mu_layer.W * pooled + model.head.mu_layer.b;
    const Vector& z = emb.mu;
    if (model.kind == LossKind::Aam) {
      AamConfig acfg{cfg.margin, model.classifier.scale};
      out.loss = aam_loss_and_grad(z, model.classifier, target, acfg, d_mu,
                                   cgrads);
    } else {
      out.loss = ce_loss_and_grad(z, model.classifier, target, d_mu, cgrads);
    }
    out.ce_term = out.loss;
  }

  if (!grads) return out;

  Vector d_pooled;
  if (model.stochastic()) {
    VibHeadGrads hg = head_zero_grads(model.head);
    d_pooled = head_backward(model.head, pooled, emb, d_mu, d_sigma, hg);
    grads->head.mu_layer.W += grad_weight * hg.mu_layer.W;
    grads->head.mu_layer.b += grad_weight * hg.mu_layer.b;
    grads->head.sigma_layer.W += grad_weight * hg.sigma_layer.W;
    grads->head.sigma_layer.b += grad_weight * hg.sigma_layer.b;
  } else {
    grads->head.mu_layer.W.noalias() +=
        grad_weight * (d_mu * pooled.transpose());
    grads->head.mu_layer.b += grad_weight * d_mu;
    d_pooled = model.head.mu_layer.W.transpose() * d_mu;
  }

  grads->classifier.prototypes += grad_weight * cgrads.prototypes;
  if (model.classifier.has_bias())
    grads->classifier.bias += grad_weight * cgrads.bias;

  EncoderGrads eg = encoder_zero_grads(model.encoder);
  encoder_backward(model.encoder, cache, d_pooled, eg);
  for (std::size_t k = 0; k < eg.layers.size(); ++k) {
    grads->encoder.layers[k].W += grad_weight * eg.layers[k].W;
    grads->encoder.layers[k].b += grad_weight * eg.layers[k].b;
  }
  return out;
}

LossBreakdown batch_objective(const SpeakerModel& model, const Batch& batch,
                              const StepLossConfig& cfg, const CounterRng& rng,
                              std::uint64_t step, ModelGrads* grads) {
  if (batch.frames.empty())
    throw std::invalid_argument("batch_objective: empty batch");
  const double w = 1.0 / double(batch.frames.size());
  LossBreakdown total;
  for (std::size_t i = 0; i < batch.frames.size(); ++i) {
    NoiseBlock noise;
    const NoiseBlock* noise_ptr = nullptr;
    if (model.stochastic()) {
      noise = make_noise(rng, step, batch.utterance_indices[i],
                         cfg.num_samples, model.embedding_dim());
      noise_ptr = &noise;
    }
    const LossBreakdown one = utterance_loss(
        model, *batch.frames[i], batch.targets[i], cfg, noise_ptr, grads, w);
    total.loss += w * one.loss;
    total.ce_term += w * one.ce_term;
    total.kl_term += w * one.kl_term;
  }
  return total;
}

Vector extract_embedding(const SpeakerModel& model, const Matrix& frames) {
  const Vector pooled = encoder_forward(frames, model.encoder);
  return model.head.mu_layer.W * pooled + model.head.mu_layer.b;
}

}  // namespace vibspk
