#include "vibspk/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace vibspk {

TrainResult train(SpeakerModel model,
                  const std::vector<const FeatureMatrix*>& utterances,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (utterances.empty()) throw std::invalid_argument("train: no utterances");

  std::map<std::string, Eigen::Index> speaker_index;
  for (const auto* u : utterances) speaker_index.emplace(u->speaker_id, 0);
  Eigen::Index next = 0;
  for (auto& [spk, idx] : speaker_index) idx = next++;
  if (next != model.num_classes())
    throw std::invalid_argument("train: classifier size != speaker count");

  std::vector<Eigen::Index> targets(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i)
    targets[i] = speaker_index.at(utterances[i]->speaker_id);

  // Cropped views are materialized once per frame-length setting.
  std::vector<Matrix> cropped;
  Eigen::Index cropped_frames = -1;
  auto crop_to = [&](Eigen::Index frames) {
    if (frames == cropped_frames) return;
    cropped.clear();
    cropped.reserve(utterances.size());
    for (const auto* u : utterances) {
      const Eigen::Index t =
          (frames <= 0) ? u->frames.rows()
                        : std::min<Eigen::Index>(frames, u->frames.rows());
      cropped.push_back(u->frames.topRows(t));
    }
    cropped_frames = frames;
  };

  const CounterRng rng(cfg.seed);
  Vector velocity = Vector::Zero(param_count(model));

  TrainResult result;
  const int ft_start =
      cfg.fine_tune ? std::max(0, cfg.epochs - cfg.fine_tune_epochs)
                    : cfg.epochs;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool in_ft = epoch >= ft_start;
    crop_to(in_ft ? cfg.fine_tune_frames : cfg.train_frames);

    StepLossConfig step_cfg;
    step_cfg.num_samples = cfg.num_samples;
    const double scheduled = schedule_value(epoch, cfg.schedule);
    if (model.kind == LossKind::Aam)
      step_cfg.margin = in_ft ? cfg.fine_tune_margin : scheduled;
    else if (model.stochastic())
      step_cfg.beta = scheduled;

    // seeded permutation, stable across platforms
    std::vector<std::size_t> order(utterances.size());
    std::iota(order.begin(), order.end(), 0);
    const std::uint64_t shuffle_key =
        CounterRng::derive_key(0x73687566, std::uint64_t(epoch));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ka = rng.bits(shuffle_key, a);
      const auto kb = rng.bits(shuffle_key, b);
      return ka != kb ? ka < kb : a < b;
    });

    const double lr =
        cfg.learning_rate * (1.0 - double(epoch) / double(cfg.epochs));

    EpochLog log;
    log.epoch = epoch;
    log.scheduled = model.kind == LossKind::Aam ? step_cfg.margin
                                                : step_cfg.beta;
    log.frames = cropped.front().rows();
    double seen = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += std::size_t(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + std::size_t(cfg.batch_size));
      Batch batch;
      for (std::size_t i = start; i < end; ++i) {
        batch.frames.push_back(&cropped[order[i]]);
        batch.targets.push_back(targets[order[i]]);
        batch.utterance_indices.push_back(order[i]);
      }
      ModelGrads grads = zero_grads(model);
      const std::uint64_t step =
          (std::uint64_t(epoch) << 24) | std::uint64_t(start / cfg.batch_size);
      const LossBreakdown bd =
          batch_objective(model, batch, step_cfg, rng, step, &grads);
      if (!std::isfinite(bd.loss)) {
        result.aborted = true;
        result.model = std::move(model);
        result.logs.push_back(log);
        return result;
      }
      const double w = double(end - start);
      log.loss += w * bd.loss;
      log.ce_term += w * bd.ce_term;
      log.kl_term += w * bd.kl_term;
      seen += w;

      velocity = cfg.momentum * velocity - lr * pack_grads(model, grads);
      Vector params = pack_params(model);
      params += velocity;
      unpack_params(params, model);
    }
    log.loss /= seen;
    log.ce_term /= seen;
    log.kl_term /= seen;
    result.logs.push_back(log);
    if (on_epoch) on_epoch(model, log);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace vibspk
