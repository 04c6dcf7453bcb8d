#pragma once

#include <functional>

#include "vibspk/model.hpp"
#include "vibspk/synthetic.hpp"

namespace vibspk {

// SGD with momentum and a linearly decaying learning rate. The margin
// (AAM) or beta (VIB) follows the ramp schedule; an optional fine-tuning
// phase switches to longer examples and a larger margin for the last
// epochs (beta stays at its scheduled value).
struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 0.2;
  double momentum = 0.9;
  RampSchedule schedule;  // final_value = margin or beta
  int num_samples = 10;   // J
  Eigen::Index train_frames = 0;  // 0 = all stored frames

  bool fine_tune = false;
  int fine_tune_epochs = 10;
  Eigen::Index fine_tune_frames = 0;  // 0 = all stored frames
  double fine_tune_margin = 0.5;

  std::uint64_t seed = 1;  // batch order and sampling noise
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double ce_term = 0.0;
  double kl_term = 0.0;      // VIB losses
  double scheduled = 0.0;    // margin or beta in effect
  Eigen::Index frames = 0;   // frames per example in effect
};

struct TrainResult {
  SpeakerModel model;
  std::vector<EpochLog> logs;
  bool aborted = false;  // non-finite loss encountered
};

using EpochCallback =
    std::function<void(const SpeakerModel& model, const EpochLog& log)>;

// Labels are taken from the utterances' speaker ids; the label->index
// mapping is sorted speaker order.
TrainResult train(SpeakerModel model,
                  const std::vector<const FeatureMatrix*>& utterances,
                  const TrainConfig& cfg,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace vibspk
