#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vibspk/encoder.hpp"
#include "vibspk/rng.hpp"

namespace vibspk {

enum class Split { Train, HeldoutEnroll, HeldoutTest, Cohort };

std::string split_name(Split s);
Split parse_split(const std::string& name);

struct PopulationConfig {
  Eigen::Index num_train_speakers = 200;
  Eigen::Index num_heldout_speakers = 50;
  Eigen::Index feature_dim = 20;
  Eigen::Index speaker_space_dim = 10;
  double between_scale = 1.0;
  double within_scale = 0.4;        // session-level offset
  double frame_noise_scale = 1.0;   // i.i.d. per frame
  Eigen::Index frames_per_utterance = 300;
  Eigen::Index utterances_per_speaker = 5;
  Eigen::Index enroll_utterances_per_speaker = 2;  // held-out enroll split
  Eigen::Index cohort_utterances_per_speaker = 1;  // extra train-speaker utts
  bool hard_mode = false;  // per-speaker rotation of the within-speaker noise
  std::uint64_t seed = 1;
};

struct Utterance {
  FeatureMatrix features;
  Split split;
};

struct Corpus {
  std::vector<Utterance> utterances;
  Eigen::Index feature_dim = 0;
  std::vector<std::string> speakers(Split split) const;
};

// Linear-Gaussian speaker population: speaker identity ~ N(0, between^2 I)
// in speaker space, mapped to feature space by a fixed random matrix
// scaled to unit average per-dimension variance; each utterance adds a
// session offset ~ N(0, within^2 I) and per-frame noise
// ~ N(0, frame_noise^2 I). Fully determined by the seed.
Corpus generate(const PopulationConfig& cfg);

struct Trial {
  std::string enroll_id;
  std::string test_id;
  bool target = false;
};

using TrialList = std::vector<Trial>;

// Pairs held-out-enroll utterances against held-out-test utterances;
// target trials share a speaker, nontarget trials do not, no utterance
// is paired with itself. Reproducible from the seed.
TrialList make_trials(const Corpus& corpus, Eigen::Index num_target,
                      Eigen::Index num_nontarget, std::uint64_t seed);

}  // namespace vibspk
