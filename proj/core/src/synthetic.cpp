#include "vibspk/synthetic.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace vibspk {

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::HeldoutEnroll: return "heldout-enroll";
    case Split::HeldoutTest: return "heldout-test";
    case Split::Cohort: return "cohort";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "heldout-enroll") return Split::HeldoutEnroll;
  if (name == "heldout-test") return Split::HeldoutTest;
  if (name == "cohort") return Split::Cohort;
  throw std::invalid_argument("unknown split: " + name);
}

std::vector<std::string> Corpus::speakers(Split split) const {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& u : utterances) {
    if (u.split != split) continue;
    if (seen.insert(u.features.speaker_id).second)
      out.push_back(u.features.speaker_id);
  }
  return out;
}

namespace {

constexpr std::uint64_t kMapKey = 0x6d6170;       // feature map
constexpr std::uint64_t kSpeakerKey = 0x73706b;   // identity vectors
constexpr std::uint64_t kSessionKey = 0x736573;   // session offsets
constexpr std::uint64_t kFrameKey = 0x667261;     // frame noise
constexpr std::uint64_t kRotKey = 0x726f74;       // hard-mode rotations

Matrix feature_map(const PopulationConfig& cfg, const CounterRng& rng) {
  Matrix m(cfg.feature_dim, cfg.speaker_space_dim);
  for (Eigen::Index r = 0; r < cfg.feature_dim; ++r)
    for (Eigen::Index c = 0; c < cfg.speaker_space_dim; ++c)
      m(r, c) = rng.normal(kMapKey, std::uint64_t(r) * cfg.speaker_space_dim + c);
  // unit average per-dimension variance of the mapped identity
  m *= std::sqrt(double(cfg.feature_dim) / m.squaredNorm());
  return m;
}

Matrix speaker_rotation(const PopulationConfig& cfg, const CounterRng& rng,
                        std::uint64_t speaker_index) {
  const std::uint64_t key = CounterRng::derive_key(kRotKey, speaker_index);
  Matrix g(cfg.feature_dim, cfg.feature_dim);
  for (Eigen::Index r = 0; r < cfg.feature_dim; ++r)
    for (Eigen::Index c = 0; c < cfg.feature_dim; ++c)
      g(r, c) = rng.normal(key, std::uint64_t(r) * cfg.feature_dim + c);
  return Eigen::HouseholderQR<Matrix>(g).householderQ();
}

}  // namespace

Corpus generate(const PopulationConfig& cfg) {
  if (cfg.feature_dim < 1 || cfg.speaker_space_dim < 1 ||
      cfg.frames_per_utterance < 1)
    throw std::invalid_argument("generate: dims must be >= 1");
  if (cfg.between_scale <= 0 || cfg.within_scale <= 0 ||
      cfg.frame_noise_scale <= 0)
    throw std::invalid_argument("generate: scales must be > 0");

  const CounterRng rng(cfg.seed);
  const Matrix map = feature_map(cfg, rng);
  const Eigen::Index D = cfg.feature_dim;
  const Eigen::Index T = cfg.frames_per_utterance;

  // Hard mode makes the within-speaker covariance speaker-dependent:
  // an anisotropic session profile rotated per speaker.
  Vector session_profile = Vector::Ones(D);
  if (cfg.hard_mode && D > 1)
    for (Eigen::Index d = 0; d < D; ++d)
      session_profile(d) = 0.5 + 1.5 * double(d) / double(D - 1);

  Corpus corpus;
  corpus.feature_dim = D;
  const Eigen::Index total_speakers =
      cfg.num_train_speakers + cfg.num_heldout_speakers;

  std::uint64_t utt_counter = 0;
  for (Eigen::Index s = 0; s < total_speakers; ++s) {
    const bool heldout = s >= cfg.num_train_speakers;
    char spk_name[32];
    std::snprintf(spk_name, sizeof(spk_name), "%s%04d", heldout ? "hspk" : "spk",
                  int(heldout ? s - cfg.num_train_speakers : s));

    Vector identity(cfg.speaker_space_dim);
    const std::uint64_t id_key = CounterRng::derive_key(kSpeakerKey, s);
    for (Eigen::Index d = 0; d < cfg.speaker_space_dim; ++d)
      identity(d) = cfg.between_scale * rng.normal(id_key, d);
    const Vector speaker_mean = map * identity;

    Matrix rot;
    if (cfg.hard_mode) rot = speaker_rotation(cfg, rng, s);

    Eigen::Index num_utts = cfg.utterances_per_speaker;
    if (heldout)
      num_utts = cfg.enroll_utterances_per_speaker + cfg.utterances_per_speaker;
    else
      num_utts = cfg.utterances_per_speaker + cfg.cohort_utterances_per_speaker;

    for (Eigen::Index u = 0; u < num_utts; ++u, ++utt_counter) {
      Split split;
      if (heldout)
        split = (u < cfg.enroll_utterances_per_speaker) ? Split::HeldoutEnroll
                                                        : Split::HeldoutTest;
      else
        split = (u < cfg.utterances_per_speaker) ? Split::Train : Split::Cohort;

      const std::uint64_t sess_key =
          CounterRng::derive_key(kSessionKey, s, u);
      Vector session(D);
      for (Eigen::Index d = 0; d < D; ++d)
        session(d) =
            cfg.within_scale * session_profile(d) * rng.normal(sess_key, d);

      const std::uint64_t frame_key = CounterRng::derive_key(kFrameKey, s, u);
      Matrix noise(T, D);
      for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index d = 0; d < D; ++d)
          noise(t, d) =
              cfg.frame_noise_scale * rng.normal(frame_key, std::uint64_t(t) * D + d);

      Matrix deviation = noise.rowwise() + session.transpose();
      if (cfg.hard_mode) deviation = deviation * rot.transpose();

      Utterance utt;
      utt.split = split;
      utt.features.speaker_id = spk_name;
      char utt_name[48];
      std::snprintf(utt_name, sizeof(utt_name), "%s_u%03d", spk_name, int(u));
      utt.features.utterance_id = utt_name;
      utt.features.frames = deviation.rowwise() + speaker_mean.transpose();
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

TrialList make_trials(const Corpus& corpus, Eigen::Index num_target,
                      Eigen::Index num_nontarget, std::uint64_t seed) {
  std::vector<const Utterance*> enroll, test;
  for (const auto& u : corpus.utterances) {
    if (u.split == Split::HeldoutEnroll) enroll.push_back(&u);
    if (u.split == Split::HeldoutTest) test.push_back(&u);
  }
  if (enroll.empty() || test.empty())
    throw std::invalid_argument("make_trials: held-out splits are empty");

  struct Candidate {
    std::uint64_t order;
    const Utterance* e;
    const Utterance* t;
  };
  std::vector<Candidate> targets, nontargets;
  const CounterRng rng(seed);
  std::uint64_t idx = 0;
  for (const auto* e : enroll) {
    for (const auto* t : test) {
      ++idx;
      if (e->features.utterance_id == t->features.utterance_id) continue;
      Candidate c{rng.bits(0x747269616cULL, idx), e, t};
      if (e->features.speaker_id == t->features.speaker_id)
        targets.push_back(c);
      else
        nontargets.push_back(c);
    }
  }
  auto take = [](std::vector<Candidate>& pool, Eigen::Index n,
                 const char* what) {
    if (n > Eigen::Index(pool.size()))
      throw std::invalid_argument(
          std::string("make_trials: requested ") + std::to_string(n) + " " +
          what + " trials but only " + std::to_string(pool.size()) +
          " are achievable");
    std::sort(pool.begin(), pool.end(),
              [](const Candidate& a, const Candidate& b) {
                return a.order < b.order;
              });
    pool.resize(n);
  };
  take(targets, num_target, "target");
  take(nontargets, num_nontarget, "nontarget");

  TrialList trials;
  trials.reserve(targets.size() + nontargets.size());
  for (const auto& c : targets)
    trials.push_back(
        {c.e->features.utterance_id, c.t->features.utterance_id, true});
  for (const auto& c : nontargets)
    trials.push_back(
        {c.e->features.utterance_id, c.t->features.utterance_id, false});
  return trials;
}

}  // namespace vibspk
