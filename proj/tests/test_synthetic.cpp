#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "vibspk/metrics.hpp"
#include "vibspk/synthetic.hpp"

using namespace vibspk;

namespace {

Vector utterance_mean(const Utterance& u) {
  return u.features.frames.colwise().mean().transpose();
}

PopulationConfig small_config() {
  PopulationConfig cfg;
  cfg.num_train_speakers = 6;
  cfg.num_heldout_speakers = 4;
  cfg.feature_dim = 5;
  cfg.speaker_space_dim = 3;
  cfg.frames_per_utterance = 12;
  cfg.utterances_per_speaker = 3;
  cfg.enroll_utterances_per_speaker = 1;
  cfg.cohort_utterances_per_speaker = 1;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("split names round-trip") {
  for (Split s : {Split::Train, Split::HeldoutEnroll, Split::HeldoutTest,
                  Split::Cohort})
    CHECK(parse_split(split_name(s)) == s);
  CHECK_THROWS_AS(parse_split("bogus"), std::invalid_argument);
}

TEST_CASE("generation is bit-identical for the same seed") {
  const auto cfg = small_config();
  const Corpus a = generate(cfg);
  const Corpus b = generate(cfg);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(a.utterances[i].features.utterance_id ==
          b.utterances[i].features.utterance_id);
    CHECK((a.utterances[i].features.frames.array() ==
           b.utterances[i].features.frames.array())
              .all());
  }
  auto cfg2 = cfg;
  cfg2.seed = 43;
  const Corpus c = generate(cfg2);
  CHECK((a.utterances[0].features.frames - c.utterances[0].features.frames)
            .lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("split bookkeeping: counts and speaker disjointness") {
  const auto cfg = small_config();
  const Corpus corpus = generate(cfg);
  std::map<Split, int> counts;
  for (const auto& u : corpus.utterances) ++counts[u.split];
  CHECK(counts[Split::Train] ==
        cfg.num_train_speakers * cfg.utterances_per_speaker);
  CHECK(counts[Split::Cohort] ==
        cfg.num_train_speakers * cfg.cohort_utterances_per_speaker);
  CHECK(counts[Split::HeldoutEnroll] ==
        cfg.num_heldout_speakers * cfg.enroll_utterances_per_speaker);
  CHECK(counts[Split::HeldoutTest] ==
        cfg.num_heldout_speakers * cfg.utterances_per_speaker);

  const auto train = corpus.speakers(Split::Train);
  const auto heldout = corpus.speakers(Split::HeldoutTest);
  std::set<std::string> train_set(train.begin(), train.end());
  for (const auto& s : heldout) CHECK(train_set.count(s) == 0);
  // cohort utterances come from training speakers
  for (const auto& s : corpus.speakers(Split::Cohort))
    CHECK(train_set.count(s) == 1);
}

TEST_CASE("vanishing noise collapses a speaker to a single point") {
  auto cfg = small_config();
  cfg.within_scale = 1e-12;
  cfg.frame_noise_scale = 1e-12;
  const Corpus corpus = generate(cfg);
  const Matrix& first = corpus.utterances[0].features.frames;
  for (const auto& u : corpus.utterances) {
    if (u.features.speaker_id != corpus.utterances[0].features.speaker_id)
      continue;
    for (Eigen::Index t = 0; t < u.features.frames.rows(); ++t)
      CHECK((u.features.frames.row(t) - first.row(0)).lpNorm<Eigen::Infinity>() <
            1e-9);
  }
  CHECK_THROWS_AS(
      [] {
        auto bad = small_config();
        bad.within_scale = 0.0;
        return generate(bad);
      }(),
      std::invalid_argument);
}

TEST_CASE("empirical between/within variances match the configured scales") {
  PopulationConfig cfg;
  cfg.num_train_speakers = 500;
  cfg.num_heldout_speakers = 0;
  cfg.feature_dim = 8;
  cfg.speaker_space_dim = 4;
  cfg.between_scale = 1.0;
  cfg.within_scale = 0.5;
  cfg.frame_noise_scale = 0.5;
  cfg.frames_per_utterance = 20;
  cfg.utterances_per_speaker = 8;
  cfg.cohort_utterances_per_speaker = 0;
  cfg.seed = 7;
  const Corpus corpus = generate(cfg);

  // one-way ANOVA decomposition over utterance-mean features
  std::map<std::string, std::vector<Vector>> by_speaker;
  for (const auto& u : corpus.utterances)
    by_speaker[u.features.speaker_id].push_back(utterance_mean(u));

  const Eigen::Index d = cfg.feature_dim;
  const double n = double(cfg.utterances_per_speaker);
  double within_acc = 0.0;
  std::vector<Vector> speaker_means;
  for (const auto& [spk, utts] : by_speaker) {
    Vector mean = Vector::Zero(d);
    for (const auto& v : utts) mean += v;
    mean /= n;
    speaker_means.push_back(mean);
    for (const auto& v : utts) within_acc += (v - mean).squaredNorm();
  }
  const double num_speakers = double(speaker_means.size());
  const double within_var = within_acc / (num_speakers * (n - 1.0) * double(d));

  Vector global = Vector::Zero(d);
  for (const auto& m : speaker_means) global += m;
  global /= num_speakers;
  double raw_between = 0.0;
  for (const auto& m : speaker_means) raw_between += (m - global).squaredNorm();
  raw_between /= ((num_speakers - 1.0) * double(d));
  const double between_var = raw_between - within_var / n;

  const double expected_within =
      cfg.within_scale * cfg.within_scale +
      cfg.frame_noise_scale * cfg.frame_noise_scale /
          double(cfg.frames_per_utterance);
  const double expected_between = cfg.between_scale * cfg.between_scale;

  CHECK(std::abs(within_var - expected_within) / expected_within < 0.10);
  CHECK(std::abs(between_var - expected_between) / expected_between < 0.10);
}

TEST_CASE("oracle utterance means separate speakers at low EER") {
  PopulationConfig cfg;  // defaults
  cfg.seed = 3;
  const Corpus corpus = generate(cfg);
  const TrialList trials = make_trials(corpus, 300, 2000, 99);

  std::map<std::string, Vector> means;
  Vector global = Vector::Zero(cfg.feature_dim);
  for (const auto& u : corpus.utterances) {
    means[u.features.utterance_id] = utterance_mean(u);
    global += means[u.features.utterance_id];
  }
  global /= double(means.size());
  for (auto& [id, v] : means) v -= global;

  ScoreSet scores;
  for (const auto& t : trials) {
    const Vector& e = means.at(t.enroll_id);
    const Vector& x = means.at(t.test_id);
    const double s = e.dot(x) / (e.norm() * x.norm());
    (t.target ? scores.target_scores : scores.nontarget_scores).push_back(s);
  }
  CHECK(eer(scores) < 0.05);
}

TEST_CASE("hard mode changes the data but keeps the bookkeeping") {
  auto cfg = small_config();
  const Corpus plain = generate(cfg);
  cfg.hard_mode = true;
  const Corpus hard = generate(cfg);
  REQUIRE(plain.utterances.size() == hard.utterances.size());
  CHECK((plain.utterances[0].features.frames -
         hard.utterances[0].features.frames)
            .lpNorm<Eigen::Infinity>() > 0.0);
  for (std::size_t i = 0; i < plain.utterances.size(); ++i) {
    CHECK(plain.utterances[i].features.utterance_id ==
          hard.utterances[i].features.utterance_id);
    CHECK(plain.utterances[i].split == hard.utterances[i].split);
  }
}

TEST_CASE("trial lists are valid, deduplicated, and reproducible") {
  const auto cfg = small_config();
  const Corpus corpus = generate(cfg);

  std::map<std::string, std::string> speaker_of;
  std::map<std::string, Split> split_of;
  for (const auto& u : corpus.utterances) {
    speaker_of[u.features.utterance_id] = u.features.speaker_id;
    split_of[u.features.utterance_id] = u.split;
  }

  const TrialList trials = make_trials(corpus, 4, 12, 5);
  CHECK(trials.size() == 16);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& t : trials) {
    CHECK(t.enroll_id != t.test_id);
    CHECK(split_of.at(t.enroll_id) == Split::HeldoutEnroll);
    CHECK(split_of.at(t.test_id) == Split::HeldoutTest);
    CHECK(t.target == (speaker_of.at(t.enroll_id) == speaker_of.at(t.test_id)));
    CHECK(seen.insert({t.enroll_id, t.test_id}).second);
  }

  const TrialList again = make_trials(corpus, 4, 12, 5);
  REQUIRE(again.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(trials[i].enroll_id == again[i].enroll_id);
    CHECK(trials[i].test_id == again[i].test_id);
    CHECK(trials[i].target == again[i].target);
  }

  const TrialList reseeded = make_trials(corpus, 4, 12, 6);
  bool any_differ = false;
  for (std::size_t i = 0; i < trials.size(); ++i)
    any_differ |= trials[i].enroll_id != reseeded[i].enroll_id ||
                  trials[i].test_id != reseeded[i].test_id;
  CHECK(any_differ);
}

TEST_CASE("trial capacity errors name the achievable maximum") {
  const auto cfg = small_config();  // 4 heldout speakers x 1 enroll x 3 test
  const Corpus corpus = generate(cfg);
  // targets: 4 speakers x (1 enroll x 3 test) = 12
  CHECK_NOTHROW(make_trials(corpus, 12, 0, 1));
  CHECK_THROWS_WITH_AS(make_trials(corpus, 13, 0, 1),
                       doctest::Contains("only 12 are achievable"),
                       std::invalid_argument);

  const TrialList nontarget_only = make_trials(corpus, 0, 10, 1);
  for (const auto& t : nontarget_only) CHECK_FALSE(t.target);
}
