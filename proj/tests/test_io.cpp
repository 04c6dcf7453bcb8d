#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "vibspk/io.hpp"

using namespace vibspk;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("vibspk_io_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config parsing: values, comments, defaults") {
  const auto cfg = Config::parse_string(
      "# a comment\n"
      "epochs = 40\n"
      "learning_rate=0.25   # trailing comment\n"
      "loss = vib_ln\n"
      "snorm = true\n"
      "seed = 18446744073709551615\n",
      "test.cfg");
  CHECK(cfg.get_int("epochs") == 40);
  CHECK(cfg.get_double("learning_rate", 0.0) == doctest::Approx(0.25));
  CHECK(cfg.get_string("loss") == "vib_ln");
  CHECK(cfg.get_bool("snorm", false));
  CHECK(cfg.get_u64("seed", 0) == 18446744073709551615ULL);
  CHECK(cfg.get_int("missing", 7) == 7);
  CHECK_FALSE(cfg.has("missing"));
}

TEST_CASE("config errors carry the key and line number") {
  const auto cfg = Config::parse_string("x = 1\nepochs=abc\n", "bad.cfg");
  CHECK_THROWS_WITH_AS(cfg.get_int("epochs"), doctest::Contains("epochs"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.get_int("epochs"), doctest::Contains("bad.cfg:2"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.get_string("absent"), doctest::Contains("absent"),
                       std::runtime_error);
  CHECK_THROWS_AS(Config::parse_string("no_equals_sign\n", "bad2.cfg"),
                  std::runtime_error);
}

TEST_CASE("config hash is order independent and content sensitive") {
  const auto a = Config::parse_string("a=1\nb=2\n");
  const auto b = Config::parse_string("b=2\na=1\n");
  const auto c = Config::parse_string("a=1\nb=3\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("format_double round-trips doubles exactly") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> dist;
  for (int i = 0; i < 1000; ++i) {
    const double v = dist(gen) * std::pow(10.0, int(gen() % 40) - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(std::stod(format_double(-0.0)) == 0.0);
}

TEST_CASE("corpus files round-trip") {
  TempDir dir;
  PopulationConfig cfg;
  cfg.num_train_speakers = 3;
  cfg.num_heldout_speakers = 2;
  cfg.feature_dim = 4;
  cfg.speaker_space_dim = 2;
  cfg.frames_per_utterance = 5;
  cfg.utterances_per_speaker = 2;
  cfg.enroll_utterances_per_speaker = 1;
  cfg.cohort_utterances_per_speaker = 1;
  cfg.seed = 11;
  const Corpus corpus = generate(cfg);

  write_corpus(corpus, dir.file("features.txt"), dir.file("manifest.txt"));
  const Corpus back =
      read_corpus(dir.file("features.txt"), dir.file("manifest.txt"));

  REQUIRE(back.utterances.size() == corpus.utterances.size());
  CHECK(back.feature_dim == corpus.feature_dim);
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const auto& orig = corpus.utterances[i];
    const auto& got = back.utterances[i];
    CHECK(got.features.utterance_id == orig.features.utterance_id);
    CHECK(got.features.speaker_id == orig.features.speaker_id);
    CHECK(got.split == orig.split);
    CHECK((got.features.frames.array() == orig.features.frames.array()).all());
  }
}

TEST_CASE("trial and score files round-trip") {
  TempDir dir;
  TrialList trials{{"e1", "t1", true}, {"e1", "t2", false}, {"e2", "t1", false}};
  write_trials(trials, dir.file("trials.txt"));
  const TrialList back = read_trials(dir.file("trials.txt"));
  REQUIRE(back.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(back[i].enroll_id == trials[i].enroll_id);
    CHECK(back[i].test_id == trials[i].test_id);
    CHECK(back[i].target == trials[i].target);
  }

  std::vector<ScoredTrial> scores{{"e1", "t1", 0.987654321012345678, true},
                                  {"e1", "t2", -3.25, false}};
  write_scores(scores, dir.file("scores.txt"));
  const auto sback = read_scores(dir.file("scores.txt"));
  REQUIRE(sback.size() == 2);
  CHECK(sback[0].score == scores[0].score);
  CHECK(sback[1].score == scores[1].score);
  CHECK(sback[0].target);
  CHECK_FALSE(sback[1].target);
}

TEST_CASE("embedding files round-trip, including unlabeled rows") {
  TempDir dir;
  EmbeddingSet set;
  set.rows = Matrix::Random(3, 5);
  set.speakers = {"spk1", "", "spk2"};  // empty label written as "-"
  set.utterances = {"u1", "u2", "u3"};
  write_embeddings(set, dir.file("emb.txt"));
  const EmbeddingSet back = read_embeddings(dir.file("emb.txt"));
  CHECK((back.rows.array() == set.rows.array()).all());
  CHECK(back.speakers == set.speakers);
  CHECK(back.utterances == set.utterances);
}

TEST_CASE("enroll map parsing groups utterances per enrollment id") {
  TempDir dir;
  {
    std::ofstream out(dir.file("map.txt"));
    out << "modelA u1\nmodelA u2\nmodelB u3\n";
  }
  const auto map = read_enroll_map(dir.file("map.txt"));
  REQUIRE(map.size() == 2);
  CHECK(map.at("modelA") == std::vector<std::string>{"u1", "u2"});
  CHECK(map.at("modelB") == std::vector<std::string>{"u3"});
}

TEST_CASE("checkpoints round-trip bit-for-bit through text") {
  TempDir dir;
  for (LossKind kind : {LossKind::Ce, LossKind::Vib, LossKind::VibLn}) {
    ModelConfig mc;
    mc.feature_dim = 3;
    mc.frame_layer_dims = {6, 4};
    mc.embedding_dim = 5;
    mc.num_speakers = 4;
    mc.kind = kind;
    const SpeakerModel model = init_model(mc, 123);

    const Checkpoint ckpt = checkpoint_from_model(model, 17, 0xabcdef);
    const std::string path = dir.file("ckpt_" + loss_kind_name(kind) + ".txt");
    write_checkpoint(ckpt, path);
    const Checkpoint back = read_checkpoint(path);

    CHECK(back.epoch == 17);
    CHECK(back.config_hash == 0xabcdef);
    CHECK(back.loss_kind == loss_kind_name(kind));

    SpeakerModel restored = init_model(mc, 999);  // different init, then load
    checkpoint_into_model(back, restored);
    CHECK((pack_params(restored).array() == pack_params(model).array()).all());

    // saving again is byte-identical
    const std::string path2 = path + ".again";
    write_checkpoint(checkpoint_from_model(restored, 17, 0xabcdef), path2);
    CHECK(slurp(path) == slurp(path2));
  }
}

TEST_CASE("checkpoint loading rejects mismatched shapes") {
  ModelConfig mc;
  mc.feature_dim = 3;
  mc.frame_layer_dims = {6};
  mc.embedding_dim = 5;
  mc.num_speakers = 4;
  mc.kind = LossKind::Ce;
  const SpeakerModel model = init_model(mc, 1);
  Checkpoint ckpt = checkpoint_from_model(model, 0, 0);

  ModelConfig other = mc;
  other.embedding_dim = 6;
  SpeakerModel wrong = init_model(other, 1);
  CHECK_THROWS_AS(checkpoint_into_model(ckpt, wrong), std::runtime_error);
}

TEST_CASE("missing files raise readable errors") {
  CHECK_THROWS_AS(Config::parse_file("/nonexistent/path.cfg"),
                  std::runtime_error);
  CHECK_THROWS_AS(read_trials("/nonexistent/trials.txt"), std::runtime_error);
  CHECK_THROWS_AS(read_checkpoint("/nonexistent/ckpt.txt"),
                  std::runtime_error);
}
