#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vibspk/backend.hpp"
#include "vibspk/metrics.hpp"
#include "vibspk/model.hpp"
#include "vibspk/rng.hpp"

namespace {

using namespace vibspk;

Matrix random_frames(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(gen);
  return m;
}

SpeakerModel make_model(LossKind kind) {
  ModelConfig cfg;
  cfg.feature_dim = 20;
  cfg.frame_layer_dims = {32};
  cfg.embedding_dim = 16;
  cfg.num_speakers = 200;
  cfg.kind = kind;
  return init_model(cfg, 7);
}

void BM_EncoderForward(benchmark::State& state) {
  const SpeakerModel model = make_model(LossKind::Ce);
  const Matrix frames = random_frames(state.range(0), 20, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encoder_forward(frames, model.encoder));
  }
}
BENCHMARK(BM_EncoderForward)->Arg(100)->Arg(300);

void BM_StatsPooling(benchmark::State& state) {
  const Matrix outputs = random_frames(state.range(0), 32, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats_pooling(outputs));
  }
}
BENCHMARK(BM_StatsPooling)->Arg(100)->Arg(300);

void BM_UtteranceLossBackward(benchmark::State& state) {
  const LossKind kind = state.range(0) ? LossKind::Vib : LossKind::Ce;
  const SpeakerModel model = make_model(kind);
  const Matrix frames = random_frames(300, 20, 3);
  StepLossConfig cfg;
  cfg.beta = 0.004;
  cfg.num_samples = 10;
  const CounterRng rng(11);
  NoiseBlock noise;
  if (model.stochastic())
    noise = make_noise(rng, 0, 0, cfg.num_samples, model.embedding_dim());
  ModelGrads grads = zero_grads(model);
  for (auto _ : state) {
    const auto out = utterance_loss(model, frames, 5, cfg,
                                    model.stochastic() ? &noise : nullptr,
                                    &grads);
    benchmark::DoNotOptimize(out.loss);
  }
}
BENCHMARK(BM_UtteranceLossBackward)->Arg(0)->Arg(1);

void BM_PldaScore(benchmark::State& state) {
  const Eigen::Index dim = 16;
  std::mt19937_64 gen(4);
  std::normal_distribution<double> dist;
  EmbeddingSet set;
  set.rows = random_frames(400, dim, 5);
  for (int s = 0; s < 100; ++s)
    for (int u = 0; u < 4; ++u) set.speakers.push_back("s" + std::to_string(s));
  const auto fit = fit_plda(set, 5);
  const PldaScorer scorer(fit.model);
  Vector e = Vector::NullaryExpr(dim, [&] { return dist(gen); });
  Vector t = Vector::NullaryExpr(dim, [&] { return dist(gen); });
  for (auto _ : state) {
    benchmark::DoNotOptimize(scorer.score(e, t));
  }
}
BENCHMARK(BM_PldaScore);

void BM_CosineScore(benchmark::State& state) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> dist;
  Vector e = Vector::NullaryExpr(16, [&] { return dist(gen); });
  Vector t = Vector::NullaryExpr(16, [&] { return dist(gen); });
  for (auto _ : state) {
    benchmark::DoNotOptimize(cosine_score(e, t));
  }
}
BENCHMARK(BM_CosineScore);

void BM_Eer(benchmark::State& state) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> dist;
  ScoreSet scores;
  for (Eigen::Index i = 0; i < state.range(0); ++i) {
    scores.target_scores.push_back(dist(gen) + 1.0);
    scores.nontarget_scores.push_back(dist(gen));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(eer(scores));
  }
}
BENCHMARK(BM_Eer)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
