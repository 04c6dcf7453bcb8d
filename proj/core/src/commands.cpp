#include "vibspk/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "vibspk/grad_check.hpp"
#include "vibspk/metrics.hpp"

namespace vibspk {

namespace {

namespace fs = std::filesystem;

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

std::ostream& log_of(const CommandContext& ctx) {
  return ctx.log ? *ctx.log : std::cout;
}

std::uint64_t master_seed(const CommandContext& ctx) {
  return ctx.seed_override ? *ctx.seed_override
                           : ctx.config.get_u64("seed", 1);
}

std::vector<Eigen::Index> parse_dim_list(const std::string& spec) {
  std::vector<Eigen::Index> dims;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    dims.push_back(Eigen::Index(std::stoll(item)));
  }
  if (dims.empty()) throw std::runtime_error("empty layer list: " + spec);
  return dims;
}

}  // namespace

PopulationConfig population_from_config(const Config& cfg,
                                        std::optional<std::uint64_t> seed) {
  PopulationConfig pop;
  pop.num_train_speakers = cfg.get_int("train_speakers", 200);
  pop.num_heldout_speakers = cfg.get_int("heldout_speakers", 50);
  pop.feature_dim = cfg.get_int("feature_dim", 20);
  pop.speaker_space_dim = cfg.get_int("speaker_space_dim", 10);
  pop.between_scale = cfg.get_double("between_scale", 1.0);
  pop.within_scale = cfg.get_double("within_scale", 0.4);
  pop.frame_noise_scale = cfg.get_double("frame_noise_scale", 1.0);
  pop.frames_per_utterance = cfg.get_int("frames", 300);
  pop.utterances_per_speaker = cfg.get_int("utterances_per_speaker", 5);
  pop.enroll_utterances_per_speaker = cfg.get_int("enroll_utterances", 2);
  pop.cohort_utterances_per_speaker = cfg.get_int("cohort_utterances", 1);
  pop.hard_mode = cfg.get_bool("hard_mode", false);
  pop.seed = seed.value_or(cfg.get_u64("seed", 1));
  return pop;
}

ModelConfig model_from_config(const Config& cfg, Eigen::Index feature_dim,
                              Eigen::Index num_speakers) {
  ModelConfig mc;
  mc.feature_dim = feature_dim;
  mc.frame_layer_dims = parse_dim_list(cfg.get_string("frame_layers", "32"));
  mc.embedding_dim = cfg.get_int("embedding_dim", 16);
  mc.num_speakers = num_speakers;
  mc.scale = cfg.get_double("scale", 30.0);
  mc.kind = parse_loss_kind(cfg.get_string("loss", "ce"));
  mc.sigma_activation =
      cfg.get_string("sigma_activation", "softplus") == "exp"
          ? SigmaActivation::Exp
          : SigmaActivation::Softplus;
  return mc;
}

TrainConfig train_from_config(const Config& cfg,
                              std::optional<std::uint64_t> seed) {
  TrainConfig tc;
  tc.epochs = int(cfg.get_int("epochs", 40));
  tc.batch_size = int(cfg.get_int("batch_size", 32));
  tc.learning_rate = cfg.get_double("learning_rate", 0.2);
  tc.momentum = cfg.get_double("momentum", 0.9);
  tc.num_samples = int(cfg.get_int("num_samples", 10));
  tc.train_frames = cfg.get_int("train_frames", 0);
  tc.schedule.warmup_epochs = int(cfg.get_int("warmup_epochs", 20));
  tc.schedule.ramp_epochs = int(cfg.get_int("ramp_epochs", 20));
  tc.schedule.ramp_floor_ratio = cfg.get_double("ramp_floor_ratio", 1e-3);
  const LossKind kind = parse_loss_kind(cfg.get_string("loss", "ce"));
  tc.schedule.final_value = (kind == LossKind::Aam)
                                ? cfg.get_double("margin", 0.2)
                                : cfg.get_double("beta", 0.0);
  tc.fine_tune = cfg.get_bool("fine_tune", false);
  tc.fine_tune_epochs = int(cfg.get_int("fine_tune_epochs", 10));
  tc.fine_tune_frames = cfg.get_int("fine_tune_frames", 0);
  tc.fine_tune_margin = cfg.get_double("fine_tune_margin", 0.5);
  const std::uint64_t base = seed.value_or(cfg.get_u64("seed", 1));
  tc.seed = cfg.get_u64("train_seed", base + 2);
  return tc;
}

int run_gen_data(const CommandContext& ctx) {
  fs::create_directories(ctx.out_dir);
  const std::uint64_t seed = master_seed(ctx);
  const PopulationConfig pop = population_from_config(ctx.config, seed);
  const Corpus corpus = generate(pop);
  write_corpus(corpus, join(ctx.out_dir, files::kFeatures),
               join(ctx.out_dir, files::kManifest));

  const Eigen::Index num_target =
      ctx.config.get_int("num_target_trials", 500);
  const Eigen::Index num_nontarget =
      ctx.config.get_int("num_nontarget_trials", 5000);
  const std::uint64_t trial_seed = ctx.config.get_u64("trial_seed", seed + 1000);
  const TrialList trials =
      make_trials(corpus, num_target, num_nontarget, trial_seed);
  write_trials(trials, join(ctx.out_dir, files::kTrials));

  std::map<Split, int> counts;
  for (const auto& u : corpus.utterances) counts[u.split]++;
  auto& out = log_of(ctx);
  out << "corpus: " << corpus.utterances.size() << " utterances, "
      << pop.num_train_speakers << " train + " << pop.num_heldout_speakers
      << " held-out speakers\n";
  for (const auto& [split, n] : counts)
    out << "  " << split_name(split) << ": " << n << " utterances\n";
  out << "trials: " << num_target << " target, " << num_nontarget
      << " nontarget\n";
  return kExitOk;
}

namespace {

std::vector<const FeatureMatrix*> split_features(const Corpus& corpus,
                                                 Split split) {
  std::vector<const FeatureMatrix*> out;
  for (const auto& u : corpus.utterances)
    if (u.split == split) out.push_back(&u.features);
  return out;
}

std::string checkpoint_epoch_name(int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%03d.txt", epoch);
  return buf;
}

}  // namespace

int run_train(const CommandContext& ctx) {
  fs::create_directories(ctx.out_dir);
  const Corpus corpus = read_corpus(join(ctx.out_dir, files::kFeatures),
                                    join(ctx.out_dir, files::kManifest));
  const auto train_utts = split_features(corpus, Split::Train);
  if (train_utts.empty()) throw std::runtime_error("train split is empty");

  std::set<std::string> speakers;
  for (const auto* u : train_utts) speakers.insert(u->speaker_id);

  const std::uint64_t seed = master_seed(ctx);
  const ModelConfig mc = model_from_config(ctx.config, corpus.feature_dim,
                                           Eigen::Index(speakers.size()));
  const std::uint64_t model_seed = ctx.config.get_u64("model_seed", seed + 1);
  SpeakerModel model = init_model(mc, model_seed);
  const TrainConfig tc = train_from_config(ctx.config, seed);
  const std::uint64_t cfg_hash = ctx.config.hash();

  std::ofstream log_file(join(ctx.out_dir, files::kTrainLog),
                         std::ios::app);
  log_file << "epoch\tloss\tce\tkl\tscheduled\tframes\n";

  const bool keep_epoch_checkpoints =
      ctx.config.get_bool("checkpoint_every_epoch", true);
  auto on_epoch = [&](const SpeakerModel& m, const EpochLog& log) {
    log_file << log.epoch << '\t' << format_double(log.loss) << '\t'
             << format_double(log.ce_term) << '\t'
             << format_double(log.kl_term) << '\t'
             << format_double(log.scheduled) << '\t' << log.frames << '\n';
    log_file.flush();
    if (keep_epoch_checkpoints)
      write_checkpoint(checkpoint_from_model(m, log.epoch, cfg_hash),
                       join(ctx.out_dir, checkpoint_epoch_name(log.epoch).c_str()));
  };

  const TrainResult result = train(std::move(model), train_utts, tc, on_epoch);
  if (result.aborted) {
    log_of(ctx) << "train: non-finite loss, aborting (last-good checkpoint "
                   "retained)\n";
    return kExitNumeric;
  }
  write_checkpoint(
      checkpoint_from_model(result.model, tc.epochs - 1, cfg_hash),
      join(ctx.out_dir, files::kCheckpointFinal));
  log_of(ctx) << "train: " << tc.epochs << " epochs, final loss "
              << format_double(result.logs.back().loss) << '\n';
  return kExitOk;
}

namespace {

SpeakerModel model_for_checkpoint(const CommandContext& ctx,
                                  const Corpus& corpus) {
  std::set<std::string> speakers;
  for (const auto& u : corpus.utterances)
    if (u.split == Split::Train) speakers.insert(u.features.speaker_id);
  const ModelConfig mc = model_from_config(ctx.config, corpus.feature_dim,
                                           Eigen::Index(speakers.size()));
  return init_model(mc, 0);
}

}  // namespace

int run_extract(const CommandContext& ctx) {
  const Corpus corpus = read_corpus(join(ctx.out_dir, files::kFeatures),
                                    join(ctx.out_dir, files::kManifest));
  SpeakerModel model = model_for_checkpoint(ctx, corpus);
  const std::string ckpt_path =
      ctx.checkpoint_path.value_or(join(ctx.out_dir, files::kCheckpointFinal));
  checkpoint_into_model(read_checkpoint(ckpt_path), model);

  EmbeddingSet set;
  set.rows.resize(Eigen::Index(corpus.utterances.size()),
                  model.embedding_dim());
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const auto& u = corpus.utterances[i];
    set.rows.row(Eigen::Index(i)) =
        extract_embedding(model, u.features.frames).transpose();
    set.utterances.push_back(u.features.utterance_id);
    set.speakers.push_back(u.features.speaker_id);
  }
  write_embeddings(set, join(ctx.out_dir, files::kEmbeddings));
  log_of(ctx) << "extract: " << set.size() << " embeddings, dim "
              << set.dim() << '\n';
  return kExitOk;
}

namespace {

struct ScoringSetup {
  PreprocessChain chain;
  bool use_plda = false;
  std::optional<TwoCovPlda> plda;
};

double raw_score(const ScoringSetup& setup, const PldaScorer* scorer,
                 const Vector& enroll, const Vector& test) {
  if (setup.use_plda) return scorer->score(enroll, test);
  return cosine_score(enroll, test);
}

}  // namespace

int run_score(const CommandContext& ctx) {
  const EmbeddingSet all = read_embeddings(join(ctx.out_dir, files::kEmbeddings));
  const TrialList trials = read_trials(join(ctx.out_dir, files::kTrials));

  std::map<std::string, Split> splits;
  {
    std::ifstream man(join(ctx.out_dir, files::kManifest));
    if (!man) throw std::runtime_error("cannot open manifest");
    std::string utt, spk, split;
    while (man >> utt >> spk >> split) splits[utt] = parse_split(split);
  }

  std::map<std::string, Eigen::Index> row_of;
  for (Eigen::Index i = 0; i < all.size(); ++i) row_of[all.utterances[i]] = i;

  EmbeddingSet train_set;
  std::vector<Eigen::Index> train_rows, cohort_rows;
  for (Eigen::Index i = 0; i < all.size(); ++i) {
    const auto it = splits.find(all.utterances[i]);
    if (it == splits.end()) continue;
    if (it->second == Split::Train) train_rows.push_back(i);
    if (it->second == Split::Cohort) cohort_rows.push_back(i);
  }
  if (train_rows.empty())
    throw std::runtime_error("score: no train-split embeddings to fit on");
  train_set.rows.resize(Eigen::Index(train_rows.size()), all.dim());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    train_set.rows.row(Eigen::Index(i)) = all.rows.row(train_rows[i]);
    train_set.speakers.push_back(all.speakers[train_rows[i]]);
    train_set.utterances.push_back(all.utterances[train_rows[i]]);
  }

  ScoringSetup setup;
  const std::string backend = ctx.config.get_string("backend", "cosine");
  const Eigen::Index lda_dim = ctx.config.get_int("lda_dim", 0);
  const bool post_ln = ctx.config.get_bool("post_lda_length_norm", false);
  setup.chain = fit_preprocess(train_set, lda_dim, post_ln);

  std::optional<PldaScorer> scorer;
  if (backend == "plda") {
    setup.use_plda = true;
    EmbeddingSet processed = train_set;
    processed.rows.resize(train_set.size(),
                          setup.chain.apply(train_set.rows.row(0).transpose())
                              .size());
    for (Eigen::Index i = 0; i < train_set.size(); ++i)
      processed.rows.row(i) =
          setup.chain.apply(train_set.rows.row(i).transpose()).transpose();
    const int iters = int(ctx.config.get_int("plda_iterations", 20));
    auto fit = fit_plda(processed, iters);
    if (fit.degenerate)
      log_of(ctx) << "score: warning, degenerate PLDA covariance floored\n";
    setup.plda = std::move(fit.model);
    scorer.emplace(*setup.plda);
  } else if (backend != "cosine") {
    throw std::runtime_error("unknown backend: " + backend);
  }

  // multi-enrollment: raw embeddings averaged before preprocessing
  std::map<std::string, std::vector<std::string>> enroll_map;
  const std::string map_path = join(ctx.out_dir, files::kEnrollMap);
  if (fs::exists(map_path)) enroll_map = read_enroll_map(map_path);

  auto raw_vector = [&](const std::string& id) -> Vector {
    const auto mapped = enroll_map.find(id);
    if (mapped != enroll_map.end()) {
      std::vector<Vector> parts;
      for (const auto& utt : mapped->second) {
        const auto it = row_of.find(utt);
        if (it == row_of.end())
          throw std::runtime_error("unknown utterance id in enroll map: " + utt);
        parts.push_back(all.rows.row(it->second).transpose());
      }
      return average_enrollment(parts);
    }
    const auto it = row_of.find(id);
    if (it == row_of.end())
      throw std::runtime_error("unknown utterance id in trials: " + id);
    return all.rows.row(it->second).transpose();
  };

  std::map<std::string, Vector> enroll_vecs, test_vecs;
  for (const auto& t : trials) {
    if (!enroll_vecs.count(t.enroll_id))
      enroll_vecs[t.enroll_id] = setup.chain.apply(raw_vector(t.enroll_id));
    if (!test_vecs.count(t.test_id))
      test_vecs[t.test_id] = setup.chain.apply(raw_vector(t.test_id));
  }

  const bool snorm = ctx.config.get_bool("snorm", false);
  const Eigen::Index top_k = ctx.config.get_int("snorm_top_k", 300);
  std::vector<Vector> cohort;
  std::map<std::string, CohortScores> enroll_cohorts, test_cohorts;
  if (snorm) {
    if (cohort_rows.empty())
      throw std::runtime_error("snorm enabled but cohort split is empty");
    for (Eigen::Index r : cohort_rows)
      cohort.push_back(setup.chain.apply(all.rows.row(r).transpose()));
    auto cohort_scores = [&](const Vector& v) {
      CohortScores cs;
      cs.scores.reserve(cohort.size());
      for (const auto& c : cohort)
        cs.scores.push_back(
            raw_score(setup, scorer ? &*scorer : nullptr, v, c));
      return cs;
    };
    for (const auto& [id, v] : enroll_vecs) enroll_cohorts[id] = cohort_scores(v);
    for (const auto& [id, v] : test_vecs) test_cohorts[id] = cohort_scores(v);
  }

  std::vector<ScoredTrial> scored;
  scored.reserve(trials.size());
  for (const auto& t : trials) {
    double s = raw_score(setup, scorer ? &*scorer : nullptr,
                         enroll_vecs.at(t.enroll_id), test_vecs.at(t.test_id));
    if (snorm)
      s = adaptive_snorm(s, enroll_cohorts.at(t.enroll_id),
                         test_cohorts.at(t.test_id), top_k);
    scored.push_back({t.enroll_id, t.test_id, s, t.target});
  }
  write_scores(scored, join(ctx.out_dir, files::kScores));
  log_of(ctx) << "score: " << scored.size() << " trials, backend " << backend
              << (snorm ? " + snorm" : "") << '\n';
  return kExitOk;
}

int run_eval(const CommandContext& ctx) {
  const auto scored = read_scores(join(ctx.out_dir, files::kScores));
  ScoreSet set;
  for (const auto& s : scored)
    (s.target ? set.target_scores : set.nontarget_scores).push_back(s.score);
  if (set.target_scores.empty() || set.nontarget_scores.empty())
    throw std::runtime_error("eval: need both target and nontarget scores");

  const std::string preset = ctx.config.get_string("metric_preset", "voxceleb");
  const double eer_val = eer(set);
  const double dcf_val = min_dcf_preset(set, preset);

  char line[128];
  std::snprintf(line, sizeof(line), "EER(%%) %.2f\nmin_dcf[%s] %.3f\n",
                100.0 * eer_val, preset.c_str(), dcf_val);
  log_of(ctx) << line;

  std::ofstream summary(join(ctx.out_dir, files::kEvalSummary));
  summary << "eer " << format_double(eer_val) << '\n'
          << "min_dcf " << format_double(dcf_val) << '\n'
          << "preset " << preset << '\n'
          << "num_target " << set.target_scores.size() << '\n'
          << "num_nontarget " << set.nontarget_scores.size() << '\n';
  return kExitOk;
}

int run_grad_check(const CommandContext& ctx) {
  const Config& cfg = ctx.config;
  const std::uint64_t seed = master_seed(ctx);

  ModelConfig mc;
  mc.feature_dim = cfg.get_int("gc_feature_dim", 4);
  mc.frame_layer_dims =
      parse_dim_list(cfg.get_string("gc_frame_layers", "6,5"));
  mc.embedding_dim = cfg.get_int("gc_embedding_dim", 4);
  mc.num_speakers = cfg.get_int("gc_speakers", 3);
  mc.scale = cfg.get_double("scale", 30.0);
  mc.kind = parse_loss_kind(cfg.get_string("loss", "vib"));
  SpeakerModel model = init_model(mc, seed);

  const Eigen::Index frames = cfg.get_int("gc_frames", 6);
  const CounterRng rng(seed + 7);
  std::vector<Matrix> data;
  Batch batch;
  const int batch_size = int(cfg.get_int("gc_batch", 2));
  for (int i = 0; i < batch_size; ++i) {
    Matrix x(frames, mc.feature_dim);
    for (Eigen::Index t = 0; t < frames; ++t)
      for (Eigen::Index d = 0; d < mc.feature_dim; ++d)
        x(t, d) = rng.normal(CounterRng::derive_key(0x6763, i),
                             std::uint64_t(t) * mc.feature_dim + d);
    data.push_back(std::move(x));
  }
  for (int i = 0; i < batch_size; ++i) {
    batch.frames.push_back(&data[i]);
    batch.targets.push_back(i % mc.num_speakers);
    batch.utterance_indices.push_back(std::uint64_t(i));
  }

  StepLossConfig step_cfg;
  step_cfg.margin = cfg.get_double("margin", 0.2);
  step_cfg.beta = cfg.get_double("beta", 0.004);
  step_cfg.num_samples = int(cfg.get_int("num_samples", 3));

  ModelGrads grads = zero_grads(model);
  batch_objective(model, batch, step_cfg, rng, 0, &grads);
  const Vector analytic = pack_grads(model, grads);
  const Vector params = pack_params(model);

  SpeakerModel probe = model;
  auto loss_fn = [&](const Vector& flat) {
    unpack_params(flat, probe);
    return batch_objective(probe, batch, step_cfg, rng, 0, nullptr).loss;
  };

  const double step = cfg.get_double("gc_step", 1e-5);
  const double tol = cfg.get_double("gc_tolerance", 1e-4);
  const GradCheckReport report =
      grad_check(loss_fn, params, analytic, param_layout(model), step);

  auto& out = log_of(ctx);
  out << "grad-check: loss=" << loss_kind_name(mc.kind) << " step=" << step
      << '\n';
  for (const auto& b : report.blocks)
    out << "  " << b.name << " max_rel_err " << format_double(b.max_rel_err)
        << '\n';
  out << (report.passes(tol) ? "PASS" : "FAIL") << " (tolerance " << tol
      << ")\n";
  return report.passes(tol) ? kExitOk : kExitNumeric;
}

}  // namespace vibspk
