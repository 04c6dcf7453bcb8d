#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "vibspk/io.hpp"
#include "vibspk/train.hpp"

namespace vibspk {

// Exit codes shared with the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumeric = 2;

struct CommandContext {
  Config config;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> checkpoint_path;
  std::ostream* log = nullptr;  // defaults to std::cout
};

// Fixed file names inside the output directory.
namespace files {
inline constexpr const char* kFeatures = "features.txt";
inline constexpr const char* kManifest = "manifest.txt";
inline constexpr const char* kTrials = "trials.txt";
inline constexpr const char* kEnrollMap = "enroll_map.txt";
inline constexpr const char* kEmbeddings = "embeddings.txt";
inline constexpr const char* kScores = "scores.txt";
inline constexpr const char* kTrainLog = "train_log.tsv";
inline constexpr const char* kCheckpointFinal = "checkpoint_final.txt";
inline constexpr const char* kEvalSummary = "eval_summary.txt";
}  // namespace files

int run_gen_data(const CommandContext& ctx);
int run_train(const CommandContext& ctx);
int run_extract(const CommandContext& ctx);
int run_score(const CommandContext& ctx);
int run_eval(const CommandContext& ctx);
int run_grad_check(const CommandContext& ctx);

// Helpers shared with tests.
PopulationConfig population_from_config(const Config& cfg,
                                        std::optional<std::uint64_t> seed);
ModelConfig model_from_config(const Config& cfg, Eigen::Index feature_dim,
                              Eigen::Index num_speakers);
TrainConfig train_from_config(const Config& cfg,
                              std::optional<std::uint64_t> seed);

}  // namespace vibspk
