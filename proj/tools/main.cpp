// vibspk: train and evaluate stochastic speaker-embedding extractors on
// synthetic speaker populations.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vibspk/commands.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> checkpoint;
};

void add_common(CLI::App* sub, CommonArgs& args, bool with_checkpoint) {
  sub->add_option("--config", args.config_path, "key=value config file")
      ->required();
  sub->add_option("--out", args.out_dir, "output directory");
  sub->add_option("--seed", args.seed, "override the master seed");
  if (with_checkpoint)
    sub->add_option("--checkpoint", args.checkpoint,
                    "checkpoint file (default: <out>/checkpoint_final.txt)");
}

vibspk::CommandContext make_context(const CommonArgs& args) {
  vibspk::CommandContext ctx;
  ctx.config = vibspk::Config::parse_file(args.config_path);
  ctx.out_dir = args.out_dir;
  ctx.seed_override = args.seed;
  ctx.checkpoint_path = args.checkpoint;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VIB speaker-embedding laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  int (*command)(const vibspk::CommandContext&) = nullptr;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen, args, false);
  gen->callback([&] { command = vibspk::run_gen_data; });

  auto* train = app.add_subcommand("train", "train an embedding extractor");
  add_common(train, args, false);
  train->callback([&] { command = vibspk::run_train; });

  auto* extract = app.add_subcommand("extract", "extract embeddings");
  add_common(extract, args, true);
  extract->callback([&] { command = vibspk::run_extract; });

  auto* score = app.add_subcommand("score", "score a trial list");
  add_common(score, args, false);
  score->callback([&] { command = vibspk::run_score; });

  auto* eval = app.add_subcommand("eval", "report EER and min_dcf");
  add_common(eval, args, false);
  eval->callback([&] { command = vibspk::run_eval; });

  auto* gc = app.add_subcommand("grad-check",
                                "finite-difference check of a loss");
  add_common(gc, args, false);
  gc->callback([&] { command = vibspk::run_grad_check; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vibspk::kExitUsage;
  }

  try {
    return command(make_context(args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return vibspk::kExitUsage;
  }
}
