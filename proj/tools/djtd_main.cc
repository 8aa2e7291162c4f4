// tools/djtd_main.cc
//
// djtd: corpus generation, two-pass training, evaluation and self checks.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "djtd/commands.h"

namespace {

// Shared flags layered over the config file; any flag given on the command
// line overrides the file value.
struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::string variant;
  double lambda_train = -1.0;
  std::vector<double> lambda_grid;
  int beam1 = 0, beam2 = 0, top_k = 0, threads = 0;
  int freeze_first_pass = -1;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON config file");
  cmd->add_option("--seed", a.seed, "global seed")->each([&a](const std::string&) {
    a.seed_set = true;
  });
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("--variant", a.variant,
                  "las | las-jatd | delib | delib-jatd-partial | delib-jatd-full");
  cmd->add_option("--lambda-train", a.lambda_train, "training interpolation weight");
  cmd->add_option("--lambda-grid", a.lambda_grid, "inference lambda grid")->delimiter(',');
  cmd->add_option("--beam1", a.beam1, "first-pass beam width");
  cmd->add_option("--beam2", a.beam2, "second-pass beam width");
  cmd->add_option("--top-k", a.top_k, "first-pass hypotheses attended");
  cmd->add_option("--threads", a.threads, "evaluation worker cap");
  cmd->add_flag("--freeze-first-pass,!--no-freeze-first-pass",
                [&a](int64_t v) { a.freeze_first_pass = v > 0 ? 1 : 0; },
                "freeze the first pass during stage 2 (default on)");
}

djtd::RunConfig resolve_config(const CommonArgs& a) {
  djtd::RunConfig cfg;
  if (!a.config_path.empty()) cfg = djtd::load_run_config(a.config_path);
  if (const char* env = std::getenv("DJTD_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.variant.empty()) cfg.train.variant = a.variant;
  if (a.lambda_train >= 0.0) cfg.train.lambda_train = a.lambda_train;
  if (!a.lambda_grid.empty()) cfg.decode.lambda_grid = a.lambda_grid;
  if (a.beam1 > 0) cfg.decode.first_beam = a.beam1;
  if (a.beam2 > 0) cfg.decode.second_beam = a.beam2;
  if (a.top_k > 0) cfg.second_pass.top_k = a.top_k;
  if (a.threads > 0) cfg.decode.threads = a.threads;
  if (a.freeze_first_pass >= 0) cfg.train.freeze_first_pass = a.freeze_first_pass == 1;
  djtd::align_run_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deliberation-JATD two-pass speech recognition, desk scale"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, matrix_args;
  bool gen_force = false, gen_text = false;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, gen_args);
  gen->add_flag("--force", gen_force, "overwrite a non-empty output directory");
  gen->add_flag("--format-text,--text", gen_text, "also dump transcripts as text");

  std::string train_corpus, train_init_from;
  bool train_resume = false;
  auto* train = app.add_subcommand("train", "train the two-pass model");
  add_common(train, train_args);
  train->add_option("--corpus", train_corpus, "corpus directory")->required();
  train->add_option("--init-from", train_init_from, "first-pass checkpoint, skips stage 1");
  train->add_flag("--resume", train_resume, "continue from out dir checkpoint + state");

  std::string eval_corpus, eval_ckpt, eval_assert;
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on the test sets");
  add_common(evalc, eval_args);
  evalc->add_option("--corpus", eval_corpus, "corpus directory")->required();
  evalc->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  evalc->add_option("--assert-improvement", eval_assert,
                    "baseline report.json; exit 1 unless rare-set WER improves");

  std::string verify_suite = "all";
  uint64_t verify_seed = 7041;
  auto* verify = app.add_subcommand("verify", "run a property suite");
  verify->add_option("suite", verify_suite, "gradcheck|rnnt-oracle|gating|interp|beam-oracle|all");
  verify->add_option("--seed", verify_seed, "suite seed");

  std::string matrix_corpus;
  std::vector<std::string> matrix_rows;
  std::vector<uint64_t> matrix_seeds;
  auto* matrix = app.add_subcommand("matrix", "train + evaluate the experiment rows");
  add_common(matrix, matrix_args);
  matrix->add_option("--corpus", matrix_corpus, "corpus directory")->required();
  matrix->add_option("--rows", matrix_rows, "experiment rows (default: all)")->delimiter(',');
  matrix->add_option("--seeds", matrix_seeds, "training seeds")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return djtd::cmd_gen_data(resolve_config(gen_args), gen_args.config_path, gen_args.out_dir,
                                gen_force, gen_text, std::cout, std::cerr);
    if (train->parsed())
      return djtd::cmd_train(resolve_config(train_args), train_args.config_path, train_corpus,
                             train_args.out_dir, train_init_from, train_resume, std::cout,
                             std::cerr);
    if (evalc->parsed())
      return djtd::cmd_eval(resolve_config(eval_args), eval_args.config_path, eval_ckpt,
                            eval_corpus, eval_args.out_dir, eval_assert, std::cout, std::cerr);
    if (verify->parsed()) return djtd::cmd_verify(verify_suite, verify_seed, std::cout, std::cerr);
    if (matrix->parsed())
      return djtd::cmd_matrix(resolve_config(matrix_args), matrix_args.config_path, matrix_corpus,
                              matrix_rows, matrix_seeds, matrix_args.out_dir, std::cout,
                              std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
