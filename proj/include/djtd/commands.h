// djtd/commands.h
//
// Library-level implementations of the CLI subcommands. Each returns the
// process exit code: 0 success, 1 assertion/acceptance failure, 2 usage
// error. main() only parses flags and dispatches here.

#ifndef DJTD_COMMANDS_H_
#define DJTD_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "djtd/config.h"
#include "djtd/eval.h"

namespace djtd {

// Builds the corpus into out_dir (manifest + per-split binaries; with
// text_dump also one transcript per line). Refuses a non-empty out_dir
// unless force.
int cmd_gen_data(const RunConfig& cfg, const std::string& config_path, const std::string& out_dir,
                 bool force, bool text_dump, std::ostream& out, std::ostream& err);

// Stage 1 pretrains (or loads/resumes) the first pass, stage 2 trains the
// configured variant. Writes rnnt.ckpt, model.ckpt, model.state,
// metrics.jsonl and the run manifest into out_dir.
int cmd_train(const RunConfig& cfg, const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_dir, const std::string& init_from, bool resume,
              std::ostream& out, std::ostream& err);

// Selects the inference lambda on the vs_like dev slice, evaluates every
// test set, writes report.json. With assert_improvement set, exits 1
// unless the mean rare-set WER strictly improves on the baseline report.
int cmd_eval(const RunConfig& cfg, const std::string& config_path, const std::string& checkpoint,
             const std::string& corpus_dir, const std::string& out_dir,
             const std::string& assert_improvement, std::ostream& out, std::ostream& err);

// Runs one named property suite with a fixed seed.
int cmd_verify(const std::string& suite, uint64_t seed, std::ostream& out, std::ostream& err);

// Trains and evaluates the requested experiment rows over the seeds;
// writes report.json plus the text table.
int cmd_matrix(const RunConfig& cfg, const std::string& config_path, const std::string& corpus_dir,
               const std::vector<std::string>& rows, const std::vector<uint64_t>& seeds,
               const std::string& out_dir, std::ostream& out, std::ostream& err);

// Report (de)serialization, shared with --assert-improvement.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace djtd

#endif  // DJTD_COMMANDS_H_
