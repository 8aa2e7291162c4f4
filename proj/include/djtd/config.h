// djtd/config.h
//
// Run configuration: one JSON file covering corpus, model dims, training
// and decoding. Absent fields take the built-in defaults; the resolved
// config is echoed into every run manifest.

#ifndef DJTD_CONFIG_H_
#define DJTD_CONFIG_H_

#include <string>

#include "djtd/corpus.h"
#include "djtd/eval.h"
#include "djtd/rnnt.h"
#include "djtd/trainer.h"

namespace djtd {

inline constexpr const char* kBuildId = "djtd-0.1.0";

struct RunConfig {
  uint64_t seed = 1234;
  CorpusConfig corpus;
  FirstPassConfig first_pass;
  SecondPassConfig second_pass;
  TrainSettings train;
  DecodeConfig decode;
};

// Propagates the master seed and corpus-derived dims (feature dim, vocab
// size, structural token ids) into the dependent sections.
void align_run_config(RunConfig& cfg);

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);  // throws on missing file
std::string run_config_json(const RunConfig& cfg);   // full resolved echo

// Writes <dir>/run_manifest.json (command, config path + echo, seed, build
// id, timestamps).
void write_run_manifest(const std::string& dir, const std::string& command,
                        const std::string& config_path, const RunConfig& cfg,
                        const std::string& started_at, const std::string& finished_at);

std::string now_iso8601();

}  // namespace djtd

#endif  // DJTD_CONFIG_H_
