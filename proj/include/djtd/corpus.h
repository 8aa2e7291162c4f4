// djtd/corpus.h
//
// Deterministic synthetic corpus. Token "audio" is a per-token frame
// signature plus seeded noise and a per-utterance speaker offset.
// Synthetic voices (TtsVoice/HeldOutVoice) are the real voice shifted by
// fixed offset vectors, so paired and unpaired feature distributions are
// genuinely mismatched. A configurable slice of the rare vocabulary sits
// acoustically close to a common "twin" token, which is what makes rare
// words hard for a model that never saw them in paired text.

#ifndef DJTD_CORPUS_H_
#define DJTD_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "djtd/tensor.h"
#include "djtd/param.h"

namespace djtd {

struct Vocab {
  int n_common = 16;
  int n_rare = 6;

  int blank_id() const { return 0; }  // first pass only, never in transcripts
  int eos_id() const { return 1; }    // hypothesis padding + second-pass terminator
  int first_common() const { return 2; }
  int first_rare() const { return 2 + n_common; }
  int size() const { return 2 + n_common + n_rare; }
  bool is_common(int id) const { return id >= first_common() && id < first_rare(); }
  bool is_rare(int id) const { return id >= first_rare() && id < size(); }
  bool is_content(int id) const { return is_common(id) || is_rare(id); }
};

enum class VoiceKind : uint8_t { kRealVoice = 0, kTtsVoice = 1, kHeldOutVoice = 2 };

// Per-token frame signatures for one voice. Signature length k_t in [2,4]
// is a deterministic function of the token; a rare token reuses its twin's
// length so the two stay alignable.
struct Codebook {
  VoiceKind kind = VoiceKind::kRealVoice;
  int feature_dim = 0;
  double noise_sigma = 0.0;
  double speaker_sigma = 0.0;
  // signatures[id] is empty for structural tokens (blank, eos).
  std::vector<std::vector<std::vector<double>>> signatures;
};

struct Example {
  Tensor features;  // [T, D]; T = sum of signature lengths
  std::vector<int> transcript;
  ExampleKind kind = ExampleKind::kPaired;
};

struct CorpusConfig {
  int n_common = 16;
  int n_rare = 6;
  int feature_dim = 8;
  int min_len = 2;
  int max_len = 6;
  int train_total = 2222;  // split 9:1 into paired/unpaired
  int n_test = 200;
  double noise_sigma = 0.1;
  double speaker_sigma = 0.05;
  double tts_offset = 1.0;      // norm of the TtsVoice shift
  double heldout_offset = 1.0;  // norm of the HeldOutVoice shift (orthogonal direction)
  double rare_twin_offset = 0.5;
  double rare_density = 0.5;            // min rare fraction per unpaired transcript
  int rare_min_unpaired = 20;           // frequency floor per rare token in unpaired text
  double paired_rare_once_fraction = 0.5;
  uint64_t seed = 1234;

  int n_paired() const;
  int n_unpaired() const { return train_total - n_paired(); }
};

struct Corpus {
  CorpusConfig config;
  Vocab vocab;
  std::vector<Example> paired, unpaired;
  std::vector<Example> vs_like, rare_tts, rare_spoken;
};

// Deterministic in (config, kind): rebuildable from the manifest.
Codebook build_codebook(const CorpusConfig& config, VoiceKind kind);

// Concatenated token signatures + speaker offset + per-frame noise.
// Deterministic in (transcript, codebook, seed). Unknown token throws.
Tensor synthesize(const std::vector<int>& transcript, const Codebook& codebook, uint64_t seed);

// Paired examples use common tokens only, except that a configured
// fraction of rare tokens is planted exactly once across the whole set.
// Unpaired transcripts are rare-heavy with balanced rare counts.
void build_training_set(const CorpusConfig& config, uint64_t seed,
                        std::vector<Example>* paired, std::vector<Example>* unpaired);

// vs_like: common transcripts, real voice. rare_tts: rare-heavy
// transcripts, held-out synthetic voice. rare_spoken: the same transcripts
// as rare_tts, real voice. No transcript overlaps the training sets.
void build_test_sets(const CorpusConfig& config, uint64_t seed,
                     const std::vector<Example>& paired, const std::vector<Example>& unpaired,
                     std::vector<Example>* vs_like, std::vector<Example>* rare_tts,
                     std::vector<Example>* rare_spoken);

Corpus build_corpus(const CorpusConfig& config);

void save_corpus(const std::string& dir, const Corpus& corpus, bool text_dump = false);
Corpus load_corpus(const std::string& dir);

}  // namespace djtd

#endif  // DJTD_CORPUS_H_
