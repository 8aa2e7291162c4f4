// djtd/corpus.cc

#include "djtd/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "djtd/checkpoint.h"
#include "djtd/rng.h"

#include "json.hpp"

namespace djtd {

namespace {

constexpr char kCorpusMagic[4] = {'D', 'J', 'T', 'C'};
constexpr uint32_t kCorpusVersion = 1;

int signature_len(uint64_t seed, int token) {
  return 2 + static_cast<int>(hash_seed(hash_seed(seed, "sig-len"), token) % 3);
}

std::vector<double> unit_direction(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

void shuffle(Rng& rng, std::vector<int>& v) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.next_below(i)]);
}

int draw_len(Rng& rng, const CorpusConfig& cfg) {
  return cfg.min_len + static_cast<int>(rng.next_below(
                           static_cast<uint64_t>(cfg.max_len - cfg.min_len + 1)));
}

void validate_config(const CorpusConfig& cfg) {
  if (cfg.n_common < 1) throw std::invalid_argument("corpus: need at least one common token");
  if (cfg.n_rare < 0 || cfg.feature_dim < 1) throw std::invalid_argument("corpus: bad vocab config");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    throw std::invalid_argument("corpus: bad transcript length range");
  if (cfg.train_total < 2) throw std::invalid_argument("corpus: train_total too small");
}

}  // namespace

int CorpusConfig::n_paired() const {
  return static_cast<int>(std::llround(static_cast<double>(train_total) * 0.9));
}

Codebook build_codebook(const CorpusConfig& config, VoiceKind kind) {
  validate_config(config);
  Vocab vocab{config.n_common, config.n_rare};
  Codebook cb;
  cb.kind = kind;
  cb.feature_dim = config.feature_dim;
  cb.noise_sigma = config.noise_sigma;
  cb.speaker_sigma = config.speaker_sigma;
  cb.signatures.resize(static_cast<size_t>(vocab.size()));

  const int d = config.feature_dim;
  for (int id = vocab.first_common(); id < vocab.first_rare(); ++id) {
    Rng rng(hash_seed(hash_seed(config.seed, "sig-frames"), static_cast<uint64_t>(id)));
    const int k = signature_len(config.seed, id);
    auto& sig = cb.signatures[static_cast<size_t>(id)];
    sig.resize(static_cast<size_t>(k));
    for (auto& frame : sig) {
      frame.resize(static_cast<size_t>(d));
      for (double& x : frame) x = rng.uniform(-1.0, 1.0);
    }
  }
  // A rare token sits rare_twin_offset away from a common twin, along a
  // token-specific direction, with the twin's signature length.
  for (int i = 0; i < vocab.n_rare; ++i) {
    const int id = vocab.first_rare() + i;
    const int twin = vocab.first_common() + (i % vocab.n_common);
    Rng rng(hash_seed(hash_seed(config.seed, "rare-dir"), static_cast<uint64_t>(id)));
    const auto dir = unit_direction(rng, d);
    auto sig = cb.signatures[static_cast<size_t>(twin)];
    for (auto& frame : sig)
      for (int j = 0; j < d; ++j) frame[static_cast<size_t>(j)] += config.rare_twin_offset * dir[static_cast<size_t>(j)];
    cb.signatures[static_cast<size_t>(id)] = std::move(sig);
  }

  if (kind != VoiceKind::kRealVoice) {
    Rng tts_rng(hash_seed(config.seed, "tts-dir"));
    auto dir = unit_direction(tts_rng, d);
    double norm = config.tts_offset;
    if (kind == VoiceKind::kHeldOutVoice) {
      // Held-out voice shifts along a direction orthogonal to the TTS one,
      // so the two synthetic voices never coincide.
      Rng ho_rng(hash_seed(config.seed, "heldout-dir"));
      auto raw = unit_direction(ho_rng, d);
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += raw[static_cast<size_t>(j)] * dir[static_cast<size_t>(j)];
      double rn = 0.0;
      for (int j = 0; j < d; ++j) {
        raw[static_cast<size_t>(j)] -= dot * dir[static_cast<size_t>(j)];
        rn += raw[static_cast<size_t>(j)] * raw[static_cast<size_t>(j)];
      }
      if (rn < 1e-12) throw std::runtime_error("corpus: degenerate held-out voice direction");
      rn = std::sqrt(rn);
      for (int j = 0; j < d; ++j) dir[static_cast<size_t>(j)] = raw[static_cast<size_t>(j)] / rn;
      norm = config.heldout_offset;
    }
    for (auto& sig : cb.signatures)
      for (auto& frame : sig)
        for (int j = 0; j < d; ++j) frame[static_cast<size_t>(j)] += norm * dir[static_cast<size_t>(j)];
  }
  return cb;
}

Tensor synthesize(const std::vector<int>& transcript, const Codebook& codebook, uint64_t seed) {
  if (transcript.empty()) throw std::invalid_argument("synthesize: empty transcript");
  int t_total = 0;
  for (int id : transcript) {
    if (id < 0 || id >= static_cast<int>(codebook.signatures.size()) ||
        codebook.signatures[static_cast<size_t>(id)].empty())
      throw std::invalid_argument("synthesize: unknown token " + std::to_string(id));
    t_total += static_cast<int>(codebook.signatures[static_cast<size_t>(id)].size());
  }
  const int d = codebook.feature_dim;
  Rng rng(seed);
  std::vector<double> speaker(static_cast<size_t>(d));
  for (double& x : speaker) x = rng.gaussian(0.0, codebook.speaker_sigma);

  std::vector<double> out;
  out.reserve(static_cast<size_t>(t_total) * d);
  for (int id : transcript)
    for (const auto& frame : codebook.signatures[static_cast<size_t>(id)])
      for (int j = 0; j < d; ++j)
        out.push_back(frame[static_cast<size_t>(j)] + speaker[static_cast<size_t>(j)] +
                      rng.gaussian(0.0, codebook.noise_sigma));
  return Tensor({t_total, d}, std::move(out));
}

namespace {

std::vector<int> common_transcript(Rng& rng, const CorpusConfig& cfg, const Vocab& vocab) {
  const int len = draw_len(rng, cfg);
  std::vector<int> t(static_cast<size_t>(len));
  for (int& id : t)
    id = vocab.first_common() + static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab.n_common)));
  return t;
}

// Rare-heavy transcript; rare tokens come from `cycle`, a balanced shuffled
// stream refilled on exhaustion so per-token counts stay within one of each
// other.
std::vector<int> rare_heavy_transcript(Rng& rng, const CorpusConfig& cfg, const Vocab& vocab,
                                       std::vector<int>* cycle, Rng* cycle_rng) {
  const int len = draw_len(rng, cfg);
  std::vector<int> t(static_cast<size_t>(len));
  for (int& id : t)
    id = vocab.first_common() + static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab.n_common)));
  if (vocab.n_rare == 0) return t;
  const int n_slots = static_cast<int>(std::ceil(cfg.rare_density * len));
  std::vector<int> positions(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) positions[static_cast<size_t>(i)] = i;
  shuffle(rng, positions);
  for (int s = 0; s < n_slots; ++s) {
    if (cycle->empty()) {
      for (int i = 0; i < vocab.n_rare; ++i) cycle->push_back(vocab.first_rare() + i);
      shuffle(*cycle_rng, *cycle);
    }
    t[static_cast<size_t>(positions[static_cast<size_t>(s)])] = cycle->back();
    cycle->pop_back();
  }
  return t;
}

}  // namespace

void build_training_set(const CorpusConfig& config, uint64_t seed,
                        std::vector<Example>* paired, std::vector<Example>* unpaired) {
  validate_config(config);
  Vocab vocab{config.n_common, config.n_rare};
  const int n_paired = config.n_paired();
  const int n_unpaired = config.train_total - n_paired;

  const Codebook real_cb = build_codebook(config, VoiceKind::kRealVoice);
  const Codebook tts_cb = build_codebook(config, VoiceKind::kTtsVoice);

  paired->clear();
  paired->reserve(static_cast<size_t>(n_paired));
  for (int i = 0; i < n_paired; ++i) {
    Rng rng(hash_seed(hash_seed(seed, "paired-text"), static_cast<uint64_t>(i)));
    Example ex;
    ex.kind = ExampleKind::kPaired;
    ex.transcript = common_transcript(rng, config, vocab);
    paired->push_back(std::move(ex));
  }

  // Plant a slice of rare tokens exactly once each across the paired set:
  // the "occurred once or not at all" regime.
  const int n_once = static_cast<int>(std::llround(config.paired_rare_once_fraction * vocab.n_rare));
  if (n_once > 0 && n_paired > 0) {
    Rng rng(hash_seed(seed, "paired-rare-once"));
    std::vector<int> rare_ids(static_cast<size_t>(vocab.n_rare));
    for (int i = 0; i < vocab.n_rare; ++i) rare_ids[static_cast<size_t>(i)] = vocab.first_rare() + i;
    shuffle(rng, rare_ids);
    std::set<int> used_examples;
    for (int i = 0; i < n_once && i < vocab.n_rare; ++i) {
      int ex_idx;
      do {
        ex_idx = static_cast<int>(rng.next_below(static_cast<uint64_t>(n_paired)));
      } while (used_examples.count(ex_idx) != 0 && used_examples.size() < static_cast<size_t>(n_paired));
      used_examples.insert(ex_idx);
      auto& tr = (*paired)[static_cast<size_t>(ex_idx)].transcript;
      tr[rng.next_below(tr.size())] = rare_ids[static_cast<size_t>(i)];
    }
  }

  for (int i = 0; i < n_paired; ++i) {
    auto& ex = (*paired)[static_cast<size_t>(i)];
    ex.features = synthesize(ex.transcript, real_cb,
                             hash_seed(hash_seed(seed, "paired-audio"), static_cast<uint64_t>(i)));
  }

  unpaired->clear();
  unpaired->reserve(static_cast<size_t>(n_unpaired));
  std::vector<int> cycle;
  Rng cycle_rng(hash_seed(seed, "rare-cycle"));
  std::vector<int> rare_counts(static_cast<size_t>(vocab.n_rare), 0);
  for (int i = 0; i < n_unpaired; ++i) {
    Rng rng(hash_seed(hash_seed(seed, "unpaired-text"), static_cast<uint64_t>(i)));
    Example ex;
    ex.kind = ExampleKind::kUnpaired;
    ex.transcript = rare_heavy_transcript(rng, config, vocab, &cycle, &cycle_rng);
    for (int id : ex.transcript)
      if (vocab.is_rare(id)) ++rare_counts[static_cast<size_t>(id - vocab.first_rare())];
    // x^l: synthetic audio generated from the text.
    ex.features = synthesize(ex.transcript, tts_cb,
                             hash_seed(hash_seed(seed, "unpaired-audio"), static_cast<uint64_t>(i)));
    unpaired->push_back(std::move(ex));
  }

  if (vocab.n_rare > 0 && n_unpaired > 0) {
    for (int i = 0; i < vocab.n_rare; ++i)
      if (rare_counts[static_cast<size_t>(i)] < config.rare_min_unpaired)
        throw std::invalid_argument(
            "corpus: infeasible vocab split, rare token " + std::to_string(vocab.first_rare() + i) +
            " appears " + std::to_string(rare_counts[static_cast<size_t>(i)]) + " < " +
            std::to_string(config.rare_min_unpaired) + " times in unpaired text");
  }
}

void build_test_sets(const CorpusConfig& config, uint64_t seed,
                     const std::vector<Example>& paired, const std::vector<Example>& unpaired,
                     std::vector<Example>* vs_like, std::vector<Example>* rare_tts,
                     std::vector<Example>* rare_spoken) {
  validate_config(config);
  Vocab vocab{config.n_common, config.n_rare};
  std::set<std::vector<int>> train_transcripts;
  for (const auto& ex : paired) train_transcripts.insert(ex.transcript);
  for (const auto& ex : unpaired) train_transcripts.insert(ex.transcript);

  const Codebook real_cb = build_codebook(config, VoiceKind::kRealVoice);
  const Codebook held_cb = build_codebook(config, VoiceKind::kHeldOutVoice);

  vs_like->clear();
  for (int i = 0; i < config.n_test; ++i) {
    std::vector<int> tr;
    for (uint64_t attempt = 0;; ++attempt) {
      Rng rng(hash_seed(hash_seed(hash_seed(seed, "vs-text"), static_cast<uint64_t>(i)), attempt));
      tr = common_transcript(rng, config, vocab);
      if (train_transcripts.count(tr) == 0) break;
      if (attempt > 10000) throw std::runtime_error("corpus: cannot draw disjoint vs transcript");
    }
    Example ex;
    ex.kind = ExampleKind::kPaired;
    ex.transcript = std::move(tr);
    ex.features = synthesize(ex.transcript, real_cb,
                             hash_seed(hash_seed(seed, "vs-audio"), static_cast<uint64_t>(i)));
    vs_like->push_back(std::move(ex));
  }

  rare_tts->clear();
  rare_spoken->clear();
  std::vector<int> cycle;
  Rng cycle_rng(hash_seed(seed, "test-rare-cycle"));
  for (int i = 0; i < config.n_test; ++i) {
    std::vector<int> tr;
    for (uint64_t attempt = 0;; ++attempt) {
      Rng rng(hash_seed(hash_seed(hash_seed(seed, "rare-text"), static_cast<uint64_t>(i)), attempt));
      tr = rare_heavy_transcript(rng, config, vocab, &cycle, &cycle_rng);
      if (train_transcripts.count(tr) == 0) break;
      if (attempt > 10000) throw std::runtime_error("corpus: cannot draw disjoint rare transcript");
    }
    Example tts_ex;
    tts_ex.kind = ExampleKind::kUnpaired;
    tts_ex.transcript = tr;
    tts_ex.features = synthesize(tr, held_cb,
                                 hash_seed(hash_seed(seed, "rare-tts-audio"), static_cast<uint64_t>(i)));
    rare_tts->push_back(std::move(tts_ex));

    // Same transcript, spoken by the real voice.
    Example spoken_ex;
    spoken_ex.kind = ExampleKind::kPaired;
    spoken_ex.transcript = std::move(tr);
    spoken_ex.features = synthesize(spoken_ex.transcript, real_cb,
                                    hash_seed(hash_seed(seed, "rare-spoken-audio"), static_cast<uint64_t>(i)));
    rare_spoken->push_back(std::move(spoken_ex));
  }
}

Corpus build_corpus(const CorpusConfig& config) {
  Corpus corpus;
  corpus.config = config;
  corpus.vocab = Vocab{config.n_common, config.n_rare};
  build_training_set(config, config.seed, &corpus.paired, &corpus.unpaired);
  build_test_sets(config, config.seed, corpus.paired, corpus.unpaired, &corpus.vs_like,
                  &corpus.rare_tts, &corpus.rare_spoken);
  return corpus;
}

// --- persistence ---------------------------------------------------------

namespace {

using nlohmann::json;

void write_split(const std::string& path, const std::vector<Example>& split) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os.write(kCorpusMagic, 4);
  write_u32(os, kCorpusVersion);
  write_u32(os, static_cast<uint32_t>(split.size()));
  for (const auto& ex : split) {
    os.put(static_cast<char>(ex.kind));
    write_u32(os, static_cast<uint32_t>(ex.transcript.size()));
    for (int id : ex.transcript) write_u32(os, static_cast<uint32_t>(id));
    write_tensor(os, ex.features);
  }
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<Example> read_split(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kCorpusMagic, 4))
    throw std::runtime_error("corpus split '" + path + "': bad magic");
  if (read_u32(is) != kCorpusVersion)
    throw std::runtime_error("corpus split '" + path + "': bad version");
  std::vector<Example> split(read_u32(is));
  for (auto& ex : split) {
    ex.kind = static_cast<ExampleKind>(is.get());
    ex.transcript.resize(read_u32(is));
    for (int& id : ex.transcript) id = static_cast<int>(read_u32(is));
    ex.features = read_tensor(is);
  }
  return split;
}

void write_text_dump(const std::string& path, const std::vector<Example>& split) {
  std::ofstream os(path, std::ios::trunc);
  for (const auto& ex : split) {
    for (size_t i = 0; i < ex.transcript.size(); ++i) {
      if (i) os << ' ';
      os << ex.transcript[i];
    }
    os << '\n';
  }
}

json config_to_json(const CorpusConfig& c) {
  return json{{"n_common", c.n_common},
              {"n_rare", c.n_rare},
              {"feature_dim", c.feature_dim},
              {"min_len", c.min_len},
              {"max_len", c.max_len},
              {"train_total", c.train_total},
              {"n_test", c.n_test},
              {"noise_sigma", c.noise_sigma},
              {"speaker_sigma", c.speaker_sigma},
              {"tts_offset", c.tts_offset},
              {"heldout_offset", c.heldout_offset},
              {"rare_twin_offset", c.rare_twin_offset},
              {"rare_density", c.rare_density},
              {"rare_min_unpaired", c.rare_min_unpaired},
              {"paired_rare_once_fraction", c.paired_rare_once_fraction},
              {"seed", c.seed}};
}

CorpusConfig config_from_json(const json& j) {
  CorpusConfig c;
  c.n_common = j.at("n_common");
  c.n_rare = j.at("n_rare");
  c.feature_dim = j.at("feature_dim");
  c.min_len = j.at("min_len");
  c.max_len = j.at("max_len");
  c.train_total = j.at("train_total");
  c.n_test = j.at("n_test");
  c.noise_sigma = j.at("noise_sigma");
  c.speaker_sigma = j.at("speaker_sigma");
  c.tts_offset = j.at("tts_offset");
  c.heldout_offset = j.at("heldout_offset");
  c.rare_twin_offset = j.at("rare_twin_offset");
  c.rare_density = j.at("rare_density");
  c.rare_min_unpaired = j.at("rare_min_unpaired");
  c.paired_rare_once_fraction = j.at("paired_rare_once_fraction");
  c.seed = j.at("seed");
  return c;
}

const char* kSplitNames[5] = {"paired", "unpaired", "vs_like", "rare_tts", "rare_spoken"};

}  // namespace

void save_corpus(const std::string& dir, const Corpus& corpus, bool text_dump) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::vector<Example>* splits[5] = {&corpus.paired, &corpus.unpaired, &corpus.vs_like,
                                           &corpus.rare_tts, &corpus.rare_spoken};
  json manifest;
  manifest["format_version"] = kCorpusVersion;
  manifest["config"] = config_to_json(corpus.config);
  manifest["seed"] = corpus.config.seed;
  json counts;
  for (int i = 0; i < 5; ++i) {
    counts[kSplitNames[i]] = splits[i]->size();
    write_split(dir + "/" + kSplitNames[i] + ".bin", *splits[i]);
    if (text_dump) write_text_dump(dir + "/" + kSplitNames[i] + ".txt", *splits[i]);
  }
  manifest["counts"] = counts;
  std::ofstream os(dir + "/manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write corpus manifest in '" + dir + "'");
  os << manifest.dump(2) << '\n';
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw std::runtime_error("no corpus manifest in '" + dir + "'");
  json manifest = json::parse(is);
  Corpus corpus;
  corpus.config = config_from_json(manifest.at("config"));
  corpus.vocab = Vocab{corpus.config.n_common, corpus.config.n_rare};
  std::vector<Example>* splits[5] = {&corpus.paired, &corpus.unpaired, &corpus.vs_like,
                                     &corpus.rare_tts, &corpus.rare_spoken};
  for (int i = 0; i < 5; ++i) *splits[i] = read_split(dir + "/" + kSplitNames[i] + ".bin");
  return corpus;
}

}  // namespace djtd
