// djtd/eval.cc

#include "djtd/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "djtd/rng.h"

namespace djtd {

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int k = std::min(threads, n);
  pool.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

struct SpItem {
  std::vector<int> tokens;
  double score = 0.0;
  DecoderState acoustic, lm;
};

struct SpCand {
  std::vector<int> tokens;
  double score = 0.0;
  int src = -1;
};

bool sp_cand_before(const SpCand& a, const SpCand& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis two_pass_decode(const Example& example, SecondPassModel& model,
                           const DecodeConfig& cfg, std::optional<ModelVariant> as_variant) {
  if (!example.features.defined()) throw std::invalid_argument("two_pass_decode: empty input");
  NoGradGuard ng;
  const ModelVariant v = as_variant.value_or(model.variant());
  const bool jatd = variant_is_jatd(v);
  const double lambda = jatd ? cfg.lambda_inference : 1.0;
  const bool use_lm = jatd && lambda < 1.0;
  const int blank = model.first_pass().config().blank_id;
  const int eos = model.config().eos_id;
  const int vocab = model.vocab_size();

  Tensor e = model.first_pass().encode(example.features);
  FirstPassResult first = model.first_pass().decode(e, cfg.first_beam);
  HypothesisEncoding hyp_enc;
  const HypothesisEncoding* hyp_ptr = nullptr;
  if (variant_has_hyp_attention(v)) {
    hyp_enc = model.encode_hypotheses(first, model.config().top_k);
    hyp_ptr = &hyp_enc;
  }

  // Per-step interpolated log-probs; states advance in place.
  auto step_scores = [&](SpItem& item) {
    Tensor a = model.step_acoustic(e, hyp_ptr, item.tokens, &item.acoustic, v);
    if (!use_lm) return std::vector<double>(a.values().begin(), a.values().end());
    Tensor l = model.step_lm(e, hyp_ptr, item.tokens, &item.lm, v);
    Tensor c = interpolate(a, l, lambda);
    return std::vector<double>(c.values().begin(), c.values().end());
  };

  // One tree search at a fixed width; every EOS closure is kept.
  auto search = [&](int w, bool* pruned) {
    std::vector<SpItem> active;
    active.push_back(SpItem{{}, 0.0, model.initial_state(), model.initial_state()});
    std::vector<SpCand> completed;
    for (int len = 0; len <= cfg.max_decode_len && !active.empty(); ++len) {
      std::vector<SpCand> extensions;
      for (size_t i = 0; i < active.size(); ++i) {
        SpItem& item = active[i];
        const auto lp = step_scores(item);
        completed.push_back(SpCand{item.tokens, item.score + lp[static_cast<size_t>(eos)],
                                   static_cast<int>(i)});
        if (len == cfg.max_decode_len) continue;  // force-closed
        for (int tok = 0; tok < vocab; ++tok) {
          if (tok == blank || tok == eos) continue;
          SpCand c;
          c.tokens = item.tokens;
          c.tokens.push_back(tok);
          c.score = item.score + lp[static_cast<size_t>(tok)];
          c.src = static_cast<int>(i);
          extensions.push_back(std::move(c));
        }
      }
      std::sort(extensions.begin(), extensions.end(), sp_cand_before);
      if (static_cast<int>(extensions.size()) > w) *pruned = true;
      const int keep = std::min<int>(w, static_cast<int>(extensions.size()));
      std::vector<SpItem> next;
      next.reserve(static_cast<size_t>(keep));
      for (int i = 0; i < keep; ++i) {
        SpCand& c = extensions[static_cast<size_t>(i)];
        next.push_back(SpItem{std::move(c.tokens), c.score,
                              active[static_cast<size_t>(c.src)].acoustic,
                              active[static_cast<size_t>(c.src)].lm});
      }
      active = std::move(next);
    }
    return completed;
  };

  if (cfg.second_beam < 1) throw std::invalid_argument("two_pass_decode: beam must be >= 1");
  std::map<std::vector<int>, double> best;
  for (int w = 1; w <= cfg.second_beam; ++w) {
    bool pruned = false;
    for (const SpCand& c : search(w, &pruned)) {
      auto it = best.find(c.tokens);
      if (it == best.end() || c.score > it->second) best[c.tokens] = c.score;
    }
    if (!pruned) break;
  }
  Hypothesis top;
  bool have = false;
  for (const auto& [toks, sc] : best) {
    if (!have || sc > top.score || (sc == top.score && toks < top.tokens)) {
      top = Hypothesis{toks, sc};
      have = true;
    }
  }
  return top;
}

EditCounts levenshtein(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const int r = static_cast<int>(ref.size()), h = static_cast<int>(hyp.size());
  std::vector<int> dp(static_cast<size_t>(r + 1) * (h + 1));
  auto at_ = [&](int i, int j) -> int& { return dp[static_cast<size_t>(i) * (h + 1) + j]; };
  for (int i = 0; i <= r; ++i) at_(i, 0) = i;
  for (int j = 0; j <= h; ++j) at_(0, j) = j;
  for (int i = 1; i <= r; ++i)
    for (int j = 1; j <= h; ++j) {
      const int diag = at_(i - 1, j - 1) + (ref[static_cast<size_t>(i - 1)] !=
                                            hyp[static_cast<size_t>(j - 1)]);
      const int ins = at_(i, j - 1) + 1;
      const int del = at_(i - 1, j) + 1;
      at_(i, j) = std::min({diag, ins, del});
    }
  EditCounts counts;
  counts.ref_len = r;
  // Backtrace; at ties substitution/match wins over insertion over deletion.
  int i = r, j = h;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at_(i, j) == at_(i - 1, j - 1) + (ref[static_cast<size_t>(i - 1)] !=
                                          hyp[static_cast<size_t>(j - 1)])) {
      if (ref[static_cast<size_t>(i - 1)] != hyp[static_cast<size_t>(j - 1)]) ++counts.sub;
      --i;
      --j;
    } else if (j > 0 && at_(i, j) == at_(i, j - 1) + 1) {
      ++counts.ins;
      --j;
    } else {
      ++counts.del;
      --i;
    }
  }
  return counts;
}

WerResult corpus_wer(const std::vector<std::vector<int>>& refs,
                     const std::vector<std::vector<int>>& hyps) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument("wer: " + std::to_string(refs.size()) + " refs vs " +
                                std::to_string(hyps.size()) + " hyps");
  WerResult out;
  for (size_t i = 0; i < refs.size(); ++i) {
    EditCounts c = levenshtein(refs[i], hyps[i]);
    out.counts.sub += c.sub;
    out.counts.ins += c.ins;
    out.counts.del += c.del;
    out.counts.ref_len += c.ref_len;
  }
  if (out.counts.ref_len == 0) throw std::invalid_argument("wer: empty reference corpus");
  out.wer = static_cast<double>(out.counts.errors()) / static_cast<double>(out.counts.ref_len);
  return out;
}

namespace {

std::vector<std::vector<int>> decode_set_second(SecondPassModel& model,
                                                std::span<const Example> set,
                                                const DecodeConfig& cfg) {
  std::vector<std::vector<int>> hyps(set.size());
  parallel_for(static_cast<int>(set.size()), cfg.threads, [&](int i) {
    hyps[static_cast<size_t>(i)] =
        two_pass_decode(set[static_cast<size_t>(i)], model, cfg).tokens;
  });
  return hyps;
}

std::vector<std::vector<int>> decode_set_first(const FirstPassModel& model,
                                               std::span<const Example> set, int beam,
                                               int threads) {
  std::vector<std::vector<int>> hyps(set.size());
  parallel_for(static_cast<int>(set.size()), threads, [&](int i) {
    NoGradGuard ng;
    Tensor e = model.encode(set[static_cast<size_t>(i)].features);
    hyps[static_cast<size_t>(i)] = model.decode(e, beam).hyps.front().tokens;
  });
  return hyps;
}

std::vector<std::vector<int>> refs_of(std::span<const Example> set) {
  std::vector<std::vector<int>> refs;
  refs.reserve(set.size());
  for (const auto& ex : set) refs.push_back(ex.transcript);
  return refs;
}

}  // namespace

LambdaChoice select_lambda(SecondPassModel& model, std::span<const Example> dev_set,
                           const std::vector<double>& grid, const DecodeConfig& cfg) {
  if (grid.empty()) throw std::invalid_argument("select_lambda: empty grid");
  const auto refs = refs_of(dev_set);
  LambdaChoice choice;
  double best_wer = 0.0;
  bool have = false;
  for (double lam : grid) {
    DecodeConfig dc = cfg;
    dc.lambda_inference = lam;
    const double wer = corpus_wer(refs, decode_set_second(model, dev_set, dc)).wer;
    choice.grid_wers.emplace_back(lam, wer);
    if (!have || wer < best_wer || (wer == best_wer && lam < choice.lambda)) {
      best_wer = wer;
      choice.lambda = lam;
      have = true;
    }
  }
  return choice;
}

double MatrixRow::mean_wer(const std::string& set_name) const {
  auto it = seed_wers.find(set_name);
  if (it == seed_wers.end() || it->second.empty()) return 0.0;
  double s = 0.0;
  for (double w : it->second) s += w;
  return s / static_cast<double>(it->second.size());
}

std::vector<std::string> known_matrix_rows() {
  return {"rnnt-paired",  "rnnt-mixed",         "las-paired",
          "las-mixed",    "las-jatd",           "delib-paired",
          "delib-mixed",  "delib-jatd-partial", "delib-jatd-full"};
}

namespace {

struct RowSpec {
  bool is_rnnt = false;
  ModelVariant variant = ModelVariant::kDeliberation;
  std::string train_data;  // "paired" or "mixed"
};

RowSpec row_spec(const std::string& name) {
  if (name == "rnnt-paired") return {true, ModelVariant::kDeliberation, "paired"};
  if (name == "rnnt-mixed") return {true, ModelVariant::kDeliberation, "mixed"};
  if (name == "las-paired") return {false, ModelVariant::kLas, "paired"};
  if (name == "las-mixed") return {false, ModelVariant::kLas, "mixed"};
  if (name == "las-jatd") return {false, ModelVariant::kLasJatd, "mixed"};
  if (name == "delib-paired") return {false, ModelVariant::kDeliberation, "paired"};
  if (name == "delib-mixed") return {false, ModelVariant::kDeliberation, "mixed"};
  if (name == "delib-jatd-partial") return {false, ModelVariant::kDelibJatdPartial, "mixed"};
  if (name == "delib-jatd-full") return {false, ModelVariant::kDelibJatdFull, "mixed"};
  throw std::invalid_argument("unknown experiment row '" + name + "'");
}

const char* kSetNames[3] = {"vs_like", "rare_tts", "rare_spoken"};

}  // namespace

EvalReport run_experiment_matrix(const Corpus& corpus, const std::vector<std::string>& rows,
                                 const std::vector<uint64_t>& seeds, const TrainSettings& train,
                                 const DecodeConfig& decode, MetricsSink sink) {
  if (rows.empty() || seeds.empty())
    throw std::invalid_argument("experiment matrix: need at least one row and one seed");
  FirstPassConfig fp_cfg;
  fp_cfg.feature_dim = corpus.config.feature_dim;
  fp_cfg.vocab_size = corpus.vocab.size();
  SecondPassConfig sp_cfg;
  sp_cfg.eos_id = corpus.vocab.eos_id();

  EvalReport report;
  for (const auto& name : rows) {
    MatrixRow row;
    row.name = name;
    row.training_data = row_spec(name).train_data;
    report.rows.push_back(std::move(row));
  }
  const std::span<const Example> sets[3] = {corpus.vs_like, corpus.rare_tts, corpus.rare_spoken};

  // Win/loss extraction compares full deliberation-JATD against the
  // paired-only deliberation baseline when both are present.
  auto has_row = [&](const std::string& n) {
    return std::find(rows.begin(), rows.end(), n) != rows.end();
  };
  report.sample_row_a = has_row("delib-jatd-full") ? "delib-jatd-full" : rows.front();
  report.sample_row_b = has_row("delib-paired") ? "delib-paired"
                        : rows.size() > 1       ? rows[1]
                                                : rows.front();
  std::vector<std::vector<int>> sample_hyps_a, sample_hyps_b;

  for (size_t si = 0; si < seeds.size(); ++si) {
    const uint64_t seed = seeds[si];
    // Shared stage-1 model: the paired-data transducer every second-pass
    // row is initialized from.
    TrainSettings base_cfg = train;
    base_cfg.seed = hash_seed(seed, "base-rnnt");
    FirstPassModel base_fp(fp_cfg, base_cfg.seed);
    Adam base_adam(train.adam);
    pretrain_first_pass(base_fp, corpus.paired, base_cfg, base_adam, 0, train.pretrain_steps,
                        sink);

    for (auto& row : report.rows) {
      const RowSpec spec = row_spec(row.name);
      std::vector<std::vector<int>> set_hyps[3];
      if (spec.is_rnnt) {
        if (spec.train_data == "paired") {
          for (int s = 0; s < 3; ++s)
            set_hyps[s] = decode_set_first(base_fp, sets[s], decode.first_beam, decode.threads);
        } else {
          TrainSettings cfg = train;
          cfg.seed = hash_seed(seed, row.name);
          FirstPassModel m(fp_cfg, cfg.seed);
          std::vector<Example> pool = corpus.paired;
          pool.insert(pool.end(), corpus.unpaired.begin(), corpus.unpaired.end());
          Adam adam(train.adam);
          pretrain_first_pass(m, pool, cfg, adam, 0, train.pretrain_steps, sink);
          for (int s = 0; s < 3; ++s)
            set_hyps[s] = decode_set_first(m, sets[s], decode.first_beam, decode.threads);
        }
      } else {
        TrainSettings cfg = train;
        cfg.variant = variant_name(spec.variant);
        cfg.train_data = spec.train_data;
        cfg.seed = hash_seed(seed, row.name);
        SecondPassModel m(fp_cfg, sp_cfg, spec.variant, cfg.seed);
        adopt_first_pass(m, base_fp);
        Adam adam(train.adam);
        train_second_pass(m, corpus, cfg, adam, 0, train.second_pass_steps, sink);

        DecodeConfig dc = decode;
        if (variant_is_jatd(spec.variant)) {
          const int dev_n = std::max<int>(
              1, static_cast<int>(std::llround(decode.dev_fraction *
                                               static_cast<double>(corpus.vs_like.size()))));
          std::span<const Example> dev(corpus.vs_like.data(), static_cast<size_t>(dev_n));
          dc.lambda_inference = select_lambda(m, dev, decode.lambda_grid, dc).lambda;
          row.lambdas.push_back(dc.lambda_inference);
        }
        for (int s = 0; s < 3; ++s) set_hyps[s] = decode_set_second(m, sets[s], dc);
      }

      for (int s = 0; s < 3; ++s) {
        WerResult wr = corpus_wer(refs_of(sets[s]), set_hyps[s]);
        row.seed_wers[kSetNames[s]].push_back(wr.wer);
        auto& pooled = row.pooled[kSetNames[s]];
        pooled.counts.sub += wr.counts.sub;
        pooled.counts.ins += wr.counts.ins;
        pooled.counts.del += wr.counts.del;
        pooled.counts.ref_len += wr.counts.ref_len;
        pooled.wer = static_cast<double>(pooled.counts.errors()) /
                     static_cast<double>(pooled.counts.ref_len);
      }
      if (si == 0 && row.name == report.sample_row_a) sample_hyps_a = set_hyps[2];
      if (si == 0 && row.name == report.sample_row_b) sample_hyps_b = set_hyps[2];
    }
  }

  if (!sample_hyps_a.empty() && !sample_hyps_b.empty()) {
    int wins = 0, losses = 0;
    for (size_t i = 0; i < corpus.rare_spoken.size(); ++i) {
      const auto& ref = corpus.rare_spoken[i].transcript;
      const bool a_ok = levenshtein(ref, sample_hyps_a[i]).errors() == 0;
      const bool b_ok = levenshtein(ref, sample_hyps_b[i]).errors() == 0;
      if (a_ok == b_ok) continue;
      if (a_ok && wins >= 5) continue;
      if (b_ok && losses >= 5) continue;
      (a_ok ? wins : losses) += 1;
      report.samples.push_back(
          WinLossSample{"rare_spoken", ref, sample_hyps_a[i], sample_hyps_b[i], a_ok});
      if (wins >= 5 && losses >= 5) break;
    }
  }
  return report;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "model" << std::setw(8) << "data" << std::setw(10)
     << "lambda";
  for (const char* s : kSetNames) os << std::right << std::setw(13) << s;
  os << "\n" << std::string(22 + 8 + 10 + 13 * 3, '-') << "\n";
  for (const auto& row : report.rows) {
    os << std::left << std::setw(22) << row.name << std::setw(8) << row.training_data;
    std::ostringstream lam;
    if (row.lambdas.empty()) lam << "-";
    else lam << row.lambdas.front();
    os << std::setw(10) << lam.str();
    for (const char* s : kSetNames)
      os << std::right << std::setw(13) << std::fixed << std::setprecision(2)
         << 100.0 * row.mean_wer(s);
    os << "\n";
  }
  if (!report.samples.empty()) {
    os << "\nwins/losses: " << report.sample_row_a << " vs " << report.sample_row_b << "\n";
    for (const auto& s : report.samples) {
      os << (s.win_for_a ? "  win  " : "  loss ") << "ref=";
      for (int t : s.ref) os << t << ' ';
      os << "| a=";
      for (int t : s.hyp_a) os << t << ' ';
      os << "| b=";
      for (int t : s.hyp_b) os << t << ' ';
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace djtd
