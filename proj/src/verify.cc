// djtd/verify.cc

#include "djtd/verify.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>

#include "djtd/rng.h"
#include "djtd/trainer.h"

namespace djtd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

GradCheckStats finite_diff_check(std::vector<ParamGroup>& groups,
                                 const std::function<Tensor()>& loss_fn, double h, double tol,
                                 double floor) {
  zero_grads(groups);
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> saved;
  for (auto& g : groups)
    for (auto& t : g.params) {
      if (t.has_grad()) saved.emplace_back(t.grad().begin(), t.grad().end());
      else saved.emplace_back(static_cast<size_t>(t.size()), 0.0);
    }

  GradCheckStats stats;
  size_t slot = 0;
  for (auto& g : groups)
    for (auto& t : g.params) {
      auto vals = t.raw_values();
      const auto& analytic = saved[slot++];
      for (size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        double lp, lm;
        {
          NoGradGuard ng;
          vals[i] = orig + h;
          lp = loss_fn().item();
          vals[i] = orig - h;
          lm = loss_fn().item();
          vals[i] = orig;
        }
        const double fd = (lp - lm) / (2.0 * h);
        const double a = analytic[i];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
        ++stats.checked;
        if (rel > tol) ++stats.failed;
        stats.max_rel_err = std::max(stats.max_rel_err, rel);
      }
    }
  return stats;
}

double rnnt_nll_by_enumeration(std::span<const double> log_probs, int t_len,
                               std::span<const int> labels, int v, int blank_id) {
  const int big_u = static_cast<int>(labels.size());
  const int u_len = big_u + 1;
  const auto lp = [&](int t, int u, int tok) {
    return log_probs[(static_cast<size_t>(t) * u_len + u) * v + tok];
  };
  std::vector<double> paths;
  // Walk every monotone path explicitly: emit the next label or consume a
  // frame with blank; the final blank leaves (T-1, U).
  std::function<void(int, int, double)> walk = [&](int t, int u, double acc) {
    if (u < big_u) walk(t, u + 1, acc + lp(t, u, labels[static_cast<size_t>(u)]));
    if (t < t_len - 1) walk(t + 1, u, acc + lp(t, u, blank_id));
    if (t == t_len - 1 && u == big_u) paths.push_back(acc + lp(t, u, blank_id));
  };
  walk(0, 0, 0.0);
  double mx = kNegInf;
  for (double p : paths) mx = std::max(mx, p);
  double z = 0.0;
  for (double p : paths) z += std::exp(p - mx);
  return -(mx + std::log(z));
}

namespace {

bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

// Best-alignment score of one label sequence under the per-frame cap.
double viterbi_alignment_score(const FirstPassModel& model, const Tensor& enc,
                               const std::vector<int>& seq) {
  const int t_len = enc.dim(0);
  const int big_u = static_cast<int>(seq.size());
  const int u_len = big_u + 1;
  const int cap = model.config().max_sym_per_frame;
  const int v = model.config().vocab_size;
  const int blank = model.config().blank_id;
  Tensor lps = model.lattice_log_probs(enc, seq);
  const auto lp = [&](int t, int u, int tok) {
    return lps.values()[(static_cast<size_t>(t) * u_len + u) * v + tok];
  };
  // dp[t][u][r]: best prefix ending at frame t, u labels emitted, r of them
  // within frame t.
  std::vector<double> dp(static_cast<size_t>(t_len) * u_len * (cap + 1), kNegInf);
  const auto at_ = [&](int t, int u, int r) -> double& {
    return dp[(static_cast<size_t>(t) * u_len + u) * (cap + 1) + r];
  };
  at_(0, 0, 0) = 0.0;
  double final_score = kNegInf;
  for (int t = 0; t < t_len; ++t)
    for (int u = 0; u < u_len; ++u)
      for (int r = 0; r <= cap; ++r) {
        const double s = at_(t, u, r);
        if (s == kNegInf) continue;
        const double with_blank = s + lp(t, u, blank);
        if (t + 1 < t_len) at_(t + 1, u, 0) = std::max(at_(t + 1, u, 0), with_blank);
        else if (u == big_u) final_score = std::max(final_score, with_blank);
        if (u < big_u && r < cap) {
          const double e = s + lp(t, u, seq[static_cast<size_t>(u)]);
          at_(t, u + 1, r + 1) = std::max(at_(t, u + 1, r + 1), e);
        }
      }
  return final_score;
}

}  // namespace

Hypothesis exhaustive_first_pass_decode(const FirstPassModel& model, const Tensor& enc,
                                        int max_len) {
  NoGradGuard ng;
  const int vocab = model.config().vocab_size;
  const int blank = model.config().blank_id;
  Hypothesis best{{}, kNegInf};
  std::vector<int> seq;
  std::function<void()> walk = [&]() {
    const double score = viterbi_alignment_score(model, enc, seq);
    if (score != kNegInf && hyp_better(Hypothesis{seq, score}, best)) best = Hypothesis{seq, score};
    if (static_cast<int>(seq.size()) >= max_len) return;
    for (int tok = 0; tok < vocab; ++tok) {
      if (tok == blank) continue;
      seq.push_back(tok);
      walk();
      seq.pop_back();
    }
  };
  walk();
  return best;
}

Hypothesis exhaustive_two_pass_decode(const Example& example, SecondPassModel& model,
                                      const DecodeConfig& cfg) {
  NoGradGuard ng;
  const ModelVariant v = model.variant();
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

  Hypothesis best{{}, kNegInf};
  std::vector<int> prefix;
  std::function<void(double, const DecoderState&, const DecoderState&)> walk =
      [&](double score, const DecoderState& sa, const DecoderState& sl) {
        DecoderState a_state = sa, l_state = sl;
        Tensor a = model.step_acoustic(e, hyp_ptr, prefix, &a_state, v);
        std::vector<double> lp(a.values().begin(), a.values().end());
        if (use_lm) {
          Tensor l = model.step_lm(e, hyp_ptr, prefix, &l_state, v);
          Tensor c = interpolate(a, l, lambda);
          lp.assign(c.values().begin(), c.values().end());
        }
        Hypothesis closed{prefix, score + lp[static_cast<size_t>(eos)]};
        if (hyp_better(closed, best)) best = closed;
        if (static_cast<int>(prefix.size()) >= cfg.max_decode_len) return;
        for (int tok = 0; tok < vocab; ++tok) {
          if (tok == blank || tok == eos) continue;
          prefix.push_back(tok);
          walk(score + lp[static_cast<size_t>(tok)], a_state, l_state);
          prefix.pop_back();
        }
      };
  walk(0.0, model.initial_state(), model.initial_state());
  return best;
}

int64_t edit_distance_oracle(const std::vector<int>& ref, const std::vector<int>& hyp) {
  // Top-down memoized recursion, as a separately derived route.
  const int r = static_cast<int>(ref.size()), h = static_cast<int>(hyp.size());
  std::vector<int64_t> memo(static_cast<size_t>(r + 1) * (h + 1), -1);
  std::function<int64_t(int, int)> go = [&](int i, int j) -> int64_t {
    if (i == 0) return j;
    if (j == 0) return i;
    int64_t& m = memo[static_cast<size_t>(i) * (h + 1) + j];
    if (m >= 0) return m;
    int64_t cost = go(i - 1, j - 1) +
                   (ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1);
    cost = std::min(cost, go(i - 1, j) + 1);
    cost = std::min(cost, go(i, j - 1) + 1);
    return m = cost;
  };
  return go(r, h);
}

// --- suites ----------------------------------------------------------------

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double range = 1.0, bool grad = true) {
  Tensor t(std::move(shape));
  for (double& v : t.raw_values()) v = rng.uniform(-range, range);
  t.set_requires_grad(grad);
  return t;
}

bool report(const VerifyLog& log, const std::string& name, bool ok, const std::string& detail) {
  log(std::string(ok ? "[ok]   " : "[FAIL] ") + name + (detail.empty() ? "" : ": " + detail));
  return ok;
}

bool report_stats(const VerifyLog& log, const std::string& name, const GradCheckStats& s,
                  double min_pass = 1.0) {
  std::ostringstream os;
  os << s.checked << " params, " << s.failed << " failed, max rel err " << s.max_rel_err;
  return report(log, name, s.ok(min_pass), os.str());
}

}  // namespace

TinySetup make_tiny_setup(uint64_t seed) {
  TinySetup s;
  s.corpus_cfg.n_common = 4;
  s.corpus_cfg.n_rare = 2;
  s.corpus_cfg.feature_dim = 4;
  s.corpus_cfg.min_len = 2;
  s.corpus_cfg.max_len = 3;
  s.corpus_cfg.noise_sigma = 0.05;
  s.corpus_cfg.seed = seed;

  Vocab vocab{s.corpus_cfg.n_common, s.corpus_cfg.n_rare};
  s.fp_cfg.feature_dim = s.corpus_cfg.feature_dim;
  s.fp_cfg.vocab_size = vocab.size();
  s.fp_cfg.enc_hidden = 6;
  s.fp_cfg.enc_proj = 4;
  s.fp_cfg.pred_embed = 4;
  s.fp_cfg.pred_hidden = 6;
  s.fp_cfg.pred_proj = 4;
  s.fp_cfg.joint_dim = 6;
  s.sp_cfg.hyp_embed = 4;
  s.sp_cfg.hyp_hidden = 5;
  s.sp_cfg.hyp_proj = 3;
  s.sp_cfg.attn_heads = 2;
  s.sp_cfg.attn_head_dim = 3;
  s.sp_cfg.dec_embed = 4;
  s.sp_cfg.dec_hidden = 6;
  s.sp_cfg.dec_proj = 5;
  s.sp_cfg.hyp_pad_len = 6;

  const Codebook real_cb = build_codebook(s.corpus_cfg, VoiceKind::kRealVoice);
  const Codebook tts_cb = build_codebook(s.corpus_cfg, VoiceKind::kTtsVoice);
  Example paired;
  paired.kind = ExampleKind::kPaired;
  paired.transcript = {vocab.first_common(), vocab.first_common() + 1};
  paired.features = synthesize(paired.transcript, real_cb, hash_seed(seed, "tiny-paired"));
  Example unpaired;
  unpaired.kind = ExampleKind::kUnpaired;
  unpaired.transcript = {vocab.first_rare(), vocab.first_common() + 2};
  unpaired.features = synthesize(unpaired.transcript, tts_cb, hash_seed(seed, "tiny-unpaired"));
  s.batch = {paired, unpaired};
  return s;
}

bool verify_gradcheck(uint64_t seed, const VerifyLog& log) {
  bool ok = true;
  Rng rng(hash_seed(seed, "gradcheck"));

  {
    // Three stacked nonlinear blocks touching every differentiable op.
    Tensor a = random_tensor(rng, {4, 5});
    Tensor b = random_tensor(rng, {5, 3});
    Tensor c = random_tensor(rng, {1, 3});
    Tensor d = random_tensor(rng, {3, 4});
    Tensor table = random_tensor(rng, {6, 4});
    Tensor m = random_tensor(rng, {4, 4});
    std::vector<ParamGroup> groups{{"composite", Gate::kSecondPassDecoder,
                                    {a, b, c, d, table, m}}};
    const std::vector<int> ids{1, 3, 3, 5};
    auto loss_fn = [&]() {
      Tensor h1 = tanh_op(add(matmul(a, b), c));            // [4,3]
      Tensor h2 = sigmoid(matmul(h1, d));                   // [4,4]
      Tensor emb = embed_lookup(table, ids);                // [4,4]
      Tensor h3 = mul(add(h2, emb), matmul(h2, m));         // [4,4]
      Tensor mixed = concat_cols({softmax(h3), log_softmax(slice_cols(h3, 0, 2))});
      Tensor rows = logsumexp(mixed);                       // [4]
      return at(logsumexp(reshape(rows, {1, 4})), 0);
    };
    ok &= report_stats(log, "composite ops", finite_diff_check(groups, loss_fn));
  }

  {
    Rng lr(hash_seed(seed, "lstm"));
    LstmLayer layer(lr, 3, 4, 3);
    Tensor seq = random_tensor(lr, {5, 3}, 0.8, false);
    std::vector<ParamGroup> groups{{"lstm", Gate::kSecondPassDecoder, {}}};
    layer.collect(groups[0].params);
    auto loss_fn = [&]() {
      Tensor out = lstm_forward(layer, seq).first;
      return at(logsumexp(reshape(out, {1, out.size() > 0 ? static_cast<int>(out.size()) : 1})), 0);
    };
    ok &= report_stats(log, "lstm layer", finite_diff_check(groups, loss_fn));
  }

  {
    Rng ar(hash_seed(seed, "mha"));
    MultiHeadAttention attn(ar, 4, 3, 2, 3);
    Tensor q = random_tensor(ar, {1, 4}, 0.8, false);
    Tensor kv = random_tensor(ar, {5, 3}, 0.8, false);
    std::vector<ParamGroup> groups{{"mha", Gate::kSecondPassDecoder, {}}};
    attn.collect(groups[0].params);
    auto loss_fn = [&]() {
      Tensor ctx = mha_attend(attn, q, kv, kv);
      return at(logsumexp(reshape(ctx, {ctx.cols()})), 0);
    };
    ok &= report_stats(log, "multi-head attention", finite_diff_check(groups, loss_fn));
  }

  {
    // Transducer loss gradient at T'<=3, U<=2.
    TinySetup s = make_tiny_setup(hash_seed(seed, "rnnt-grad"));
    FirstPassModel model(s.fp_cfg, hash_seed(seed, "rnnt-grad-model"));
    const Example& ex = s.batch[0];
    auto loss_fn = [&]() { return model.loss(model.encode(ex.features), ex.transcript); };
    ok &= report_stats(log, "rnnt loss", finite_diff_check(model.param_groups(), loss_fn));
  }
  return ok;
}

bool verify_rnnt_oracle(uint64_t seed, const VerifyLog& log) {
  Rng rng(hash_seed(seed, "rnnt-oracle"));
  bool ok = true;
  double max_abs = 0.0, max_consistency = 0.0;
  const int n_cases = 200;
  for (int n = 0; n < n_cases; ++n) {
    const int t_len = 1 + static_cast<int>(rng.next_below(4));
    const int big_u = static_cast<int>(rng.next_below(4));
    const int v = 2 + static_cast<int>(rng.next_below(4));
    std::vector<int> labels(static_cast<size_t>(big_u));
    for (int& y : labels) y = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(v - 1)));
    Tensor logits = random_tensor(rng, {t_len * (big_u + 1), v}, 2.0, true);
    Tensor lp = log_softmax(logits);
    RnntLattice lat = rnnt_lattice_loss(lp, labels, t_len, 0);
    const double oracle = rnnt_nll_by_enumeration(lp.values(), t_len, labels, v, 0);
    max_abs = std::max(max_abs, std::abs(lat.loss.item() - oracle));
    max_consistency = std::max(max_consistency,
                               std::abs(lat.total_from_alpha - lat.total_from_beta));
  }
  ok &= report(log, "loss vs alignment enumeration (200 cases)", max_abs < 1e-6,
               "max abs diff " + fmt(max_abs));
  ok &= report(log, "alpha/beta totals agree", max_consistency < 1e-8,
               "max abs diff " + fmt(max_consistency));
  return ok;
}

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<ParamGroup>& groups) {
  std::vector<std::vector<double>> out;
  for (const auto& g : groups)
    for (const auto& t : g.params) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

// Bitwise comparison of one group between two snapshots.
bool group_unchanged(const std::vector<ParamGroup>& groups,
                     const std::vector<std::vector<double>>& before, const std::string& name) {
  size_t slot = 0;
  for (const auto& g : groups)
    for (const auto& t : g.params) {
      if (g.name == name) {
        const auto& old = before[slot];
        for (size_t i = 0; i < old.size(); ++i)
          if (std::memcmp(&old[i], &t.values()[i], sizeof(double)) != 0) return false;
      }
      ++slot;
    }
  return true;
}

bool group_changed(const std::vector<ParamGroup>& groups,
                   const std::vector<std::vector<double>>& before, const std::string& name) {
  return !group_unchanged(groups, before, name);
}

}  // namespace

bool verify_gating(uint64_t seed, const VerifyLog& log) {
  TinySetup s = make_tiny_setup(seed);
  bool ok = true;
  const GradMask paired_mask = training_mask(ExampleKind::kPaired, false);
  const GradMask unpaired_mask = training_mask(ExampleKind::kUnpaired, false);

  {
    SecondPassModel model(s.fp_cfg, s.sp_cfg, ModelVariant::kDelibJatdFull,
                          hash_seed(seed, "gating-unpaired"));
    Adam adam;
    auto before = snapshot(model.param_groups());
    std::vector<Example> batch{s.batch[1]};  // all unpaired
    train_step(model, batch, ModelVariant::kDelibJatdFull, 0.1, paired_mask, unpaired_mask, adam,
               5.0);
    ok &= report(log, "unpaired step leaves encoder_stack untouched",
                 group_unchanged(model.param_groups(), before, "encoder_stack"), "");
    ok &= report(log, "unpaired step leaves encoder_attention untouched",
                 group_unchanged(model.param_groups(), before, "encoder_attention"), "");
    ok &= report(log, "unpaired step moves second_pass_decoder",
                 group_changed(model.param_groups(), before, "second_pass_decoder"), "");
    ok &= report(log, "unpaired step moves fixed contexts",
                 group_changed(model.param_groups(), before, "fixed_context_e"), "");
  }
  {
    SecondPassModel model(s.fp_cfg, s.sp_cfg, ModelVariant::kDelibJatdFull,
                          hash_seed(seed, "gating-paired"));
    Adam adam;
    auto before = snapshot(model.param_groups());
    std::vector<Example> batch{s.batch[0]};  // all paired
    train_step(model, batch, ModelVariant::kDelibJatdFull, 0.1, paired_mask, unpaired_mask, adam,
               5.0);
    ok &= report(log, "paired step leaves fixed_context_e untouched",
                 group_unchanged(model.param_groups(), before, "fixed_context_e"), "");
    ok &= report(log, "paired step leaves fixed_context_b untouched",
                 group_unchanged(model.param_groups(), before, "fixed_context_b"), "");
    ok &= report(log, "paired step moves second_pass_decoder",
                 group_changed(model.param_groups(), before, "second_pass_decoder"), "");
  }
  return ok;
}

bool verify_interp(uint64_t seed, const VerifyLog& log) {
  Rng rng(hash_seed(seed, "interp"));
  bool ok = true;
  Tensor a = random_tensor(rng, {8}, 3.0, false);
  Tensor b = random_tensor(rng, {8}, 3.0, false);
  {
    Tensor c1 = interpolate(a, b, 1.0);
    Tensor c0 = interpolate(a, b, 0.0);
    bool exact = std::equal(c1.values().begin(), c1.values().end(), a.values().begin()) &&
                 std::equal(c0.values().begin(), c0.values().end(), b.values().begin());
    ok &= report(log, "lambda endpoints return the branch unchanged", exact, "");
  }
  {
    Tensor x = Tensor({2}, {-1.0, -1.0});
    Tensor y = Tensor({2}, {-3.0, -3.0});
    Tensor mid = interpolate(x, y, 0.5);
    ok &= report(log, "midpoint of (-1,-3) is -2", mid[0] == -2.0 && mid[1] == -2.0, "");
  }
  {
    double worst = 0.0;
    for (double lam : {0.1, 0.3, 0.7, 0.9}) {
      Tensor c = interpolate(a, b, lam);
      for (int i = 0; i < 8; ++i)
        worst = std::max(worst, std::abs(c[i] - (lam * a[i] + (1.0 - lam) * b[i])));
    }
    ok &= report(log, "combined equals lambda*a+(1-lambda)*b", worst <= 1e-15,
                 "max abs diff " + fmt(worst));
  }
  {
    // Adding a constant to both branches shifts the combined scores but not
    // the argmax.
    Tensor shift = Tensor({8}, 2.5);
    Tensor c = interpolate(a, b, 0.3);
    Tensor cs = interpolate(add(a, shift), add(b, shift), 0.3);
    const auto argmax = [](const Tensor& t) {
      return std::max_element(t.values().begin(), t.values().end()) - t.values().begin();
    };
    ok &= report(log, "argmax invariant under common shift", argmax(c) == argmax(cs), "");
  }
  return ok;
}

bool verify_beam_oracle(uint64_t seed, const VerifyLog& log) {
  bool ok = true;
  {
    // First pass against exhaustive search on tiny instances.
    bool all_equal = true;
    bool monotone = true;
    for (int n = 0; n < 6; ++n) {
      FirstPassConfig cfg;
      cfg.feature_dim = 3;
      cfg.vocab_size = 4;
      cfg.enc_hidden = 4;
      cfg.enc_proj = 3;
      cfg.pred_embed = 3;
      cfg.pred_hidden = 4;
      cfg.pred_proj = 3;
      cfg.joint_dim = 4;
      FirstPassModel model(cfg, hash_seed(seed, 900 + static_cast<uint64_t>(n)));
      Rng rng(hash_seed(seed, 950 + static_cast<uint64_t>(n)));
      const int t_in = 2 + static_cast<int>(rng.next_below(4));  // T' in 1..3
      Tensor features = random_tensor(rng, {t_in, 3}, 1.5, false);
      NoGradGuard ng;
      Tensor enc = model.encode(features);
      Hypothesis oracle = exhaustive_first_pass_decode(
          model, enc, cfg.max_sym_per_frame * enc.dim(0));
      Hypothesis found = model.decode(enc, 512).hyps.front();
      if (found.tokens != oracle.tokens || std::abs(found.score - oracle.score) > 1e-9)
        all_equal = false;
      double prev = kNegInf;
      for (int w = 1; w <= 6; ++w) {
        const double top = model.decode(enc, w).hyps.front().score;
        if (top < prev - 1e-12) monotone = false;
        prev = top;
      }
    }
    ok &= report(log, "first-pass beam matches exhaustive search", all_equal, "");
    ok &= report(log, "first-pass top score monotone in width", monotone, "");
  }
  {
    TinySetup s = make_tiny_setup(seed);
    FirstPassConfig cfg = s.fp_cfg;
    cfg.vocab_size = 4;  // blank, eos, two content tokens
    cfg.feature_dim = 3;
    bool all_equal = true;
    bool monotone = true;
    for (int n = 0; n < 4; ++n) {
      const ModelVariant v = n % 2 == 0 ? ModelVariant::kDelibJatdFull
                                        : ModelVariant::kDeliberation;
      SecondPassConfig sp = s.sp_cfg;
      sp.hyp_pad_len = 4;
      SecondPassModel model(cfg, sp, v, hash_seed(seed, 700 + static_cast<uint64_t>(n)));
      Rng rng(hash_seed(seed, 750 + static_cast<uint64_t>(n)));
      Example ex;
      ex.transcript = {2, 3};
      ex.features = random_tensor(rng, {4, 3}, 1.5, false);
      DecodeConfig dc;
      dc.first_beam = 2;
      dc.second_beam = 64;
      dc.max_decode_len = 3;
      dc.lambda_inference = 0.025;
      Hypothesis oracle = exhaustive_two_pass_decode(ex, model, dc);
      Hypothesis found = two_pass_decode(ex, model, dc);
      if (found.tokens != oracle.tokens || std::abs(found.score - oracle.score) > 1e-9)
        all_equal = false;
      double prev = kNegInf;
      for (int w = 1; w <= 5; ++w) {
        DecodeConfig dw = dc;
        dw.second_beam = w;
        const double top = two_pass_decode(ex, model, dw).score;
        if (top < prev - 1e-12) monotone = false;
        prev = top;
      }
    }
    ok &= report(log, "two-pass beam matches exhaustive argmax", all_equal, "");
    ok &= report(log, "two-pass top score monotone in width", monotone, "");
  }
  return ok;
}

std::vector<std::string> verify_suite_names() {
  return {"gradcheck", "rnnt-oracle", "gating", "interp", "beam-oracle"};
}

bool run_verify_suite(const std::string& name, uint64_t seed, const VerifyLog& log) {
  if (name == "gradcheck") return verify_gradcheck(seed, log);
  if (name == "rnnt-oracle") return verify_rnnt_oracle(seed, log);
  if (name == "gating") return verify_gating(seed, log);
  if (name == "interp") return verify_interp(seed, log);
  if (name == "beam-oracle") return verify_beam_oracle(seed, log);
  throw std::invalid_argument("unknown verify suite '" + name + "'");
}

}  // namespace djtd
