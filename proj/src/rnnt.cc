// djtd/rnnt.cc

#include "djtd/rnnt.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "djtd/rng.h"

namespace djtd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

FirstPassModel::FirstPassModel(const FirstPassConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(hash_seed(seed, "first-pass-init"));
  enc_l1_ = LstmLayer(rng, cfg.feature_dim, cfg.enc_hidden, cfg.enc_proj);
  tr_ = TimeReduction{cfg.time_factor};
  enc_l2_ = LstmLayer(rng, cfg.enc_proj * cfg.time_factor, cfg.enc_hidden, cfg.enc_proj);
  pred_embed_ = Embedding(rng, cfg.vocab_size, cfg.pred_embed);
  pred_lstm_ = LstmLayer(rng, cfg.pred_embed, cfg.pred_hidden, cfg.pred_proj);
  joint_w_enc_ = init_param(rng, {cfg.enc_proj, cfg.joint_dim});
  joint_w_pred_ = init_param(rng, {cfg.pred_proj, cfg.joint_dim});
  joint_bias_ = init_param(rng, {1, cfg.joint_dim});
  joint_out_ = Linear(rng, cfg.joint_dim, cfg.vocab_size);

  ParamGroup encoder{"encoder_stack", Gate::kEncoderStack, {}};
  enc_l1_.collect(encoder.params);
  enc_l2_.collect(encoder.params);
  ParamGroup first{"first_pass", Gate::kFirstPass, {}};
  pred_embed_.collect(first.params);
  pred_lstm_.collect(first.params);
  first.params.push_back(joint_w_enc_);
  first.params.push_back(joint_w_pred_);
  first.params.push_back(joint_bias_);
  joint_out_.collect(first.params);
  groups_ = {std::move(encoder), std::move(first)};
}

Tensor FirstPassModel::encode(const Tensor& features) const {
  Tensor h1 = lstm_forward(enc_l1_, features).first;
  Tensor reduced = time_reduce(tr_, h1);
  return lstm_forward(enc_l2_, reduced).first;
}

Tensor FirstPassModel::pred_outputs(const std::vector<int>& labels) const {
  std::vector<int> ids(labels.size() + 1);
  ids[0] = cfg_.blank_id;  // start symbol
  std::copy(labels.begin(), labels.end(), ids.begin() + 1);
  return lstm_forward(pred_lstm_, pred_embed_.lookup(ids)).first;
}

Tensor FirstPassModel::joint_logits(const Tensor& enc_row, const Tensor& pred_row) const {
  Tensor h = tanh_op(add(add(matmul(enc_row, joint_w_enc_), matmul(pred_row, joint_w_pred_)),
                         joint_bias_));
  return joint_out_.forward(h);
}

Tensor FirstPassModel::lattice_log_probs(const Tensor& enc, const std::vector<int>& labels) const {
  Tensor pred = pred_outputs(labels);
  Tensor ep = matmul(enc, joint_w_enc_);   // [T', J]
  Tensor pp = matmul(pred, joint_w_pred_); // [U+1, J]
  const int t_len = enc.dim(0), u_len = pred.dim(0);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(t_len) * u_len);
  for (int t = 0; t < t_len; ++t) {
    Tensor et = row(ep, t);
    for (int u = 0; u < u_len; ++u)
      rows.push_back(joint_out_.forward(tanh_op(add(add(et, row(pp, u)), joint_bias_))));
  }
  return log_softmax(concat_rows(rows));
}

RnntLattice rnnt_lattice_loss(const Tensor& log_probs, const std::vector<int>& labels, int t_len,
                              int blank_id) {
  const int big_u = static_cast<int>(labels.size());
  const int u_len = big_u + 1;
  const int v = log_probs.cols();
  if (t_len < 1 || log_probs.rows() != t_len * u_len)
    throw ShapeError("rnnt_lattice", log_probs.shape(), {t_len * u_len, v});
  for (int y : labels) {
    if (y == blank_id) throw std::invalid_argument("rnnt_lattice: blank in label sequence");
    if (y < 0 || y >= v) throw std::invalid_argument("rnnt_lattice: label out of vocabulary");
  }

  const auto lp = [&](int t, int u, int tok) {
    return log_probs.values()[(static_cast<size_t>(t) * u_len + u) * v + tok];
  };

  RnntLattice lat;
  lat.t_len = t_len;
  lat.u_len = u_len;
  lat.alpha.assign(static_cast<size_t>(t_len) * u_len, kNegInf);
  lat.beta.assign(static_cast<size_t>(t_len) * u_len, kNegInf);
  auto a = [&](int t, int u) -> double& { return lat.alpha[static_cast<size_t>(t) * u_len + u]; };
  auto b = [&](int t, int u) -> double& { return lat.beta[static_cast<size_t>(t) * u_len + u]; };

  a(0, 0) = 0.0;
  for (int t = 1; t < t_len; ++t) a(t, 0) = a(t - 1, 0) + lp(t - 1, 0, blank_id);
  for (int u = 1; u < u_len; ++u) a(0, u) = a(0, u - 1) + lp(0, u - 1, labels[u - 1]);
  for (int t = 1; t < t_len; ++t)
    for (int u = 1; u < u_len; ++u)
      a(t, u) = log_add(a(t - 1, u) + lp(t - 1, u, blank_id),
                        a(t, u - 1) + lp(t, u - 1, labels[u - 1]));
  lat.total_from_alpha = a(t_len - 1, big_u) + lp(t_len - 1, big_u, blank_id);

  b(t_len - 1, big_u) = lp(t_len - 1, big_u, blank_id);
  for (int t = t_len - 2; t >= 0; --t) b(t, big_u) = lp(t, big_u, blank_id) + b(t + 1, big_u);
  for (int u = big_u - 1; u >= 0; --u)
    b(t_len - 1, u) = lp(t_len - 1, u, labels[u]) + b(t_len - 1, u + 1);
  for (int t = t_len - 2; t >= 0; --t)
    for (int u = big_u - 1; u >= 0; --u)
      b(t, u) = log_add(lp(t, u, blank_id) + b(t + 1, u), lp(t, u, labels[u]) + b(t, u + 1));
  lat.total_from_beta = b(0, 0);

  const double log_z = lat.total_from_alpha;
  // d(-log Z)/d lp(t,u,k) = -exp(alpha(t,u) + lp + beta(successor) - log Z),
  // nonzero only for the blank and the next-label entries.
  lat.loss = make_tensor_op(
      {1}, {-log_z}, {log_probs},
      [alpha = lat.alpha, beta = lat.beta, labels, t_len, u_len, v, blank_id,
       log_z](TensorImpl& self) {
        const double g = self.grad[0];
        auto& p = *self.parents[0];
        const int big_u = u_len - 1;
        for (int t = 0; t < t_len; ++t)
          for (int u = 0; u < u_len; ++u) {
            const size_t node = static_cast<size_t>(t) * u_len + u;
            const size_t base = node * v;
            const double occ = alpha[node];
            // blank transition to (t+1, u); terminal from the last point
            double tail;
            if (t == t_len - 1 && u == big_u) tail = 0.0;
            else if (t + 1 < t_len) tail = beta[node + static_cast<size_t>(u_len)];
            else tail = kNegInf;
            if (tail != kNegInf)
              p.grad[base + static_cast<size_t>(blank_id)] -=
                  g * std::exp(occ + p.values[base + static_cast<size_t>(blank_id)] + tail - log_z);
            if (u < big_u) {
              const size_t lab = static_cast<size_t>(labels[u]);
              p.grad[base + lab] -=
                  g * std::exp(occ + p.values[base + lab] + beta[node + 1] - log_z);
            }
          }
      });
  lat.log_probs = log_probs;
  return lat;
}

RnntLattice FirstPassModel::lattice(const Tensor& enc, const std::vector<int>& labels) const {
  if (static_cast<int>(labels.size()) > cfg_.max_label_len)
    throw std::invalid_argument("rnnt loss: label sequence length " +
                                std::to_string(labels.size()) + " exceeds max " +
                                std::to_string(cfg_.max_label_len));
  Tensor lp = lattice_log_probs(enc, labels);
  return rnnt_lattice_loss(lp, labels, enc.dim(0), cfg_.blank_id);
}

Tensor FirstPassModel::loss(const Tensor& enc, const std::vector<int>& labels) const {
  return lattice(enc, labels).loss;
}

// --- decoding ------------------------------------------------------------

namespace {

using TokenKey = std::vector<int>;

struct DecodeItem {
  double score = kNegInf;
  LstmState pred_state;
  Tensor pred_out;  // [1, pred_proj]
};

struct Candidate {
  TokenKey tokens;
  double score = kNegInf;
  bool is_blank = false;
  const DecodeItem* src = nullptr;
  int label = -1;
};

bool cand_before(const Candidate& x, const Candidate& y) {
  if (x.score != y.score) return x.score > y.score;
  if (x.tokens != y.tokens) return x.tokens < y.tokens;
  return x.is_blank && !y.is_blank;
}

void merge_max(std::map<TokenKey, DecodeItem>& into, const TokenKey& key, DecodeItem item) {
  auto it = into.find(key);
  if (it == into.end()) into.emplace(key, std::move(item));
  else if (item.score > it->second.score) it->second = std::move(item);
}

// Keep the w best entries of a token->item map.
void prune_map(std::map<TokenKey, DecodeItem>& m, int w, bool* pruned) {
  if (static_cast<int>(m.size()) <= w) return;
  *pruned = true;
  std::vector<std::pair<double, TokenKey>> order;
  order.reserve(m.size());
  for (const auto& [k, item] : m) order.emplace_back(item.score, k);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::map<TokenKey, DecodeItem> kept;
  for (int i = 0; i < w; ++i) kept.emplace(order[static_cast<size_t>(i)].second,
                                           std::move(m[order[static_cast<size_t>(i)].second]));
  m = std::move(kept);
}

}  // namespace

struct FirstPassStepper {
  const FirstPassModel& model;

  std::vector<double> dist(const Tensor& enc_row, const Tensor& pred_out) const {
    Tensor lp = log_softmax(model.joint_logits(enc_row, pred_out));
    return {lp.values().begin(), lp.values().end()};
  }

  std::pair<Tensor, LstmState> advance(int token, const LstmState& state) const {
    return lstm_step(model.pred_lstm_, model.pred_embed_.lookup(token), state);
  }

  DecodeItem initial() const {
    auto [out, st] = advance(model.config().blank_id, lstm_zero_state(model.pred_lstm_));
    return DecodeItem{0.0, st, out};
  }

  // One frame-synchronous search at a fixed width. Within each frame a
  // hypothesis may emit up to max_sym_per_frame labels before taking the
  // blank; blank and emission candidates compete in the same pruning pool,
  // which makes width 1 coincide with the greedy rollout.
  std::map<TokenKey, double> search(const Tensor& enc, int w, bool* pruned) const {
    const int blank = model.config().blank_id;
    const int max_sym = model.config().max_sym_per_frame;
    const int vocab = model.config().vocab_size;
    std::map<TokenKey, DecodeItem> frontier;
    frontier.emplace(TokenKey{}, initial());
    for (int t = 0; t < enc.dim(0); ++t) {
      Tensor enc_row = row(enc, t);
      std::map<TokenKey, DecodeItem> next_frame;
      std::map<TokenKey, DecodeItem> active = std::move(frontier);
      for (int r = 0; r <= max_sym && !active.empty(); ++r) {
        std::vector<Candidate> cands;
        for (const auto& [toks, item] : active) {
          const auto d = dist(enc_row, item.pred_out);
          cands.push_back({toks, item.score + d[static_cast<size_t>(blank)], true, &item, -1});
          if (r < max_sym) {
            for (int v = 0; v < vocab; ++v) {
              if (v == blank) continue;
              TokenKey ext = toks;
              ext.push_back(v);
              cands.push_back({std::move(ext), item.score + d[static_cast<size_t>(v)], false,
                               &item, v});
            }
          }
        }
        std::sort(cands.begin(), cands.end(), cand_before);
        if (static_cast<int>(cands.size()) > w) *pruned = true;
        std::map<TokenKey, DecodeItem> next_active;
        const int keep = std::min<int>(w, static_cast<int>(cands.size()));
        for (int i = 0; i < keep; ++i) {
          Candidate& c = cands[static_cast<size_t>(i)];
          if (c.is_blank) {
            merge_max(next_frame, c.tokens,
                      DecodeItem{c.score, c.src->pred_state, c.src->pred_out});
          } else {
            auto [out, st] = advance(c.label, c.src->pred_state);
            merge_max(next_active, c.tokens, DecodeItem{c.score, st, out});
          }
        }
        active = std::move(next_active);
      }
      prune_map(next_frame, w, pruned);
      frontier = std::move(next_frame);
    }
    std::map<TokenKey, double> out;
    for (const auto& [toks, item] : frontier) out[toks] = item.score;
    return out;
  }
};

FirstPassResult FirstPassModel::decode(const Tensor& enc, int beam) const {
  if (beam < 1) throw std::invalid_argument("rnnt_decode: beam must be >= 1");
  NoGradGuard ng;
  FirstPassStepper stepper{*this};
  // Nested widths: the union over widths 1..beam keeps the top score
  // monotone in beam. Once a width runs unpruned, wider runs are identical.
  std::map<TokenKey, double> best;
  for (int w = 1; w <= beam; ++w) {
    bool pruned = false;
    auto res = stepper.search(enc, w, &pruned);
    for (const auto& [toks, sc] : res) {
      auto it = best.find(toks);
      if (it == best.end() || sc > it->second) best[toks] = sc;
    }
    if (!pruned) break;
  }
  std::vector<Hypothesis> hyps;
  hyps.reserve(best.size());
  for (const auto& [toks, sc] : best) hyps.push_back(Hypothesis{toks, sc});
  std::sort(hyps.begin(), hyps.end(), [](const Hypothesis& x, const Hypothesis& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.tokens < y.tokens;
  });
  if (static_cast<int>(hyps.size()) > beam) hyps.resize(static_cast<size_t>(beam));
  return FirstPassResult{std::move(hyps)};
}

}  // namespace djtd
