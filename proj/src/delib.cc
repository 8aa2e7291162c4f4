// djtd/delib.cc

#include "djtd/delib.h"

#include <algorithm>
#include <stdexcept>

#include "djtd/rng.h"

namespace djtd {

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kLas: return "las";
    case ModelVariant::kLasJatd: return "las-jatd";
    case ModelVariant::kDeliberation: return "delib";
    case ModelVariant::kDelibJatdPartial: return "delib-jatd-partial";
    case ModelVariant::kDelibJatdFull: return "delib-jatd-full";
  }
  throw std::invalid_argument("unknown variant");
}

ModelVariant variant_from_name(const std::string& name) {
  for (ModelVariant v : {ModelVariant::kLas, ModelVariant::kLasJatd, ModelVariant::kDeliberation,
                         ModelVariant::kDelibJatdPartial, ModelVariant::kDelibJatdFull})
    if (name == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

SecondPassModel::SecondPassModel(const FirstPassConfig& fp_cfg, const SecondPassConfig& cfg,
                                 ModelVariant variant, uint64_t seed)
    : fp_cfg_(fp_cfg), cfg_(cfg), variant_(variant), first_pass_(fp_cfg, seed) {
  Rng rng(hash_seed(seed, "second-pass-init"));
  const int ctx_dim = cfg.attn_heads * cfg.attn_head_dim;
  const int vocab = fp_cfg.vocab_size;

  enc_attn_ = MultiHeadAttention(rng, cfg.dec_proj, fp_cfg.enc_proj, cfg.attn_heads,
                                 cfg.attn_head_dim);
  if (variant_has_hyp_attention(variant)) {
    hyp_embed_ = Embedding(rng, vocab, cfg.hyp_embed);
    hyp_fwd_ = LstmLayer(rng, cfg.hyp_embed, cfg.hyp_hidden, cfg.hyp_proj);
    hyp_bwd_ = LstmLayer(rng, cfg.hyp_embed, cfg.hyp_hidden, cfg.hyp_proj);
    hyp_attn_ = MultiHeadAttention(rng, cfg.dec_proj, 2 * cfg.hyp_proj, cfg.attn_heads,
                                   cfg.attn_head_dim);
  }
  // Fixed contexts start at zero: early in training they carry no
  // information, like an attention context over nothing. They consume no
  // rng draws, so variants that share the remaining architecture get
  // identical initial weights from the same seed.
  if (variant_is_jatd(variant)) {
    c_e_l_ = Tensor({1, ctx_dim});
    c_e_l_.set_requires_grad(true);
  }
  if (variant == ModelVariant::kDelibJatdFull) {
    c_b_l_ = Tensor({1, ctx_dim});
    c_b_l_.set_requires_grad(true);
  }
  dec_embed_ = Embedding(rng, vocab, cfg.dec_embed);
  const int dec_in = cfg.dec_embed + ctx_dim + (variant_has_hyp_attention(variant) ? ctx_dim : 0);
  dec_lstm_ = LstmLayer(rng, dec_in, cfg.dec_hidden, cfg.dec_proj);
  dec_out_ = Linear(rng, cfg.dec_proj, vocab);

  groups_ = first_pass_.param_groups();
  ParamGroup enc_attn_group{"encoder_attention", Gate::kEncoderAttention, {}};
  enc_attn_.collect(enc_attn_group.params);
  groups_.push_back(std::move(enc_attn_group));
  if (variant_has_hyp_attention(variant)) {
    ParamGroup hyp_enc_group{"hypothesis_encoder", Gate::kHypothesisEncoder, {}};
    hyp_embed_.collect(hyp_enc_group.params);
    hyp_fwd_.collect(hyp_enc_group.params);
    hyp_bwd_.collect(hyp_enc_group.params);
    groups_.push_back(std::move(hyp_enc_group));
    ParamGroup hyp_attn_group{"hypothesis_attention", Gate::kHypothesisAttention, {}};
    hyp_attn_.collect(hyp_attn_group.params);
    groups_.push_back(std::move(hyp_attn_group));
  }
  if (c_e_l_.defined())
    groups_.push_back(ParamGroup{"fixed_context_e", Gate::kFixedContextE, {c_e_l_}});
  if (c_b_l_.defined())
    groups_.push_back(ParamGroup{"fixed_context_b", Gate::kFixedContextB, {c_b_l_}});
  ParamGroup dec_group{"second_pass_decoder", Gate::kSecondPassDecoder, {}};
  dec_embed_.collect(dec_group.params);
  dec_lstm_.collect(dec_group.params);
  dec_out_.collect(dec_group.params);
  groups_.push_back(std::move(dec_group));
}

ParamGroup* SecondPassModel::find_group(const std::string& name) {
  for (auto& g : groups_)
    if (g.name == name) return &g;
  return nullptr;
}

HypothesisEncoding SecondPassModel::encode_hypotheses(const FirstPassResult& first,
                                                      int top_k) const {
  if (top_k < 1) throw std::invalid_argument("encode_hypotheses: top_k must be >= 1");
  if (first.hyps.empty()) throw std::invalid_argument("encode_hypotheses: empty hypothesis list");
  if (!variant_has_hyp_attention(variant_))
    throw std::logic_error("encode_hypotheses: model variant has no hypothesis encoder");
  const int l = cfg_.hyp_pad_len;
  const int k = std::min<int>(top_k, static_cast<int>(first.hyps.size()));
  HypothesisEncoding out;
  std::vector<Tensor> blocks;
  for (int i = 0; i < k; ++i) {
    std::vector<int> padded = first.hyps[static_cast<size_t>(i)].tokens;
    if (static_cast<int>(padded.size()) > l) {
      padded.resize(static_cast<size_t>(l));
      out.truncated = true;
    }
    while (static_cast<int>(padded.size()) < l) padded.push_back(cfg_.eos_id);
    blocks.push_back(bilstm_forward(hyp_fwd_, hyp_bwd_, hyp_embed_.lookup(padded)));
    out.padded_tokens.push_back(std::move(padded));
  }
  out.encoded = k == 1 ? blocks[0] : concat_rows(blocks);
  return out;
}

DecoderState SecondPassModel::initial_state() const {
  return DecoderState{lstm_zero_state(dec_lstm_), Tensor({1, cfg_.dec_proj})};
}

Tensor SecondPassModel::decoder_input(const Tensor& context_e, const Tensor* context_b,
                                      int prev_token) const {
  Tensor emb = dec_embed_.lookup(prev_token);
  if (context_b != nullptr) return concat_cols({emb, context_e, *context_b});
  return concat_cols({emb, context_e});
}

Tensor SecondPassModel::decode_step(const Tensor& input, DecoderState* state) const {
  auto [out, next] = lstm_step(dec_lstm_, input, state->lstm);
  state->lstm = next;
  state->query = out;
  Tensor logp = log_softmax(dec_out_.forward(out));  // [1, V]
  return reshape(logp, {vocab_size()});
}

void SecondPassModel::check_compat(ModelVariant as_variant, bool lm_branch) const {
  if (lm_branch && !variant_is_jatd(as_variant))
    throw std::invalid_argument(std::string("step_lm: '") + variant_name(as_variant) +
                                "' is not a JATD variant");
  if (variant_has_hyp_attention(as_variant) != variant_has_hyp_attention(variant_))
    throw std::invalid_argument(std::string("variant '") + variant_name(as_variant) +
                                "' incompatible with model built as '" + variant_name(variant_) +
                                "' (decoder input width differs)");
  if (variant_is_jatd(as_variant) && !c_e_l_.defined())
    throw std::invalid_argument("model has no fixed encoder context");
  if (as_variant == ModelVariant::kDelibJatdFull && !c_b_l_.defined())
    throw std::invalid_argument("model has no fixed hypothesis context");
}

Tensor SecondPassModel::step_acoustic(const Tensor& e, const HypothesisEncoding* hyp_enc,
                                      std::span<const int> prev_tokens, DecoderState* state,
                                      ModelVariant as_variant) const {
  check_compat(as_variant, false);
  const int prev = prev_tokens.empty() ? cfg_.eos_id : prev_tokens.back();
  Tensor ce = mha_attend(enc_attn_, state->query, e, e);
  if (variant_has_hyp_attention(as_variant)) {
    if (hyp_enc == nullptr || !hyp_enc->encoded.defined())
      throw std::invalid_argument("step_acoustic: deliberation variant needs encoded hypotheses");
    Tensor cb = mha_attend(hyp_attn_, state->query, hyp_enc->encoded, hyp_enc->encoded);
    return decode_step(decoder_input(ce, &cb, prev), state);
  }
  return decode_step(decoder_input(ce, nullptr, prev), state);
}

Tensor SecondPassModel::step_lm(const Tensor& e, const HypothesisEncoding* hyp_enc,
                                std::span<const int> prev_tokens, DecoderState* state,
                                ModelVariant as_variant) const {
  check_compat(as_variant, true);
  const int prev = prev_tokens.empty() ? cfg_.eos_id : prev_tokens.back();
  (void)e;  // the LM branch never reads the encoder output
  switch (as_variant) {
    case ModelVariant::kLasJatd:
      return decode_step(decoder_input(c_e_l_, nullptr, prev), state);
    case ModelVariant::kDelibJatdFull:
      return decode_step(decoder_input(c_e_l_, &c_b_l_, prev), state);
    case ModelVariant::kDelibJatdPartial: {
      if (hyp_enc == nullptr || !hyp_enc->encoded.defined())
        throw std::invalid_argument("step_lm: partial variant needs encoded hypotheses");
      Tensor cb = mha_attend(hyp_attn_, state->query, hyp_enc->encoded, hyp_enc->encoded);
      return decode_step(decoder_input(c_e_l_, &cb, prev), state);
    }
    default:
      throw std::invalid_argument("step_lm: not a JATD variant");
  }
}

Tensor interpolate(const Tensor& acoustic_logp, const Tensor& lm_logp, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("interpolate: lambda " + std::to_string(lambda) +
                                " outside [0,1]");
  if (acoustic_logp.shape() != lm_logp.shape())
    throw ShapeError("interpolate", acoustic_logp.shape(), lm_logp.shape());
  if (lambda == 1.0) return acoustic_logp;
  if (lambda == 0.0) return lm_logp;
  return add(scale(acoustic_logp, lambda), scale(lm_logp, 1.0 - lambda));
}

LossBreakdown second_pass_loss(SecondPassModel& model, std::span<const Example> batch,
                               ModelVariant variant, double lambda_train,
                               const std::vector<FirstPassResult>* fixed_hyps) {
  if (batch.empty()) throw std::invalid_argument("second_pass_loss: empty batch");
  if (fixed_hyps != nullptr && fixed_hyps->size() != batch.size())
    throw std::invalid_argument("second_pass_loss: fixed hypotheses do not parallel the batch");
  const bool jatd = variant_is_jatd(variant);
  const bool use_hyps = variant_has_hyp_attention(variant);
  const int eos = model.config().eos_id;

  Tensor total = Tensor::scalar(0.0);
  double acoustic_sum = 0.0, lm_sum = 0.0;
  int token_count = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = batch[i];
    if (!ex.features.defined())
      throw std::invalid_argument("second_pass_loss: example " + std::to_string(i) +
                                  " has no features");
    Tensor e = model.first_pass().encode(ex.features);
    HypothesisEncoding hyp_enc;
    if (use_hyps) {
      FirstPassResult first =
          fixed_hyps != nullptr ? (*fixed_hyps)[i]
                                : model.first_pass().decode(e, model.config().train_first_beam);
      hyp_enc = model.encode_hypotheses(first, model.config().top_k);
    }

    std::vector<int> targets = ex.transcript;
    targets.push_back(eos);
    std::vector<int> prefix;  // teacher forcing on the reference
    DecoderState state_a = model.initial_state();
    DecoderState state_l = model.initial_state();
    Tensor ex_sum = Tensor::scalar(0.0);
    for (int target : targets) {
      Tensor a_logp = model.step_acoustic(e, use_hyps ? &hyp_enc : nullptr, prefix, &state_a,
                                          variant);
      Tensor step_logp;
      if (jatd) {
        Tensor l_logp = model.step_lm(e, use_hyps ? &hyp_enc : nullptr, prefix, &state_l, variant);
        step_logp = interpolate(a_logp, l_logp, lambda_train);
        lm_sum += -l_logp[target];
      } else {
        step_logp = a_logp;
      }
      acoustic_sum += -a_logp[target];
      ex_sum = add(ex_sum, at(step_logp, target));
      prefix.push_back(target);
    }
    token_count += static_cast<int>(targets.size());
    // per-token mean within the example, then mean over the batch
    total = add(total, scale(ex_sum, -1.0 / static_cast<double>(targets.size())));
  }

  LossBreakdown out;
  out.loss = scale(total, 1.0 / static_cast<double>(batch.size()));
  out.acoustic_term = acoustic_sum / token_count;
  out.lm_term = jatd ? lm_sum / token_count : 0.0;
  out.token_count = token_count;
  return out;
}

TrainStepMetrics train_step(SecondPassModel& model, std::span<const Example> batch,
                            ModelVariant variant, double lambda_train,
                            const GradMask& paired_mask, const GradMask& unpaired_mask,
                            Adam& adam, double clip_norm,
                            const std::vector<FirstPassResult>* fixed_hyps) {
  paired_mask.validate();
  unpaired_mask.validate();
  if (fixed_hyps != nullptr && fixed_hyps->size() != batch.size())
    throw std::invalid_argument("train_step: fixed hypotheses do not parallel the batch");
  std::vector<Example> paired, unpaired;
  std::vector<FirstPassResult> paired_hyps, unpaired_hyps;
  for (size_t i = 0; i < batch.size(); ++i) {
    const bool is_paired = batch[i].kind == ExampleKind::kPaired;
    (is_paired ? paired : unpaired).push_back(batch[i]);
    if (fixed_hyps != nullptr)
      (is_paired ? paired_hyps : unpaired_hyps).push_back((*fixed_hyps)[i]);
  }

  TrainStepMetrics metrics;
  metrics.n_paired = static_cast<int>(paired.size());
  metrics.n_unpaired = static_cast<int>(unpaired.size());
  auto& groups = model.param_groups();
  if (!paired.empty()) {
    zero_grads(groups);
    LossBreakdown lb = second_pass_loss(model, paired, variant, lambda_train,
                                        fixed_hyps != nullptr ? &paired_hyps : nullptr);
    backward(lb.loss);
    metrics.loss_paired = lb.loss.item();
    metrics.acoustic_paired = lb.acoustic_term;
    metrics.lm_paired = lb.lm_term;
    metrics.grad_norm_paired = clip_grad_norm(groups, clip_norm);
    adam.apply_update(groups, paired_mask);
  }
  if (!unpaired.empty()) {
    zero_grads(groups);
    LossBreakdown lb = second_pass_loss(model, unpaired, variant, lambda_train,
                                        fixed_hyps != nullptr ? &unpaired_hyps : nullptr);
    backward(lb.loss);
    metrics.loss_unpaired = lb.loss.item();
    metrics.acoustic_unpaired = lb.acoustic_term;
    metrics.lm_unpaired = lb.lm_term;
    metrics.grad_norm_unpaired = clip_grad_norm(groups, clip_norm);
    adam.apply_update(groups, unpaired_mask);
  }
  return metrics;
}

}  // namespace djtd
