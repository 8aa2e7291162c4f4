// djtd/delib.h
//
// Second pass. The decoder attends to the shared encoder output and
// (for deliberation variants) to encoded first-pass hypotheses. JATD
// variants add learnable fixed context vectors that stand in for one or
// both attention contexts, yielding a second set of log-probs with no (or
// only indirect) acoustic dependence; the two branches share the decoder
// and are interpolated in the log domain by weight lambda.

#ifndef DJTD_DELIB_H_
#define DJTD_DELIB_H_

#include <optional>
#include <span>
#include <vector>

#include "djtd/corpus.h"
#include "djtd/layers.h"
#include "djtd/rnnt.h"

namespace djtd {

enum class ModelVariant {
  kLas = 0,
  kLasJatd = 1,
  kDeliberation = 2,
  kDelibJatdPartial = 3,
  kDelibJatdFull = 4,
};

const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

// JATD variants carry an LM branch driven by fixed context vectors.
inline bool variant_is_jatd(ModelVariant v) {
  return v == ModelVariant::kLasJatd || v == ModelVariant::kDelibJatdPartial ||
         v == ModelVariant::kDelibJatdFull;
}

// LAS variants never construct hypothesis attention.
inline bool variant_has_hyp_attention(ModelVariant v) {
  return v == ModelVariant::kDeliberation || v == ModelVariant::kDelibJatdPartial ||
         v == ModelVariant::kDelibJatdFull;
}

struct SecondPassConfig {
  int eos_id = 1;
  int hyp_embed = 8;
  int hyp_hidden = 16;
  int hyp_proj = 8;  // bi-LSTM output dim is 2*hyp_proj
  int attn_heads = 2;
  int attn_head_dim = 8;  // context dim = heads * head_dim
  int dec_embed = 8;
  int dec_hidden = 32;
  int dec_proj = 16;
  int hyp_pad_len = 12;  // L: hypotheses are EOS-padded to this length
  int top_k = 1;         // first-pass hypotheses attended
  int train_first_beam = 2;
};

struct HypothesisEncoding {
  std::vector<std::vector<int>> padded_tokens;  // k sequences, each exactly L long
  Tensor encoded;                               // [k*L, 2*hyp_proj]
  bool truncated = false;
};

// Decoder-side recurrence for one rollout; the previous output row is the
// attention query.
struct DecoderState {
  LstmState lstm;
  Tensor query;  // [1, dec_proj]
};

struct LossBreakdown {
  Tensor loss;                // scalar, on the tape
  double acoustic_term = 0.0; // mean acoustic cross-entropy
  double lm_term = 0.0;       // mean LM-branch cross-entropy (JATD only)
  int token_count = 0;
};

struct TrainStepMetrics {
  double loss_paired = 0.0, loss_unpaired = 0.0;
  double acoustic_paired = 0.0, lm_paired = 0.0;
  double acoustic_unpaired = 0.0, lm_unpaired = 0.0;
  int n_paired = 0, n_unpaired = 0;
  double grad_norm_paired = 0.0, grad_norm_unpaired = 0.0;
};

class SecondPassModel {
 public:
  SecondPassModel(const FirstPassConfig& fp_cfg, const SecondPassConfig& cfg,
                  ModelVariant variant, uint64_t seed);

  const SecondPassConfig& config() const { return cfg_; }
  ModelVariant variant() const { return variant_; }
  FirstPassModel& first_pass() { return first_pass_; }
  const FirstPassModel& first_pass() const { return first_pass_; }
  int vocab_size() const { return first_pass_.config().vocab_size; }

  // Pads the top_k hypotheses to L with EOS (truncating and flagging any
  // longer ones), embeds and bi-LSTM-encodes each, and stacks the blocks.
  HypothesisEncoding encode_hypotheses(const FirstPassResult& first, int top_k) const;

  DecoderState initial_state() const;

  // log p(y_u | x, c_e^a[, c_b^a], y_{u-1:1}) as a normalized [V] vector.
  // The last element of prev_tokens feeds the decoder (EOS starts a
  // rollout); earlier context lives in `state`, which is advanced.
  // `as_variant` may be any variant whose components this model has.
  Tensor step_acoustic(const Tensor& e, const HypothesisEncoding* hyp_enc,
                       std::span<const int> prev_tokens, DecoderState* state,
                       ModelVariant as_variant) const;

  // The JATD LM branch. Full: log p(y_u | c_e^l, c_b^l, y_{u-1:1}) with no
  // acoustic dependence at all. Partial: log p(y_u | x, c_e^l, c_b^a,
  // y_{u-1:1}), still attending the hypotheses. LasJatd: log p(y_u | c_e^l,
  // y_{u-1:1}). Shares every decoder parameter with step_acoustic.
  Tensor step_lm(const Tensor& e, const HypothesisEncoding* hyp_enc,
                 std::span<const int> prev_tokens, DecoderState* state,
                 ModelVariant as_variant) const;

  std::vector<ParamGroup>& param_groups() { return groups_; }
  const std::vector<ParamGroup>& param_groups() const { return groups_; }
  ParamGroup* find_group(const std::string& name);

 private:
  Tensor decoder_input(const Tensor& context_e, const Tensor* context_b, int prev_token) const;
  Tensor decode_step(const Tensor& input, DecoderState* state) const;
  void check_compat(ModelVariant as_variant, bool lm_branch) const;

  FirstPassConfig fp_cfg_;
  SecondPassConfig cfg_;
  ModelVariant variant_;
  FirstPassModel first_pass_;
  MultiHeadAttention enc_attn_;
  Embedding hyp_embed_;   // deliberation variants only
  LstmLayer hyp_fwd_, hyp_bwd_;
  MultiHeadAttention hyp_attn_;
  Tensor c_e_l_, c_b_l_;  // learnable fixed contexts (JATD / full-JATD)
  Embedding dec_embed_;
  LstmLayer dec_lstm_;
  Linear dec_out_;
  std::vector<ParamGroup> groups_;
};

// Eq.-style log-domain interpolation: lambda*acoustic + (1-lambda)*lm,
// elementwise. The endpoints return the corresponding input unchanged.
Tensor interpolate(const Tensor& acoustic_logp, const Tensor& lm_logp, double lambda);

// Teacher-forced cross-entropy of the interpolated per-step log-probs
// against transcript+EOS, averaged per token then per example. Paired and
// unpaired examples share the same form; the kind only matters for the
// audio source upstream and the gradient mask downstream. When
// `fixed_hyps` is given it must parallel `batch` and replaces the on-the-fly
// first-pass decode (it is treated as a constant input either way).
LossBreakdown second_pass_loss(SecondPassModel& model, std::span<const Example> batch,
                               ModelVariant variant, double lambda_train,
                               const std::vector<FirstPassResult>* fixed_hyps = nullptr);

// Splits the batch by example kind, then backprops and applies each
// sub-batch's gradient under its mask. The second-pass decoder is updated
// by both kinds; frozen groups stay bitwise untouched. `fixed_hyps`, when
// given, parallels `batch` (cached first-pass decodes for a frozen first
// pass).
TrainStepMetrics train_step(SecondPassModel& model, std::span<const Example> batch,
                            ModelVariant variant, double lambda_train,
                            const GradMask& paired_mask, const GradMask& unpaired_mask,
                            Adam& adam, double clip_norm,
                            const std::vector<FirstPassResult>* fixed_hyps = nullptr);

}  // namespace djtd

#endif  // DJTD_DELIB_H_
