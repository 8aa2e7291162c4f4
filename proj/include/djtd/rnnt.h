// djtd/rnnt.h
//
// Streaming first pass: shared LSTM encoder with frame-pair time
// reduction, prediction network, joint network, exact transducer lattice
// loss (forward-backward in log space), and greedy/beam decoding.

#ifndef DJTD_RNNT_H_
#define DJTD_RNNT_H_

#include <vector>

#include "djtd/layers.h"
#include "djtd/param.h"
#include "djtd/tensor.h"

namespace djtd {

struct FirstPassConfig {
  int feature_dim = 8;
  int vocab_size = 24;
  int blank_id = 0;
  int enc_hidden = 32;
  int enc_proj = 16;  // encoder output dim
  int time_factor = 2;
  int pred_embed = 8;
  int pred_hidden = 32;
  int pred_proj = 16;
  int joint_dim = 16;
  int max_sym_per_frame = 3;  // decoding cap, prevents degenerate loops
  int max_label_len = 64;
};

struct Hypothesis {
  std::vector<int> tokens;  // no blanks
  double score = 0.0;       // log-prob of the best alignment found
};

struct FirstPassResult {
  std::vector<Hypothesis> hyps;  // scores non-increasing
};

// Forward/backward lattice over a (T', U+1) grid. Row t*(U+1)+u of
// log_probs is the output distribution at lattice point (t, u).
struct RnntLattice {
  int t_len = 0;  // T'
  int u_len = 0;  // U+1
  std::vector<double> alpha, beta;
  double total_from_alpha = 0.0;  // alpha[T'-1,U] + final blank
  double total_from_beta = 0.0;   // beta[0,0]; equals the alpha total within 1e-8
  Tensor log_probs;               // [(T'*(U+1)), V]
  Tensor loss;                    // scalar -log P(labels | enc), on the tape
};

class FirstPassModel {
 public:
  FirstPassModel(const FirstPassConfig& cfg, uint64_t seed);

  const FirstPassConfig& config() const { return cfg_; }

  // [T, feature_dim] -> [T', enc_proj], T' = ceil(T / time_factor).
  Tensor encode(const Tensor& features) const;

  // Prediction-network outputs for positions u = 0..U; position 0
  // conditions on the blank start symbol. -> [U+1, pred_proj]
  Tensor pred_outputs(const std::vector<int>& labels) const;

  // Joint network logits for one lattice point. -> [1, vocab]
  Tensor joint_logits(const Tensor& enc_row, const Tensor& pred_row) const;

  // Per-point normalized log distributions for the whole grid.
  Tensor lattice_log_probs(const Tensor& enc, const std::vector<int>& labels) const;

  // Exact marginal NLL over all monotone alignments, with the analytic
  // alpha-beta gradient attached to log_probs. Labels must not contain
  // blank; their length is capped by max_label_len.
  RnntLattice lattice(const Tensor& enc, const std::vector<int>& labels) const;
  Tensor loss(const Tensor& enc, const std::vector<int>& labels) const;

  // Frame-synchronous beam search, label scores merged by best alignment.
  // Runs nested widths 1..beam and unions the results, so the top score is
  // monotone in beam width and beam=1 reproduces the greedy rollout.
  FirstPassResult decode(const Tensor& enc, int beam) const;

  std::vector<ParamGroup>& param_groups() { return groups_; }
  const std::vector<ParamGroup>& param_groups() const { return groups_; }

 private:
  friend struct FirstPassStepper;
  FirstPassConfig cfg_;
  LstmLayer enc_l1_, enc_l2_;
  TimeReduction tr_;
  Embedding pred_embed_;
  LstmLayer pred_lstm_;
  Tensor joint_w_enc_, joint_w_pred_, joint_bias_;  // fused into tanh
  Linear joint_out_;
  std::vector<ParamGroup> groups_;
};

// Transducer NLL as a single tape node over log_probs: forward runs the
// alpha recursion, backward distributes the exact alpha-beta gradient.
RnntLattice rnnt_lattice_loss(const Tensor& log_probs, const std::vector<int>& labels, int t_len,
                              int blank_id);

}  // namespace djtd

#endif  // DJTD_RNNT_H_
