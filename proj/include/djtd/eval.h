// djtd/eval.h
//
// Two-pass inference with interpolated beam search, token error rate
// scoring with an S/I/D breakdown, inference-lambda grid selection, and
// the experiment matrix that trains and scores the baseline/variant rows.

#ifndef DJTD_EVAL_H_
#define DJTD_EVAL_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "djtd/delib.h"
#include "djtd/trainer.h"

namespace djtd {

struct DecodeConfig {
  int first_beam = 2;
  int second_beam = 4;
  double lambda_inference = 0.025;
  std::vector<double> lambda_grid = {0.01, 0.025, 0.05};
  int max_decode_len = 12;
  double dev_fraction = 0.25;  // held-out slice of vs_like used to pick lambda
  int threads = 1;
};

// Second beam search over per-step interpolated log-probs, attending the
// complete first-pass hypotheses. Non-JATD variants score with the
// acoustic branch alone. Nested widths keep the top score monotone in
// second_beam. EOS terminates a hypothesis; sequences are force-closed at
// max_decode_len.
Hypothesis two_pass_decode(const Example& example, SecondPassModel& model,
                           const DecodeConfig& cfg,
                           std::optional<ModelVariant> as_variant = std::nullopt);

struct EditCounts {
  int64_t sub = 0, ins = 0, del = 0;
  int64_t ref_len = 0;
  int64_t errors() const { return sub + ins + del; }
};

// Minimal-cost alignment; at equal cost substitution is preferred over
// insertion over deletion, which pins down the S/I/D split.
EditCounts levenshtein(const std::vector<int>& ref, const std::vector<int>& hyp);

// Corpus-level WER = (S+I+D) / N_ref over per-utterance alignments.
// Throws if the lists disagree in length or the references are empty.
struct WerResult {
  double wer = 0.0;
  EditCounts counts;
};
WerResult corpus_wer(const std::vector<std::vector<int>>& refs,
                     const std::vector<std::vector<int>>& hyps);

// Decodes a set with each grid lambda and returns the winner (ties toward
// the smaller value) plus the per-lambda WERs.
struct LambdaChoice {
  double lambda = 0.0;
  std::vector<std::pair<double, double>> grid_wers;  // (lambda, wer)
};
LambdaChoice select_lambda(SecondPassModel& model, std::span<const Example> dev_set,
                           const std::vector<double>& grid, const DecodeConfig& cfg);

struct TestSetScore {
  double wer = 0.0;
  EditCounts counts;
};

struct MatrixRow {
  std::string name;           // e.g. "delib-jatd-full"
  std::string training_data;  // "paired" or "mixed"
  std::vector<double> lambdas;                          // chosen per seed (JATD rows)
  std::map<std::string, std::vector<double>> seed_wers; // set name -> per-seed WER
  std::map<std::string, TestSetScore> pooled;           // counts pooled across seeds
  double mean_wer(const std::string& set_name) const;
};

struct WinLossSample {
  std::string set_name;
  std::vector<int> ref, hyp_a, hyp_b;
  bool win_for_a = false;  // A correct, B wrong (else the reverse)
};

struct EvalReport {
  std::vector<MatrixRow> rows;
  std::string sample_row_a, sample_row_b;
  std::vector<WinLossSample> samples;
};

// Known row names: rnnt-paired, rnnt-mixed, las-paired, las-mixed,
// las-jatd, delib-paired, delib-mixed, delib-jatd-partial, delib-jatd-full.
std::vector<std::string> known_matrix_rows();

// Trains and evaluates each requested row on every seed; first-pass
// pretraining on paired data is shared per seed. Win/loss samples compare
// delib-jatd-full against delib-paired when both are present, else the
// first two rows.
EvalReport run_experiment_matrix(const Corpus& corpus, const std::vector<std::string>& rows,
                                 const std::vector<uint64_t>& seeds, const TrainSettings& train,
                                 const DecodeConfig& decode, MetricsSink sink);

std::string report_table(const EvalReport& report);

}  // namespace djtd

#endif  // DJTD_EVAL_H_
