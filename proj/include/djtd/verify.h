// djtd/verify.h
//
// Self-check suites and the independent oracles they compare against:
// finite differences for gradients, exhaustive alignment enumeration for
// the transducer loss, exhaustive search for both beam decoders, and a
// plain quadratic DP for edit distance. The oracles deliberately avoid
// the code paths they validate.

#ifndef DJTD_VERIFY_H_
#define DJTD_VERIFY_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "djtd/delib.h"
#include "djtd/eval.h"
#include "djtd/param.h"
#include "djtd/rnnt.h"

namespace djtd {

struct GradCheckStats {
  int64_t checked = 0;
  int64_t failed = 0;
  double max_rel_err = 0.0;
  bool ok(double min_pass_fraction = 1.0) const {
    return checked > 0 &&
           static_cast<double>(checked - failed) >= min_pass_fraction * static_cast<double>(checked);
  }
};

// Central finite differences over every element of every group parameter,
// compared against one reverse-mode sweep of loss_fn(). rel_err uses an
// absolute floor so near-zero pairs compare absolutely.
GradCheckStats finite_diff_check(std::vector<ParamGroup>& groups,
                                 const std::function<Tensor()>& loss_fn, double h = 1e-5,
                                 double tol = 1e-4, double floor = 1e-4);

// -log sum over explicitly enumerated monotone alignments of the lattice
// grid. log_probs is row-major [(t_len*u_len) x v].
double rnnt_nll_by_enumeration(std::span<const double> log_probs, int t_len,
                               std::span<const int> labels, int v, int blank_id);

// Best label sequence over every sequence up to max_len, scored by a
// Viterbi sweep over alignments under the per-frame emission cap. Ties
// break like the decoder (score desc, then lexicographic).
Hypothesis exhaustive_first_pass_decode(const FirstPassModel& model, const Tensor& enc,
                                        int max_len);

// Brute-force argmax over all token sequences up to cfg.max_decode_len
// under the interpolated score (each sequence closed with EOS).
Hypothesis exhaustive_two_pass_decode(const Example& example, SecondPassModel& model,
                                      const DecodeConfig& cfg);

// Edit distance only, no traceback: the independent check for S+I+D.
int64_t edit_distance_oracle(const std::vector<int>& ref, const std::vector<int>& hyp);

// Named property suites behind `verify`; print one line per check through
// `log` and return false on any failure. Deterministic in `seed`.
using VerifyLog = std::function<void(const std::string&)>;
bool verify_gradcheck(uint64_t seed, const VerifyLog& log);
bool verify_rnnt_oracle(uint64_t seed, const VerifyLog& log);
bool verify_gating(uint64_t seed, const VerifyLog& log);
bool verify_interp(uint64_t seed, const VerifyLog& log);
bool verify_beam_oracle(uint64_t seed, const VerifyLog& log);

std::vector<std::string> verify_suite_names();
bool run_verify_suite(const std::string& name, uint64_t seed, const VerifyLog& log);

// Shared fixture: a small second-pass model plus a one-example batch,
// used by the gating/gradient suites and tests.
struct TinySetup {
  FirstPassConfig fp_cfg;
  SecondPassConfig sp_cfg;
  CorpusConfig corpus_cfg;
  std::vector<Example> batch;  // one paired + one unpaired example
};
TinySetup make_tiny_setup(uint64_t seed);

}  // namespace djtd

#endif  // DJTD_VERIFY_H_
