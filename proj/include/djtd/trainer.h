// djtd/trainer.h
//
// Training loops. Stage 1 trains the first-pass transducer; stage 2
// trains the selected second-pass variant with per-kind gradient gating.
// Batches are a pure function of (seed, step), so a run resumed from a
// checkpoint + optimizer state reproduces the uninterrupted run exactly.

#ifndef DJTD_TRAINER_H_
#define DJTD_TRAINER_H_

#include <functional>
#include <span>
#include <string>

#include "djtd/checkpoint.h"
#include "djtd/corpus.h"
#include "djtd/delib.h"
#include "djtd/rnnt.h"

namespace djtd {

struct TrainSettings {
  std::string variant = "delib-jatd-full";
  std::string train_data = "mixed";  // "paired" or "mixed"
  double lambda_train = 0.1;
  int pretrain_steps = 3000;
  int second_pass_steps = 2000;
  int batch_size = 8;
  AdamConfig adam;
  double clip_norm = 5.0;
  bool freeze_first_pass = true;
  int checkpoint_every = 500;  // 0 disables periodic checkpoints
  uint64_t seed = 1234;
};

// One JSON line per call (training metrics stream).
using MetricsSink = std::function<void(const std::string&)>;
MetricsSink null_sink();

// Deterministic batch: example indices drawn from hash(seed, stage, step).
std::vector<int> batch_indices(uint64_t seed, std::string_view stage, int step, int batch_size,
                               int pool_size);

// Transducer training on `pool` for steps [start_step, end_step). The loss
// per example is the lattice NLL normalized by target length + 1.
void pretrain_first_pass(FirstPassModel& model, std::span<const Example> pool,
                         const TrainSettings& cfg, Adam& adam, int start_step, int end_step,
                         const MetricsSink& sink);

// Second-pass training with gating masks derived from the example kind
// (plus a frozen first pass unless configured otherwise). The pool is
// paired-only or paired+unpaired per cfg.train_data.
void train_second_pass(SecondPassModel& model, const Corpus& corpus, const TrainSettings& cfg,
                       Adam& adam, int start_step, int end_step, const MetricsSink& sink);

GradMask training_mask(ExampleKind kind, bool freeze_first_pass);

// Copies first-pass weights (encoder_stack + first_pass groups) from a
// donor model into a second-pass model.
void adopt_first_pass(SecondPassModel& model, const FirstPassModel& donor);

}  // namespace djtd

#endif  // DJTD_TRAINER_H_
