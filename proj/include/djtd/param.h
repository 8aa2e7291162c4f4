// djtd/param.h
//
// Trainable parameter bookkeeping: named groups tagged with a gating
// class, update-time gradient masks per example kind, and the Adam
// update rule with global-norm clipping.

#ifndef DJTD_PARAM_H_
#define DJTD_PARAM_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "djtd/rng.h"
#include "djtd/tensor.h"

namespace djtd {

// Gating class of a parameter group. Which groups an example may update
// depends on whether its audio is real (Paired) or synthesized (Unpaired).
enum class Gate : uint8_t {
  kFirstPass = 0,         // prediction + joint networks
  kEncoderStack = 1,      // shared acoustic encoder LSTMs
  kEncoderAttention = 2,  // second-pass attention over encoder output
  kHypothesisEncoder = 3, // first-pass hypothesis embedding + bi-LSTM
  kHypothesisAttention = 4,
  kFixedContextE = 5,     // learnable fixed encoder-context vector
  kFixedContextB = 6,     // learnable fixed hypothesis-context vector
  kSecondPassDecoder = 7, // second-pass LSTM decoder, embeddings, output layer
};

const char* gate_name(Gate g);

struct ParamGroup {
  std::string name;
  Gate gate = Gate::kSecondPassDecoder;
  std::vector<Tensor> params;
};

enum class ExampleKind : uint8_t { kPaired = 0, kUnpaired = 1 };

// Update-time mask: gradients are computed everywhere, then discarded for
// frozen groups, so frozen parameters stay bitwise unchanged.
struct GradMask {
  ExampleKind example_kind = ExampleKind::kPaired;
  std::set<Gate> frozen_gates;

  // Masks implementing the joint training rule: real audio never moves the
  // fixed context vectors, synthetic audio never moves the encoder stack or
  // the encoder attention. `extra_frozen` adds e.g. a frozen first pass.
  static GradMask for_kind(ExampleKind kind, const std::set<Gate>& extra_frozen = {});

  bool frozen(Gate g) const { return frozen_gates.count(g) != 0; }
  void validate() const;  // enforces the per-kind minimum freeze sets
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Optimizer state: first/second moments per tensor, keyed positionally by
// (group index, tensor index). step counts bias correction.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_; }

  // Applies one update to every non-frozen group. Missing gradients count
  // as zero. Throws if state shape disagrees with the groups.
  void apply_update(std::vector<ParamGroup>& groups, const GradMask& mask);

  // Serialization hooks for training resume.
  struct Slot { std::vector<double> m, v; };
  std::vector<std::vector<Slot>>& slots() { return slots_; }
  const std::vector<std::vector<Slot>>& slots() const { return slots_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  void ensure_slots(const std::vector<ParamGroup>& groups);

  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<Slot>> slots_;
};

// Scales all gradients so their global L2 norm is at most `max_norm`.
// Returns the pre-clip norm.
double clip_grad_norm(std::vector<ParamGroup>& groups, double max_norm);

void zero_grads(std::vector<ParamGroup>& groups);

// uniform(-0.1, 0.1) init from a caller-owned generator.
Tensor init_param(Rng& rng, std::vector<int> shape, double range = 0.1);

// Total scalar count across groups.
int64_t param_count(const std::vector<ParamGroup>& groups);

}  // namespace djtd

#endif  // DJTD_PARAM_H_
