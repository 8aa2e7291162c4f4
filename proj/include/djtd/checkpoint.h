// djtd/checkpoint.h
//
// Flat binary checkpoint: header (magic "DJTD", format version u32),
// then one record per parameter group: name length + UTF-8 name, gate
// code u8, tensor count, and per tensor its shape and a little-endian
// f64 payload. Round-trips are bit-exact.

#ifndef DJTD_CHECKPOINT_H_
#define DJTD_CHECKPOINT_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "djtd/param.h"
#include "djtd/tensor.h"

namespace djtd {

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<ParamGroup>& groups);

// Loads every group in the file. Tensors come back without grad flags set.
std::vector<ParamGroup> load_checkpoint(const std::string& path);

// Copies values from the file into matching live groups (by name; shapes
// and gates must agree). With allow_missing, file groups absent from
// `groups` are skipped — used to seed a second-pass model from a
// first-pass-only checkpoint. Every group in `groups` that the file does
// carry must match.
void load_checkpoint_into(const std::string& path, std::vector<ParamGroup>& groups,
                          bool allow_missing = false);

// Low-level little-endian codec, shared with the corpus feature files.
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f64(std::ostream& os, double v);
uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

// Optimizer + step state sidecar for training resume (magic "DJOS").
struct TrainState {
  int64_t step = 0;  // completed training steps
  Adam adam;
};

void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path, const AdamConfig& cfg);

}  // namespace djtd

#endif  // DJTD_CHECKPOINT_H_
