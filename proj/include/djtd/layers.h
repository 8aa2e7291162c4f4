// djtd/layers.h
//
// Neural building blocks: LSTM with projection, bidirectional wrapper,
// multi-head attention, frame-pair time reduction, embedding and linear
// layers. Layers are immutable after construction; forward passes on a
// shared layer may run concurrently with private tape state.

#ifndef DJTD_LAYERS_H_
#define DJTD_LAYERS_H_

#include <utility>
#include <vector>

#include "djtd/param.h"
#include "djtd/tensor.h"

namespace djtd {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [1, out]

  Linear() = default;
  Linear(Rng& rng, int in_dim, int out_dim);
  Tensor forward(const Tensor& x) const;  // [n,in] -> [n,out]
  void collect(std::vector<Tensor>& out) const;
};

struct Embedding {
  Tensor table;  // [vocab, dim]

  Embedding() = default;
  Embedding(Rng& rng, int vocab, int dim);
  Tensor lookup(std::span<const int> ids) const;  // -> [n, dim]
  Tensor lookup(int id) const;                    // -> [1, dim]
  void collect(std::vector<Tensor>& out) const;
};

// LSTM with a projected output (LSTMP). Gate order in the fused weight
// matrices is input, forget, cell, output.
struct LstmLayer {
  int input_dim = 0, hidden_dim = 0, proj_dim = 0;
  Tensor w_x;     // [input_dim, 4*hidden]
  Tensor w_h;     // [proj, 4*hidden]
  Tensor bias;    // [1, 4*hidden]
  Tensor w_proj;  // [hidden, proj]

  LstmLayer() = default;
  LstmLayer(Rng& rng, int input_dim, int hidden_dim, int proj_dim);
  void collect(std::vector<Tensor>& out) const;
};

struct LstmState {
  Tensor h;  // [1, proj]
  Tensor c;  // [1, hidden]
};

LstmState lstm_zero_state(const LstmLayer& layer);

// One cell step: returns (output row [1,proj], next state).
std::pair<Tensor, LstmState> lstm_step(const LstmLayer& layer, const Tensor& x_row,
                                       const LstmState& state);

// Full unroll over [T,input_dim] -> ([T,proj], final state). Output frame
// t depends only on input frames 0..t.
std::pair<Tensor, LstmState> lstm_forward(const LstmLayer& layer, const Tensor& seq,
                                          const LstmState& init);
std::pair<Tensor, LstmState> lstm_forward(const LstmLayer& layer, const Tensor& seq);

// Forward pass over seq plus a backward pass over the time-reversed seq,
// concatenated along features -> [T, 2*proj]. Both layers must share
// input_dim.
Tensor bilstm_forward(const LstmLayer& fwd, const LstmLayer& bwd, const Tensor& seq);

// Multi-head dot-product attention with one query row. Logits are scaled
// by 1/sqrt(head_dim); per-head weights are a softmax over the source.
struct MultiHeadAttention {
  int num_heads = 0, head_dim = 0;
  Tensor w_q;  // [query_dim, model]  model = num_heads * head_dim
  Tensor w_k;  // [kv_dim, model]
  Tensor w_v;  // [kv_dim, model]
  Tensor w_o;  // [model, model]

  MultiHeadAttention() = default;
  MultiHeadAttention(Rng& rng, int query_dim, int kv_dim, int num_heads, int head_dim);
  int model_dim() const { return num_heads * head_dim; }
  void collect(std::vector<Tensor>& out) const;
};

struct AttentionResult {
  Tensor context;                    // [1, model]
  std::vector<Tensor> head_weights;  // per head, [1, S]
};

// query [1,query_dim], keys/values [S,kv_dim], S >= 1 -> context [1,model].
AttentionResult mha_attend_detail(const MultiHeadAttention& attn, const Tensor& query,
                                  const Tensor& keys, const Tensor& values);
Tensor mha_attend(const MultiHeadAttention& attn, const Tensor& query, const Tensor& keys,
                  const Tensor& values);

// Concatenates each adjacent frame pair: [T,D] -> [ceil(T/factor), factor*D],
// zero-padding the tail when T is not a multiple.
struct TimeReduction {
  int factor = 2;
};

Tensor time_reduce(const TimeReduction& tr, const Tensor& seq);

}  // namespace djtd

#endif  // DJTD_LAYERS_H_
