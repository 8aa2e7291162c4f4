// djtd/layers.cc

#include "djtd/layers.h"

#include <cmath>
#include <stdexcept>

namespace djtd {

Linear::Linear(Rng& rng, int in_dim, int out_dim)
    : weight(init_param(rng, {in_dim, out_dim})), bias(init_param(rng, {1, out_dim})) {}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(std::vector<Tensor>& out) const {
  out.push_back(weight);
  out.push_back(bias);
}

Embedding::Embedding(Rng& rng, int vocab, int dim) : table(init_param(rng, {vocab, dim})) {}

Tensor Embedding::lookup(std::span<const int> ids) const { return embed_lookup(table, ids); }

Tensor Embedding::lookup(int id) const {
  const int ids[1] = {id};
  return embed_lookup(table, std::span<const int>(ids, 1));
}

void Embedding::collect(std::vector<Tensor>& out) const { out.push_back(table); }

LstmLayer::LstmLayer(Rng& rng, int input_dim_, int hidden_dim_, int proj_dim_)
    : input_dim(input_dim_),
      hidden_dim(hidden_dim_),
      proj_dim(proj_dim_),
      w_x(init_param(rng, {input_dim_, 4 * hidden_dim_})),
      w_h(init_param(rng, {proj_dim_, 4 * hidden_dim_})),
      bias(init_param(rng, {1, 4 * hidden_dim_})),
      w_proj(init_param(rng, {hidden_dim_, proj_dim_})) {}

void LstmLayer::collect(std::vector<Tensor>& out) const {
  out.push_back(w_x);
  out.push_back(w_h);
  out.push_back(bias);
  out.push_back(w_proj);
}

LstmState lstm_zero_state(const LstmLayer& layer) {
  return {Tensor({1, layer.proj_dim}), Tensor({1, layer.hidden_dim})};
}

std::pair<Tensor, LstmState> lstm_step(const LstmLayer& layer, const Tensor& x_row,
                                       const LstmState& state) {
  if (x_row.rank() != 2 || x_row.dim(0) != 1 || x_row.dim(1) != layer.input_dim)
    throw ShapeError("lstm_step", x_row.shape(), {1, layer.input_dim});
  const int h = layer.hidden_dim;
  Tensor gates = add(add(matmul(x_row, layer.w_x), matmul(state.h, layer.w_h)), layer.bias);
  Tensor i = sigmoid(slice_cols(gates, 0, h));
  Tensor f = sigmoid(slice_cols(gates, h, 2 * h));
  Tensor g = tanh_op(slice_cols(gates, 2 * h, 3 * h));
  Tensor o = sigmoid(slice_cols(gates, 3 * h, 4 * h));
  Tensor c = add(mul(f, state.c), mul(i, g));
  Tensor out = matmul(mul(o, tanh_op(c)), layer.w_proj);
  return {out, LstmState{out, c}};
}

std::pair<Tensor, LstmState> lstm_forward(const LstmLayer& layer, const Tensor& seq,
                                          const LstmState& init) {
  if (seq.rank() != 2 || seq.dim(1) != layer.input_dim)
    throw ShapeError("lstm_forward", seq.shape(), {seq.rows(), layer.input_dim});
  const int t_len = seq.dim(0);
  LstmState state = init;
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    auto [out, next] = lstm_step(layer, row(seq, t), state);
    rows.push_back(out);
    state = next;
  }
  return {concat_rows(rows), state};
}

std::pair<Tensor, LstmState> lstm_forward(const LstmLayer& layer, const Tensor& seq) {
  return lstm_forward(layer, seq, lstm_zero_state(layer));
}

Tensor bilstm_forward(const LstmLayer& fwd, const LstmLayer& bwd, const Tensor& seq) {
  if (fwd.input_dim != bwd.input_dim)
    throw ShapeError("bilstm_forward", {fwd.input_dim}, {bwd.input_dim});
  Tensor out_f = lstm_forward(fwd, seq).first;
  Tensor out_b = reverse_rows(lstm_forward(bwd, reverse_rows(seq)).first);
  return concat_cols({out_f, out_b});
}

MultiHeadAttention::MultiHeadAttention(Rng& rng, int query_dim, int kv_dim, int num_heads_,
                                       int head_dim_)
    : num_heads(num_heads_),
      head_dim(head_dim_),
      w_q(init_param(rng, {query_dim, num_heads_ * head_dim_})),
      w_k(init_param(rng, {kv_dim, num_heads_ * head_dim_})),
      w_v(init_param(rng, {kv_dim, num_heads_ * head_dim_})),
      w_o(init_param(rng, {num_heads_ * head_dim_, num_heads_ * head_dim_})) {}

void MultiHeadAttention::collect(std::vector<Tensor>& out) const {
  out.push_back(w_q);
  out.push_back(w_k);
  out.push_back(w_v);
  out.push_back(w_o);
}

AttentionResult mha_attend_detail(const MultiHeadAttention& attn, const Tensor& query,
                                  const Tensor& keys, const Tensor& values) {
  if (keys.rank() != 2 || keys.dim(0) < 1)
    throw std::invalid_argument("mha_attend: empty attention source");
  if (keys.shape() != values.shape()) throw ShapeError("mha_attend", keys.shape(), values.shape());
  const int dh = attn.head_dim;
  Tensor q = matmul(query, attn.w_q);    // [1, model]
  Tensor k = matmul(keys, attn.w_k);     // [S, model]
  Tensor v = matmul(values, attn.w_v);   // [S, model]
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionResult res;
  std::vector<Tensor> head_ctx;
  for (int h = 0; h < attn.num_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt);  // [1, S]
    Tensor w = softmax(logits);
    head_ctx.push_back(matmul(w, vh));  // convex combination of value rows
    res.head_weights.push_back(w);
  }
  res.context = matmul(concat_cols(head_ctx), attn.w_o);
  return res;
}

Tensor mha_attend(const MultiHeadAttention& attn, const Tensor& query, const Tensor& keys,
                  const Tensor& values) {
  return mha_attend_detail(attn, query, keys, values).context;
}

Tensor time_reduce(const TimeReduction& tr, const Tensor& seq) {
  if (seq.rank() != 2) throw ShapeError("time_reduce", seq.shape(), {});
  const int t_len = seq.dim(0), d = seq.dim(1), f = tr.factor;
  const int t_out = (t_len + f - 1) / f;
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(t_out));
  Tensor zero_row({1, d});
  for (int t = 0; t < t_out; ++t) {
    std::vector<Tensor> group;
    for (int j = 0; j < f; ++j) {
      const int src = t * f + j;
      group.push_back(src < t_len ? row(seq, src) : zero_row);
    }
    rows.push_back(concat_cols(group));
  }
  return concat_rows(rows);
}

}  // namespace djtd
