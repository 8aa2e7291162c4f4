// djtd/tensor.h
//
// Dense 64-bit tensors with reverse-mode automatic differentiation.
// Every op records a node on an implicit tape (the DAG of TensorImpl
// parents) when gradients are enabled and any input requires them;
// backward() replays the tape in reverse creation order.
//
// Shapes are 1-D [n] or 2-D [r,c]; a scalar is the 1-D tensor [1].
// Values are row-major.

#ifndef DJTD_TENSOR_H_
#define DJTD_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace djtd {

std::string shape_str(const std::vector<int>& shape);

// Raised on any operand shape violation. Carries the op name and the
// offending shapes so callers can report them without parsing the message.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(std::string op, std::vector<int> lhs, std::vector<int> rhs);
  const std::string& op() const { return op_; }
  const std::vector<int>& lhs() const { return lhs_; }
  const std::vector<int>& rhs() const { return rhs_; }

 private:
  std::string op_;
  std::vector<int> lhs_, rhs_;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  uint64_t node_id = 0;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  // 2-D accessors; a 1-D tensor reads as a single row.
  int rows() const { return rank() == 1 ? 1 : dim(0); }
  int cols() const { return rank() == 1 ? dim(0) : dim(1); }
  int64_t size() const { return static_cast<int64_t>(impl_->values.size()); }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> raw_values() { return impl_->values; }
  double operator[](int64_t i) const { return impl_->values[static_cast<size_t>(i)]; }
  double at2(int r, int c) const { return impl_->values[static_cast<size_t>(r) * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> raw_grad();  // allocates if absent
  void zero_grad();

  uint64_t node_id() const { return impl_->node_id; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Thread-local gradient mode. Forward passes run under NoGradGuard (for
// decoding/evaluation) record nothing and may share parameters across
// threads read-only.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Builds an op result node. `backward_fn` reads self.grad and accumulates
// into self.parents[i]->grad (already allocated on entry). Custom ops
// (e.g. the transducer lattice) go through this too.
Tensor make_tensor_op(std::vector<int> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn);

// Reverse-mode sweep from a scalar loss. Every reachable tensor that
// requires grad ends up with an accumulated gradient; grads are summed
// across multiple backward() calls until zero_grad().
void backward(const Tensor& loss);

// --- ops ---------------------------------------------------------------
// Broadcast rules are deliberately narrow and documented per op; anything
// else throws ShapeError.

// [m,k] x [k,n] -> [m,n]. 2-D only.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise sum. b may also be: a row vector [1,c]/[c] added to every
// row of a [r,c], or a scalar [1] added everywhere.
Tensor add(const Tensor& a, const Tensor& b);

// Elementwise product; b may be a scalar [1].
Tensor mul(const Tensor& a, const Tensor& b);

// x * c for a plain double c.
Tensor scale(const Tensor& x, double c);

Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Row-wise over the last axis; 1-D input is one row.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// Reduction over the last axis: [c] -> [1], [r,c] -> [r].
Tensor logsumexp(const Tensor& x);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
inline Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}
inline Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

// Half-open ranges.
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
// 1-D element pick: x[i] as a scalar tensor.
Tensor at(const Tensor& x, int i);
// Single row of a 2-D tensor as [1,c].
inline Tensor row(const Tensor& x, int r) { return slice_rows(x, r, r + 1); }

Tensor transpose(const Tensor& x);
Tensor reverse_rows(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);

// Gathers rows of `table` [v,e] by id -> [n,e]. Out-of-range id throws.
Tensor embed_lookup(const Tensor& table, std::span<const int> ids);

}  // namespace djtd

#endif  // DJTD_TENSOR_H_
