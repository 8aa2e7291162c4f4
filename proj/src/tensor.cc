// djtd/tensor.cc

#include "djtd/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace djtd {

namespace {

std::atomic<uint64_t> g_node_counter{1};
thread_local bool g_grad_enabled = true;

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void check_shape_valid(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 2)
    throw std::invalid_argument("tensor rank must be 1 or 2, got " + shape_str(shape));
  for (int d : shape)
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

ShapeError::ShapeError(std::string op, std::vector<int> lhs, std::vector<int> rhs)
    : std::runtime_error("shape mismatch in op '" + op + "': " + shape_str(lhs) +
                         " vs " + shape_str(rhs)),
      op_(std::move(op)),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

Tensor::Tensor(std::vector<int> shape, double fill) {
  check_shape_valid(shape);
  impl_ = std::make_shared<TensorImpl>();
  impl_->values.assign(static_cast<size_t>(numel(shape)), fill);
  impl_->shape = std::move(shape);
  impl_->node_id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) {
  check_shape_valid(shape);
  if (numel(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->node_id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(size()) + " elements");
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
  impl_->requires_grad = b;
  return *this;
}

std::span<double> Tensor::raw_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_tensor_op(std::vector<int> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn) {
  Tensor out(std::move(shape), std::move(values));
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents)
      if (p.requires_grad()) { needs = true; break; }
  }
  if (needs) {
    auto& impl = *out.impl();
    impl.requires_grad = true;
    impl.parents.reserve(parents.size());
    for (const Tensor& p : parents) impl.parents.push_back(p.impl());
    impl.backward_fn = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

  // Reachable subgraph, then reverse creation order. Parents are always
  // created before children, so node_id order is a topological order.
  std::vector<TensorImpl*> nodes;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{loss.impl().get()};
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    TensorImpl* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->node_id > b->node_id; });

  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (TensorImpl* n : nodes) {
    if (!n->backward_fn) continue;
    for (const auto& p : n->parents) p->ensure_grad();
    n->backward_fn(*n);
  }
}

// --- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const auto av = a.values(), bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double x = av[static_cast<size_t>(i) * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[static_cast<size_t>(p) * n];
      double* orow = &out[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  return make_tensor_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorImpl& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    // dA = G B^T, dB = A^T G
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += g[static_cast<size_t>(i) * n + j] * pb.values[static_cast<size_t>(p) * n + j];
        pa.grad[static_cast<size_t>(i) * k + p] += acc;
      }
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
          acc += pa.values[static_cast<size_t>(i) * k + p] * g[static_cast<size_t>(i) * n + j];
        pb.grad[static_cast<size_t>(p) * n + j] += acc;
      }
  });
}

namespace {

enum class BcastKind { kSame, kRow, kScalar };

BcastKind classify_bcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return BcastKind::kSame;
  if (b.size() == 1) return BcastKind::kScalar;
  if (a.rank() == 2 && b.cols() == a.cols() && b.rows() == 1) return BcastKind::kRow;
  throw ShapeError(op, a.shape(), b.shape());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const BcastKind kind = classify_bcast("add", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  switch (kind) {
    case BcastKind::kSame:
      for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
      break;
    case BcastKind::kScalar:
      for (double& v : out) v += bv[0];
      break;
    case BcastKind::kRow: {
      const int c = a.cols();
      for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
      break;
    }
  }
  return make_tensor_op(a.shape(), std::move(out), {a, b}, [kind](TensorImpl& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    switch (kind) {
      case BcastKind::kSame:
        for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
        break;
      case BcastKind::kScalar:
        for (double g : self.grad) pb.grad[0] += g;
        break;
      case BcastKind::kRow: {
        const size_t c = pb.values.size();
        for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % c] += self.grad[i];
        break;
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const BcastKind kind = classify_bcast("mul", a, b);
  if (kind == BcastKind::kRow) throw ShapeError("mul", a.shape(), b.shape());
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  if (kind == BcastKind::kSame) {
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  } else {
    for (double& v : out) v *= bv[0];
  }
  return make_tensor_op(a.shape(), std::move(out), {a, b}, [kind](TensorImpl& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (kind == BcastKind::kSame) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        pa.grad[i] += self.grad[i] * pb.values[i];
        pb.grad[i] += self.grad[i] * pa.values[i];
      }
    } else {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        pa.grad[i] += self.grad[i] * pb.values[0];
        pb.grad[0] += self.grad[i] * pa.values[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= c;
  return make_tensor_op(x.shape(), std::move(out), {x}, [c](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
  });
}

Tensor tanh_op(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = std::tanh(v);
  return make_tensor_op(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.values[i];
      p.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  return make_tensor_op(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.values[i];
      p.grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

namespace {

// Shared row-wise softmax core. Max-shifted for stability.
void softmax_rows(std::span<const double> in, int rows, int cols, double* out, bool log_form) {
  for (int r = 0; r < rows; ++r) {
    const double* x = &in[static_cast<size_t>(r) * cols];
    double* y = out + static_cast<size_t>(r) * cols;
    double mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += std::exp(x[j] - mx);
    const double logz = std::log(z) + mx;
    for (int j = 0; j < cols; ++j) y[j] = log_form ? x[j] - logz : std::exp(x[j] - logz);
  }
}

}  // namespace

Tensor softmax(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  softmax_rows(x.values(), r, c, out.data(), false);
  return make_tensor_op(x.shape(), std::move(out), {x}, [r, c](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i) {
      const double* y = &self.values[static_cast<size_t>(i) * c];
      const double* g = &self.grad[static_cast<size_t>(i) * c];
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += g[j] * y[j];
      double* gx = &p.grad[static_cast<size_t>(i) * c];
      for (int j = 0; j < c; ++j) gx[j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  softmax_rows(x.values(), r, c, out.data(), true);
  return make_tensor_op(x.shape(), std::move(out), {x}, [r, c](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i) {
      const double* y = &self.values[static_cast<size_t>(i) * c];
      const double* g = &self.grad[static_cast<size_t>(i) * c];
      double gsum = 0.0;
      for (int j = 0; j < c; ++j) gsum += g[j];
      double* gx = &p.grad[static_cast<size_t>(i) * c];
      for (int j = 0; j < c; ++j) gx[j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

Tensor logsumexp(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  std::vector<double> out(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const double* v = &x.values()[static_cast<size_t>(i) * c];
    double mx = v[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, v[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(v[j] - mx);
    out[static_cast<size_t>(i)] = std::log(z) + mx;
  }
  return make_tensor_op({r}, std::move(out), {x}, [r, c](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i) {
      const double lse = self.values[static_cast<size_t>(i)];
      const double g = self.grad[static_cast<size_t>(i)];
      const double* v = &p.values[static_cast<size_t>(i) * c];
      double* gx = &p.grad[static_cast<size_t>(i) * c];
      for (int j = 0; j < c; ++j) gx[j] += g * std::exp(v[j] - lse);
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int c = parts[0].cols();
  int total = 0;
  std::vector<Tensor> parents;
  for (const Tensor& t : parts) {
    if (t.rank() != 2 || t.cols() != c) throw ShapeError("concat_rows", parts[0].shape(), t.shape());
    total += t.rows();
    parents.push_back(t);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total) * c);
  for (const Tensor& t : parts) out.insert(out.end(), t.values().begin(), t.values().end());
  return make_tensor_op({total, c}, std::move(out), std::move(parents), [](TensorImpl& self) {
    size_t off = 0;
    for (auto& p : self.parents) {
      for (size_t i = 0; i < p->values.size(); ++i) p->grad[i] += self.grad[off + i];
      off += p->values.size();
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int r = parts[0].rows();
  int total = 0;
  std::vector<Tensor> parents;
  for (const Tensor& t : parts) {
    if (t.rows() != r) throw ShapeError("concat_cols", parts[0].shape(), t.shape());
    total += t.cols();
    parents.push_back(t);
  }
  std::vector<double> out(static_cast<size_t>(r) * total);
  int col0 = 0;
  for (const Tensor& t : parts) {
    const int c = t.cols();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        out[static_cast<size_t>(i) * total + col0 + j] = t.values()[static_cast<size_t>(i) * c + j];
    col0 += c;
  }
  return make_tensor_op(r == 1 && parts[0].rank() == 1 ? std::vector<int>{total}
                                                       : std::vector<int>{r, total},
                        std::move(out), std::move(parents), [r, total](TensorImpl& self) {
    int col0 = 0;
    for (auto& p : self.parents) {
      const int c = static_cast<int>(p->values.size()) / r;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          p->grad[static_cast<size_t>(i) * c + j] +=
              self.grad[static_cast<size_t>(i) * total + col0 + j];
      col0 += c;
    }
  });
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  if (x.rank() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1)
    throw ShapeError("slice_rows", x.shape(), {r0, r1});
  const int c = x.cols();
  std::vector<double> out(x.values().begin() + static_cast<size_t>(r0) * c,
                          x.values().begin() + static_cast<size_t>(r1) * c);
  return make_tensor_op({r1 - r0, c}, std::move(out), {x}, [r0, c](TensorImpl& self) {
    auto& p = *self.parents[0];
    const size_t off = static_cast<size_t>(r0) * c;
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  if (x.rank() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
    throw ShapeError("slice_cols", x.shape(), {c0, c1});
  const int r = x.rows(), c = x.cols(), w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] = x.values()[static_cast<size_t>(i) * c + c0 + j];
  return make_tensor_op({r, w}, std::move(out), {x}, [r, c, c0, w](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        p.grad[static_cast<size_t>(i) * c + c0 + j] += self.grad[static_cast<size_t>(i) * w + j];
  });
}

Tensor at(const Tensor& x, int i) {
  if (x.rank() != 1 || i < 0 || i >= x.dim(0)) throw ShapeError("at", x.shape(), {i});
  return make_tensor_op({1}, {x.values()[static_cast<size_t>(i)]}, {x}, [i](TensorImpl& self) {
    self.parents[0]->grad[static_cast<size_t>(i)] += self.grad[0];
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose", x.shape(), {});
  const int r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(j) * r + i] = x.values()[static_cast<size_t>(i) * c + j];
  return make_tensor_op({c, r}, std::move(out), {x}, [r, c](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        p.grad[static_cast<size_t>(i) * c + j] += self.grad[static_cast<size_t>(j) * r + i];
  });
}

Tensor reverse_rows(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("reverse_rows", x.shape(), {});
  const int r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(r - 1 - i) * c + j] = x.values()[static_cast<size_t>(i) * c + j];
  return make_tensor_op({r, c}, std::move(out), {x}, [r, c](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        p.grad[static_cast<size_t>(i) * c + j] += self.grad[static_cast<size_t>(r - 1 - i) * c + j];
  });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  check_shape_valid(shape);
  if (numel(shape) != x.size()) throw ShapeError("reshape", x.shape(), shape);
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_tensor_op(std::move(shape), std::move(out), {x}, [](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor embed_lookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embed_lookup", table.shape(), {});
  if (ids.empty()) throw std::invalid_argument("embed_lookup: empty id list");
  const int v = table.dim(0), e = table.dim(1);
  std::vector<double> out(ids.size() * static_cast<size_t>(e));
  std::vector<int> idv(ids.begin(), ids.end());
  for (size_t n = 0; n < idv.size(); ++n) {
    const int id = idv[n];
    if (id < 0 || id >= v)
      throw std::out_of_range("embed_lookup: id " + std::to_string(id) + " outside table " +
                              shape_str(table.shape()));
    const double* src = &table.values()[static_cast<size_t>(id) * e];
    std::copy(src, src + e, &out[n * static_cast<size_t>(e)]);
  }
  return make_tensor_op({static_cast<int>(ids.size()), e}, std::move(out), {table},
                        [idv = std::move(idv), e](TensorImpl& self) {
    auto& p = *self.parents[0];
    for (size_t n = 0; n < idv.size(); ++n) {
      double* dst = &p.grad[static_cast<size_t>(idv[n]) * e];
      const double* g = &self.grad[n * static_cast<size_t>(e)];
      for (int j = 0; j < e; ++j) dst[j] += g[j];
    }
  });
}

}  // namespace djtd
