#pragma once

// Dense row-major float64 tensors with a dynamic reverse-mode tape.
//
// Every op returns a fresh Tensor. When gradient recording is enabled and
// at least one input requires a gradient, the result keeps shared handles
// to its inputs plus a closure that pushes the output gradient back into
// them. Parameters are leaves; nothing references a result from its inputs,
// so a graph is released as soon as the loss tensor goes out of scope.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace b2b {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a call violates an operation's preconditions.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  // Per-parent local gradients written by `backward`, folded into the
  // parents with a single addition per element afterwards.
  std::vector<std::vector<double>> scratch;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Suspends tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  /// Normal(0, std^2) entries.
  template <class Rng>
  static Tensor randn(Shape shape, double std, Rng& rng, bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, std);
    std::vector<double> d(numel(shape));
    for (auto& x : d) x = dist(rng);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
    return node_->grad;
  }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }

  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double at(std::size_t i, std::size_t j) const { return node_->data[i * cols() + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy of the values, detached from any graph.
  Tensor clone() const { return from(shape(), node_->data, node_->requires_grad); }
  Tensor detach() const { return from(shape(), node_->data, false); }

  /// Reverse-mode sweep from a scalar. Gradients accumulate into every
  /// reachable tensor that requires one.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  bool same_storage(const Tensor& o) const { return node_ == o.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result; the backward closure is only kept when recording.
inline Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                          std::function<void(detail::Node&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
#ifndef NDEBUG
  {
    bool inputs_finite = true;
    for (auto& in : inputs)
      for (double x : in.values()) inputs_finite = inputs_finite && std::isfinite(x);
    if (inputs_finite)
      for (double v : out.values()) assert(!std::isnan(v));
  }
#endif
  if (!detail::grad_enabled()) return out;
  bool any = false;
  for (auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  for (auto& in : inputs) out.node_->parents.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

inline void Tensor::backward() const {
  if (size() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; reversed it is a valid reverse-topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    n->scratch.assign(n->parents.size(), {});
    n->backward(*n);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      auto& local = n->scratch[i];
      if (local.empty()) continue;
      auto& g = n->parents[i]->ensure_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += local[j];
    }
    n->scratch.clear();
  }
}

namespace detail {

/// Zeroed local-gradient buffer for parent i, or null if it needs none.
inline std::vector<double>* grad_of(Node& out, std::size_t i) {
  Node& p = *out.parents[i];
  if (!p.requires_grad) return nullptr;
  out.scratch[i].assign(p.data.size(), 0.0);
  return &out.scratch[i];
}

// C[m×n] += A[m×k] · B[k×n]. Each C element sums over k in ascending order
// regardless of m, so rows are computed independently of their neighbours.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[k×n] += Aᵀ · B with A[m×k], B[m×n].
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                        std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

inline std::vector<double> transposed(const double* a, std::size_t r, std::size_t c) {
  std::vector<double> t(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m,
                        std::size_t k, std::size_t n) {
  auto bt = transposed(b, n, k);
  gemm_acc(a, bt.data(), c, m, k, n);
}

inline void require_2d(const Tensor& t, const char* what) {
  if (t.dim() != 2)
    throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()));
  std::vector<double> c(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), c.data(), m, k, n);
  return make_result({m, n}, std::move(c), {a, b}, [m, k, n](detail::Node& out) {
    const auto& A = out.parents[0]->data;
    const auto& B = out.parents[1]->data;
    if (auto* ga = detail::grad_of(out, 0))
      detail::gemm_nt_acc(out.grad.data(), B.data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(out, 1))
      detail::gemm_tn_acc(A.data(), out.grad.data(), gb->data(), m, k, n);
  });
}

/// a · bᵀ for a[m×k], b[n×k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()) + "ᵀ");
  std::vector<double> c(m * n, 0.0);
  detail::gemm_nt_acc(a.data().data(), b.data().data(), c.data(), m, k, n);
  return make_result({m, n}, std::move(c), {a, b}, [m, k, n](detail::Node& out) {
    const auto& A = out.parents[0]->data;
    const auto& B = out.parents[1]->data;
    if (auto* ga = detail::grad_of(out, 0))
      detail::gemm_acc(out.grad.data(), B.data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(out, 1))
      detail::gemm_tn_acc(out.grad.data(), A.data(), gb->data(), m, n, k);
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_2d(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  return make_result({c, r}, detail::transposed(a.data().data(), r, c), {a},
                     [r, c](detail::Node& out) {
                       auto* g = detail::grad_of(out, 0);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += out.grad[j * r + i];
                     });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "add");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(c), {a, b}, [](detail::Node& out) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* g = detail::grad_of(out, p))
        for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i] += out.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mul");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(c), {a, b}, [](detail::Node& out) {
    const auto& A = out.parents[0]->data;
    const auto& B = out.parents[1]->data;
    if (auto* g = detail::grad_of(out, 0))
      for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i] += out.grad[i] * B[i];
    if (auto* g = detail::grad_of(out, 1))
      for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i] += out.grad[i] * A[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * s;
  return make_result(a.shape(), std::move(c), {a}, [s](detail::Node& out) {
    auto* g = detail::grad_of(out, 0);
    for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i] += out.grad[i] * s;
  });
}

/// x[..., n] + bias[n], broadcast over leading axes.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.dim() != 1 || x.dim() == 0 || x.shape().back() != bias.size())
    throw ShapeError("add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  const std::size_t n = bias.size();
  std::vector<double> c(x.values());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bias.data()[i % n];
  return make_result(x.shape(), std::move(c), {x, bias}, [n](detail::Node& out) {
    if (auto* g = detail::grad_of(out, 0))
      for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i] += out.grad[i];
    if (auto* g = detail::grad_of(out, 1))
      for (std::size_t i = 0; i < out.grad.size(); ++i) (*g)[i % n] += out.grad[i];
  });
}

/// Exact (erf) GELU.
inline Tensor gelu(const Tensor& x) {
  std::vector<double> c(x.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    double v = x.data()[i];
    c[i] = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  }
  return make_result(x.shape(), std::move(c), {x}, [](detail::Node& out) {
    const auto& X = out.parents[0]->data;
    auto* g = detail::grad_of(out, 0);
    const double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < X.size(); ++i) {
      double v = X[i];
      double d = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*g)[i] += out.grad[i] * d;
    }
  });
}

/// Writes -inf wherever mask[i] is nonzero. Mask length equals numel(x).
inline Tensor masked_fill_neg_inf(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != x.size())
    throw ShapeError("mask of length " + std::to_string(mask.size()) + " for tensor " +
                     shape_str(x.shape()));
  std::vector<double> c(x.values());
  for (std::size_t i = 0; i < c.size(); ++i)
    if (mask[i]) c[i] = -std::numeric_limits<double>::infinity();
  return make_result(x.shape(), std::move(c), {x}, [mask](detail::Node& out) {
    auto* g = detail::grad_of(out, 0);
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      if (!mask[i]) (*g)[i] += out.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalisation

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](detail::Node& out) {
    auto* g = detail::grad_of(out, 0);
    for (auto& v : *g) v += out.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

namespace detail {

struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace detail

/// Max-subtracted softmax along `axis`. Positions holding -inf get 0; a
/// slice that is entirely -inf yields all zeros.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto [outer, n, inner] = detail::split_axis(x.shape(), axis);
  std::vector<double> y(x.size());
  const double* X = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, X[base + i * inner]);
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += (y[base + i * inner] = std::exp(X[base + i * inner] - mx));
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= z;
    }
  return make_result(x.shape(), y, {x}, [y, outer, n, inner](detail::Node& out) {
    auto* g = detail::grad_of(out, 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += out.grad[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = base + i * inner;
          (*g)[j] += y[j] * (out.grad[j] - dot);
        }
      }
  });
}

inline Tensor softmax(const Tensor& x) { return softmax(x, x.dim() - 1); }

inline Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto [outer, n, inner] = detail::split_axis(x.shape(), axis);
  std::vector<double> y(x.size());
  const double* X = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, X[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += std::exp(X[base + i * inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] = X[base + i * inner] - lz;
    }
  return make_result(x.shape(), y, {x}, [y, outer, n, inner](detail::Node& out) {
    auto* g = detail::grad_of(out, 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double gs = 0.0;
        for (std::size_t i = 0; i < n; ++i) gs += out.grad[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = base + i * inner;
          (*g)[j] += out.grad[j] - std::exp(y[j]) * gs;
        }
      }
  });
}

/// Normalises over the last axis, then applies gamma and beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.dim() == 0 || x.shape().back() == 0)
    throw ShapeError("layer_norm: last axis must be non-empty, got " + shape_str(x.shape()));
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  if (gamma.size() != n || beta.size() != n)
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " for input " + shape_str(x.shape()));
  std::vector<double> xhat(x.size()), y(x.size()), inv_std(rows);
  const double* X = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = X + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (xr[i] - mu) * inv_std[r];
      y[r * n + i] = xhat[r * n + i] * gamma.data()[i] + beta.data()[i];
    }
  }
  return make_result(x.shape(), std::move(y), {x, gamma, beta},
                     [xhat, inv_std, rows, n](detail::Node& out) {
                       const auto& G = out.parents[1]->data;
                       auto* gx = detail::grad_of(out, 0);
                       auto* gg = detail::grad_of(out, 1);
                       auto* gb = detail::grad_of(out, 2);
                       std::vector<double> dxhat(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = out.grad.data() + r * n;
                         const double* xh = xhat.data() + r * n;
                         if (gg)
                           for (std::size_t i = 0; i < n; ++i) (*gg)[i] += dy[i] * xh[i];
                         if (gb)
                           for (std::size_t i = 0; i < n; ++i) (*gb)[i] += dy[i];
                         if (!gx) continue;
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t i = 0; i < n; ++i) {
                           dxhat[i] = dy[i] * G[i];
                           s1 += dxhat[i];
                           s2 += dxhat[i] * xh[i];
                         }
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i)
                           (*gx)[r * n + i] += inv_std[r] * (dxhat[i] - inv_n * s1 - xh[i] * inv_n * s2);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Indexing

/// Rows of `table` selected by `ids`; gradients scatter-add back.
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  detail::require_2d(table, "embedding");
  const std::size_t v = table.rows(), h = table.cols();
  std::vector<double> out(ids.size() * h);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(v) + " rows");
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * h, h, out.data() + i * h);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result({ids.size(), h}, std::move(out), {table}, [idx, h](detail::Node& o) {
    auto* g = detail::grad_of(o, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < h; ++j) (*g)[static_cast<std::size_t>(idx[i]) * h + j] += o.grad[i * h + j];
  });
}

inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  detail::require_2d(x, "gather_rows");
  const std::size_t h = x.cols();
  std::vector<double> out(rows.size() * h);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw ContractError("gather_rows: row index out of range");
    std::copy_n(x.data().data() + rows[i] * h, h, out.data() + i * h);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), h}, std::move(out), {x}, [idx, h](detail::Node& o) {
    auto* g = detail::grad_of(o, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < h; ++j) (*g)[idx[i] * h + j] += o.grad[i * h + j];
  });
}

/// Inverted dropout; identity when p == 0.
template <class Rng>
Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> m(x.size()), y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    m[i] = keep(rng) ? s : 0.0;
    y[i] = x.data()[i] * m[i];
  }
  return make_result(x.shape(), std::move(y), {x}, [m](detail::Node& out) {
    auto* g = detail::grad_of(out, 0);
    for (std::size_t i = 0; i < m.size(); ++i) (*g)[i] += out.grad[i] * m[i];
  });
}

// ---------------------------------------------------------------------------
// Loss

/// Summed NLL and counted positions of a masked cross-entropy, no tape.
struct NllTotals {
  double sum = 0.0;
  std::size_t count = 0;
};

namespace detail {

inline double row_log_partition(const double* r, std::size_t v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, r[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < v; ++j) z += std::exp(r[j] - mx);
  return mx + std::log(z);
}

}  // namespace detail

/// Sum of -log softmax(logits)[target] over rows whose target is not ignored.
inline NllTotals nll_totals(const Tensor& logits, std::span<const int> targets,
                            const std::function<bool(int)>& ignored) {
  detail::require_2d(logits, "nll_totals");
  if (targets.size() != logits.rows())
    throw ShapeError("nll_totals: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  const std::size_t v = logits.cols();
  NllTotals t;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (ignored(targets[i])) continue;
    const double* r = logits.data().data() + i * v;
    t.sum += detail::row_log_partition(r, v) - r[targets[i]];
    ++t.count;
  }
  return t;
}

/// Mean negative log-likelihood over rows whose target is not ignored,
/// fused with log-softmax.
inline Tensor masked_nll(const Tensor& logits, std::span<const int> targets,
                         const std::function<bool(int)>& ignored) {
  detail::require_2d(logits, "masked_nll");
  if (targets.size() != logits.rows())
    throw ShapeError("masked_nll: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  const std::size_t n = logits.rows(), v = logits.cols();
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> counted(n);
  std::vector<double> lz(n, 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ignored(tgt[i])) continue;
    if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= v)
      throw ContractError("masked_nll: target id " + std::to_string(tgt[i]) + " out of range");
    const double* r = logits.data().data() + i * v;
    lz[i] = detail::row_log_partition(r, v);
    total += lz[i] - r[tgt[i]];
    counted[i] = 1;
    ++count;
  }
  if (count == 0) throw ContractError("masked_nll: every target position is ignored");
  const double inv = 1.0 / static_cast<double>(count);
  return make_result({}, {total * inv}, {logits},
                     [tgt, counted, lz, n, v, inv](detail::Node& out) {
                       const auto& L = out.parents[0]->data;
                       auto* g = detail::grad_of(out, 0);
                       const double go = out.grad[0] * inv;
                       for (std::size_t i = 0; i < n; ++i) {
                         if (!counted[i]) continue;
                         for (std::size_t j = 0; j < v; ++j)
                           (*g)[i * v + j] += go * std::exp(L[i * v + j] - lz[i]);
                         (*g)[i * v + static_cast<std::size_t>(tgt[i])] -= go;
                       }
                     });
}

}  // namespace b2b
