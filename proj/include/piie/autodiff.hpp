#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "piie/errors.hpp"
#include "piie/tensor.hpp"

// Reverse-mode automatic differentiation over dense tensors.
//
// A Value is a shared handle to a graph node. Ops build new nodes that keep
// their parents alive and register a backward rule; backward() sweeps the
// graph in reverse topological order. Leaf gradients accumulate across calls,
// interior gradients are recomputed on every sweep.

namespace piie {

using Rng = std::mt19937_64;

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  bool is_leaf() const { return !backward; }

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
};

}  // namespace detail

class Value {
 public:
  Value() = default;

  static Value leaf(Tensor t, bool requires_grad = true) {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return Value(std::move(n));
  }

  static Value constant(Tensor t) { return leaf(std::move(t), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& data() const { return node_->value; }
  // Mutable access for leaves only (parameter updates, perturbation).
  Tensor& mutable_data() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad = Tensor(); }

  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const {
    if (size() != 1) throw ContractError("item() on non-scalar of shape " + shape().str());
    return node_->value[0];
  }
  double operator()(std::size_t r, std::size_t c) const { return node_->value(r, c); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  bool same_node(const Value& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Value(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Value make_op(Tensor, std::vector<Value>, std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Builds an op node. The backward rule reads self.grad and accumulates into
// parents' grads (only for parents with requires_grad). Exposed so callers
// can define fused ops.
inline Value make_op(Tensor out, std::vector<Value> inputs, std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(out);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  n->requires_grad = needs;
  if (needs) {
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Value(std::move(n));
}

namespace detail {

inline std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

inline Tensor& grad_of(Node& self, std::size_t i) { return self.parents[i]->ensure_grad(); }
inline bool wants(Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

}  // namespace detail

// Populates gradients of every differentiable node reachable from a scalar root.
inline void backward(const Value& root) {
  if (root.size() != 1) throw ContractError("backward() needs a scalar root, got shape " + root.shape().str());
  if (!root.requires_grad()) return;
  auto order = detail::topo_order(root.node().get());
  for (auto* n : order) {
    if (n->is_leaf())
      n->ensure_grad();
    else
      n->grad = Tensor(n->value.shape());
  }
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting: the second operand may be a scalar or a single row matching
// the first operand's width.

enum class Broadcast { none, scalar, row };

inline Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::none;
  if (b.numel() == 1) return Broadcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  throw DimensionError(std::string(op) + ": cannot broadcast " + b.str() + " onto " + a.str());
}

namespace detail {

inline double bval(const Tensor& b, Broadcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Broadcast::none: return b[i];
    case Broadcast::scalar: return b[0];
    default: return b[i % cols];
  }
}

inline void bacc(Tensor& gb, Broadcast k, std::size_t i, std::size_t cols, double v) {
  switch (k) {
    case Broadcast::none: gb[i] += v; break;
    case Broadcast::scalar: gb[0] += v; break;
    default: gb[i % cols] += v; break;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + a.shape().str() + " x " + b.shape().str());
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  out.mat().noalias() = a.data().mat() * b.data().mat();
  return make_op(std::move(out), {a, b}, [](detail::Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    if (detail::wants(self, 0)) detail::grad_of(self, 0).mat().noalias() += self.grad.mat() * B.mat().transpose();
    if (detail::wants(self, 1)) detail::grad_of(self, 1).mat().noalias() += A.mat().transpose() * self.grad.mat();
  });
}

inline Value transpose(const Value& a) {
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  out.mat() = a.data().mat().transpose();
  return make_op(std::move(out), {a}, [](detail::Node& self) {
    detail::grad_of(self, 0).mat() += self.grad.mat().transpose();
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Value add(const Value& a, const Value& b) {
  const auto k = broadcast_kind(a.shape(), b.shape(), "add");
  Tensor out = a.data();
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += detail::bval(b.data(), k, i, c);
  return make_op(std::move(out), {a, b}, [k, c](detail::Node& self) {
    if (detail::wants(self, 0)) detail::grad_of(self, 0).mat() += self.grad.mat();
    if (detail::wants(self, 1)) {
      auto& gb = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) detail::bacc(gb, k, i, c, self.grad[i]);
    }
  });
}

inline Value sub(const Value& a, const Value& b) {
  const auto k = broadcast_kind(a.shape(), b.shape(), "sub");
  Tensor out = a.data();
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= detail::bval(b.data(), k, i, c);
  return make_op(std::move(out), {a, b}, [k, c](detail::Node& self) {
    if (detail::wants(self, 0)) detail::grad_of(self, 0).mat() += self.grad.mat();
    if (detail::wants(self, 1)) {
      auto& gb = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) detail::bacc(gb, k, i, c, -self.grad[i]);
    }
  });
}

inline Value mul(const Value& a, const Value& b) {
  const auto k = broadcast_kind(a.shape(), b.shape(), "mul");
  Tensor out = a.data();
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= detail::bval(b.data(), k, i, c);
  return make_op(std::move(out), {a, b}, [k, c](detail::Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    if (detail::wants(self, 0)) {
      auto& ga = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * detail::bval(B, k, i, c);
    }
    if (detail::wants(self, 1)) {
      auto& gb = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) detail::bacc(gb, k, i, c, self.grad[i] * A[i]);
    }
  });
}

inline Value scale(const Value& a, double s) {
  Tensor out = a.data();
  out.mat() *= s;
  return make_op(std::move(out), {a}, [s](detail::Node& self) {
    detail::grad_of(self, 0).mat() += s * self.grad.mat();
  });
}

inline Value relu(const Value& a) {
  Tensor out = a.data();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](detail::Node& self) {
    auto& g = detail::grad_of(self, 0);
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) g[i] += self.grad[i];
  });
}

inline Value tanh(const Value& a) {
  Tensor out = a.data();
  for (auto& v : out.values()) v = std::tanh(v);
  return make_op(std::move(out), {a}, [](detail::Node& self) {
    auto& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Value sigmoid(const Value& a) {
  Tensor out = a.data();
  for (auto& v : out.values()) v = sigmoid_scalar(v);
  return make_op(std::move(out), {a}, [](detail::Node& self) {
    auto& g = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizers. -inf entries are legal (masking) as long as each row
// has at least one finite entry.

inline void softmax_rows_inplace(Tensor& t) {
  const std::size_t r = t.rows(), c = t.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = t.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
}

inline double logsumexp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

inline Value softmax_rows(const Value& a) {
  Tensor out = a.data();
  softmax_rows_inplace(out);
  return make_op(std::move(out), {a}, [](detail::Node& self) {
    auto& g = detail::grad_of(self, 0);
    const std::size_t r = self.value.rows(), c = self.value.cols();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad(i, j) * self.value(i, j);
      for (std::size_t j = 0; j < c; ++j) g(i, j) += self.value(i, j) * (self.grad(i, j) - dot);
    }
  });
}

// [r x c] -> [r x 1]
inline Value logsumexp_rows(const Value& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) out(i, 0) = logsumexp({a.data().data() + i * c, c});
  return make_op(std::move(out), {a}, [r, c](detail::Node& self) {
    auto& g = detail::grad_of(self, 0);
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < r; ++i) {
      const double lse = self.value(i, 0);
      if (!std::isfinite(lse)) continue;
      for (std::size_t j = 0; j < c; ++j) g(i, j) += self.grad(i, 0) * std::exp(x(i, j) - lse);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Value sum(const Value& a) {
  Tensor out = Tensor::scalar(a.data().mat().sum());
  return make_op(std::move(out), {a}, [](detail::Node& self) {
    detail::grad_of(self, 0).mat().array() += self.grad[0];
  });
}

inline Value mean(const Value& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Value slice_cols(const Value& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols())
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") of " + a.shape().str());
  Tensor out = Tensor::matrix(a.rows(), count);
  out.mat() = a.data().mat().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return make_op(std::move(out), {a}, [start, count](detail::Node& self) {
    detail::grad_of(self, 0).mat().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) +=
        self.grad.mat();
  });
}

inline Value slice_rows(const Value& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows())
    throw DimensionError("slice_rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") of " + a.shape().str());
  Tensor out = Tensor::matrix(count, a.cols());
  out.mat() = a.data().mat().middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return make_op(std::move(out), {a}, [start, count](detail::Node& self) {
    detail::grad_of(self, 0).mat().middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) +=
        self.grad.mat();
  });
}

inline Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r)
      throw DimensionError("concat_cols: " + parts.front().shape().str() + " with " + p.shape().str());
    c += p.cols();
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    out.mat().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.cols())) = p.data().mat();
    off += p.cols();
  }
  return make_op(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!detail::wants(self, i)) continue;
      auto& g = detail::grad_of(self, i);
      g.mat() += self.grad.mat().middleCols(static_cast<Eigen::Index>(offsets[i]), static_cast<Eigen::Index>(g.cols()));
    }
  });
}

inline Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw DimensionError("concat_rows: " + parts.front().shape().str() + " with " + p.shape().str());
    r += p.rows();
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    out.mat().middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.rows())) = p.data().mat();
    off += p.rows();
  }
  return make_op(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!detail::wants(self, i)) continue;
      auto& g = detail::grad_of(self, i);
      g.mat() += self.grad.mat().middleRows(static_cast<Eigen::Index>(offsets[i]), static_cast<Eigen::Index>(g.rows()));
    }
  });
}

// ---------------------------------------------------------------------------
// Neural-network primitives

// Gathers rows of `table`. Rows equal to `skip_grad_row` receive no gradient
// (the padding row stays fixed), nor do rows flagged in `frozen_rows`.
inline Value lookup(const Value& table, std::span<const int> ids, int skip_grad_row = 0,
                    std::shared_ptr<const std::vector<std::uint8_t>> frozen_rows = nullptr) {
  const std::size_t d = table.cols();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= table.rows())
      throw ContractError("lookup index " + std::to_string(ids[r]) + " outside table of " +
                          std::to_string(table.rows()) + " rows");
    out.mat().row(static_cast<Eigen::Index>(r)) = table.data().mat().row(ids[r]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_op(std::move(out), {table},
                 [idx = std::move(idx), skip_grad_row, frozen = std::move(frozen_rows)](detail::Node& self) {
                   auto& g = detail::grad_of(self, 0);
                   for (std::size_t r = 0; r < idx.size(); ++r) {
                     if (idx[r] == skip_grad_row) continue;
                     if (frozen && (*frozen)[static_cast<std::size_t>(idx[r])]) continue;
                     g.mat().row(idx[r]) += self.grad.mat().row(static_cast<Eigen::Index>(r));
                   }
                 });
}

// x W + b for x [n x din], W [din x dout], b [dout].
inline Value affine(const Value& x, const Value& w, const Value& b) { return add(matmul(x, w), b); }

// Row-wise layer normalization with learned gain and bias (both [d]).
inline Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps = 1e-10) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c)
    throw DimensionError("layer_norm: input " + x.shape().str() + " with gain " + gain.shape().str());
  struct Cache {
    Tensor xhat;
    std::vector<double> inv_std;
  };
  auto cache = std::make_shared<Cache>();
  cache->xhat = Tensor::matrix(r, c);
  cache->inv_std.resize(r);
  Tensor out = Tensor::matrix(r, c);
  const auto& X = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += X(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache->inv_std[i] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (X(i, j) - mu) * inv;
      cache->xhat(i, j) = xh;
      out(i, j) = xh * gain.data()[j] + bias.data()[j];
    }
  }
  return make_op(std::move(out), {x, gain, bias}, [cache, r, c](detail::Node& self) {
    const auto& G = self.parents[1]->value;
    const auto& xh = cache->xhat;
    if (detail::wants(self, 0)) {
      auto& gx = detail::grad_of(self, 0);
      std::vector<double> dxh(c);
      for (std::size_t i = 0; i < r; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          dxh[j] = self.grad(i, j) * G[j];
          m1 += dxh[j];
          m2 += dxh[j] * xh(i, j);
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) gx(i, j) += cache->inv_std[i] * (dxh[j] - m1 - xh(i, j) * m2);
      }
    }
    if (detail::wants(self, 1)) {
      auto& gg = detail::grad_of(self, 1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gg[j] += self.grad(i, j) * xh(i, j);
    }
    if (detail::wants(self, 2)) {
      auto& gb = detail::grad_of(self, 2);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad(i, j);
    }
  });
}

// Inverted dropout. Identity when rate is 0 or rng is null.
inline Value dropout(const Value& x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  if (rate >= 1.0) throw ContractError("dropout rate must be in [0, 1)");
  Tensor mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = keep(*rng) ? s : 0.0;
  return mul(x, Value::constant(std::move(mask)));
}

// Sum over rows of -log softmax(logits)[target].
inline Value softmax_cross_entropy(const Value& logits, std::span<const int> targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         logits.shape().str());
  Tensor probs = logits.data();
  softmax_rows_inplace(probs);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c)
      throw ContractError("target index out of range");
    loss -= logits.data()(i, targets[i]) - logsumexp({logits.data().data() + i * c, c});
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return make_op(Tensor::scalar(loss), {logits},
                 [probs = std::move(probs), tg = std::move(tg), c](detail::Node& self) {
                   auto& g = detail::grad_of(self, 0);
                   const double s = self.grad[0];
                   for (std::size_t i = 0; i < tg.size(); ++i) {
                     for (std::size_t j = 0; j < c; ++j) g(i, j) += s * probs(i, j);
                     g(i, tg[i]) -= s;
                   }
                 });
}

}  // namespace piie
