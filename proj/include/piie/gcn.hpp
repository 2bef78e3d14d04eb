#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/errors.hpp"
#include "piie/parameter.hpp"

namespace piie {

// Symmetric 0/1 dependency adjacency with an empty diagonal.
struct DepAdjacency {
  Tensor a;

  std::size_t size() const { return a.rows(); }
  std::size_t edge_count() const {
    std::size_t e = 0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) e += a(i, j) != 0.0;
    return e;
  }
};

// Heads are 1-based with 0 marking the root. Each non-root attachment adds one
// undirected edge.
inline DepAdjacency build_adjacency(std::span<const int> heads) {
  const std::size_t n = heads.size();
  DepAdjacency adj{Tensor::matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int h = heads[i];
    if (h < 0 || static_cast<std::size_t>(h) > n)
      throw ValidationError("token " + std::to_string(i + 1) + " has head " + std::to_string(h) + " outside 0.." +
                            std::to_string(n));
    if (static_cast<std::size_t>(h) == i + 1)
      throw ValidationError("token " + std::to_string(i + 1) + " is its own head");
    if (h == 0) continue;
    const auto j = static_cast<std::size_t>(h - 1);
    adj.a(i, j) = 1.0;
    adj.a(j, i) = 1.0;
  }
  return adj;
}

// D^-1/2 (I + A) D^-1/2 with D the degree matrix of I + A.
struct NormalizedAdjacency {
  Tensor a;

  std::size_t size() const { return a.rows(); }
};

inline NormalizedAdjacency normalize_adjacency(const DepAdjacency& adj) {
  const std::size_t n = adj.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < n; ++j) deg += adj.a(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  NormalizedAdjacency out{Tensor::matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = (i == j ? 1.0 : 0.0) + adj.a(i, j);
      if (a != 0.0) out.a(i, j) = inv_sqrt[i] * a * inv_sqrt[j];
    }
  return out;
}

inline NormalizedAdjacency normalized_adjacency(std::span<const int> heads) {
  return normalize_adjacency(build_adjacency(heads));
}

// ReLU(Ã H W)
inline Value gcn_layer(const Value& h, const Value& a_norm, const Value& w) {
  if (a_norm.rows() != h.rows() || a_norm.cols() != h.rows())
    throw DimensionError("gcn_layer: adjacency " + a_norm.shape().str() + " for features " + h.shape().str());
  if (w.rows() != h.cols())
    throw DimensionError("gcn_layer: features " + h.shape().str() + " with weight " + w.shape().str());
  return relu(matmul(matmul(a_norm, h), w));
}

class GcnStack {
 public:
  GcnStack() = default;
  GcnStack(ParameterStore& store, const std::string& prefix, std::size_t input_dim, std::size_t width,
           std::size_t layers, Rng& rng)
      : input_dim_(input_dim), width_(layers == 0 ? input_dim : width) {
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < layers; ++l) {
      weights_.push_back(store.add(prefix + ".layer" + std::to_string(l) + ".W", xavier_uniform(in, width, rng)));
      in = width;
    }
  }

  std::size_t layers() const { return weights_.size(); }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return width_; }
  const std::vector<Value>& weights() const { return weights_; }

  Value forward(const Value& x, const NormalizedAdjacency& a) const {
    if (x.cols() != input_dim_)
      throw DimensionError("gcn_forward: features " + x.shape().str() + " for input width " +
                           std::to_string(input_dim_));
    if (weights_.empty()) return x;
    const Value a_norm = Value::constant(a.a);
    Value h = x;
    for (const auto& w : weights_) h = gcn_layer(h, a_norm, w);
    return h;
  }

 private:
  std::size_t input_dim_ = 0, width_ = 0;
  std::vector<Value> weights_;
};

inline Value gcn_forward(const Value& x, const DepAdjacency& adj, const GcnStack& stack) {
  return stack.forward(x, normalize_adjacency(adj));
}

}  // namespace piie
