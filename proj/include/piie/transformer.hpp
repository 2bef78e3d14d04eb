#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/errors.hpp"
#include "piie/parameter.hpp"

namespace piie {

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 128;
  std::size_t ff_dim = 256;
  double dropout = 0.1;

  void validate() const {
    if (heads == 0 || model_dim % heads != 0)
      throw ValidationError("transformer width " + std::to_string(model_dim) + " not divisible by " +
                            std::to_string(heads) + " heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  }
};

// Training-time switches for one forward pass. With training off (or no
// rng) every layer is deterministic.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;

  double rate(double r) const { return training && rng ? r : 0.0; }
};

// Marks real tokens (1) versus padding (0).
struct AttentionMask {
  std::vector<std::uint8_t> keep;

  static AttentionMask all(std::size_t n) { return {std::vector<std::uint8_t>(n, 1)}; }

  std::size_t size() const { return keep.size(); }

  void validate(std::size_t n) const {
    if (keep.size() != n)
      throw DimensionError("attention mask of length " + std::to_string(keep.size()) + " for " + std::to_string(n) +
                           " positions");
    for (auto k : keep)
      if (k) return;
    throw ContractError("attention mask has no unmasked position");
  }

  // Additive key bias: 0 for real tokens, -inf for padding.
  Tensor key_bias() const {
    Tensor b = Tensor::matrix(1, keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j) b[j] = keep[j] ? 0.0 : -std::numeric_limits<double>::infinity();
    return b;
  }
};

inline Tensor sinusoidal_positions(std::size_t n, std::size_t dim) {
  Tensor pe = Tensor::matrix(n, dim);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    w_ = store.add(prefix + ".W", xavier_uniform(in, out, rng));
    b_ = store.add(prefix + ".b", zeros_vector(out));
  }
  Value operator()(const Value& x) const { return affine(x, w_, b_); }
  const Value& weight() const { return w_; }
  const Value& bias() const { return b_; }

 private:
  Value w_, b_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, std::size_t dim) {
    gain_ = store.add(prefix + ".gain", ones_vector(dim));
    bias_ = store.add(prefix + ".bias", zeros_vector(dim));
  }
  Value operator()(const Value& x) const { return layer_norm(x, gain_, bias_); }

 private:
  Value gain_, bias_;
};

// Multi-head scaled dot-product self-attention. Padding keys get -inf before
// the softmax so they receive exactly zero weight.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t heads, Rng& rng)
      : dim_(dim), heads_(heads) {
    if (heads == 0 || dim % heads != 0)
      throw ValidationError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads));
    q_ = Linear(store, prefix + ".q", dim, dim, rng);
    k_ = Linear(store, prefix + ".k", dim, dim, rng);
    v_ = Linear(store, prefix + ".v", dim, dim, rng);
    o_ = Linear(store, prefix + ".o", dim, dim, rng);
  }

  std::size_t heads() const { return heads_; }

  // `weights`, when given, receives one [n x n] attention matrix per head.
  Value operator()(const Value& h, const AttentionMask& mask, std::vector<Tensor>* weights = nullptr) const {
    const std::size_t n = h.rows();
    mask.validate(n);
    if (h.cols() != dim_)
      throw DimensionError("self_attention: input " + h.shape().str() + " for width " + std::to_string(dim_));
    const std::size_t dk = dim_ / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    const Value q = q_(h), k = k_(h), v = v_(h);
    const Value key_bias = Value::constant(mask.key_bias());
    std::vector<Value> outs;
    outs.reserve(heads_);
    if (weights) weights->clear();
    for (std::size_t head = 0; head < heads_; ++head) {
      const Value qh = slice_cols(q, head * dk, dk);
      const Value kh = slice_cols(k, head * dk, dk);
      const Value vh = slice_cols(v, head * dk, dk);
      const Value scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt), key_bias);
      const Value p = softmax_rows(scores);
      if (weights) weights->push_back(p.data());
      outs.push_back(matmul(p, vh));
    }
    return o_(heads_ == 1 ? outs.front() : concat_cols(outs));
  }

 private:
  std::size_t dim_ = 0, heads_ = 1;
  Linear q_, k_, v_, o_;
};

// Post-norm encoder block: LN(x + Attn(x)), then LN(x + FFN(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& prefix, const TransformerConfig& cfg, Rng& rng)
      : dropout_(cfg.dropout) {
    attn_ = MultiHeadAttention(store, prefix + ".attn", cfg.model_dim, cfg.heads, rng);
    ln1_ = LayerNorm(store, prefix + ".ln1", cfg.model_dim);
    ff1_ = Linear(store, prefix + ".ff1", cfg.model_dim, cfg.ff_dim, rng);
    ff2_ = Linear(store, prefix + ".ff2", cfg.ff_dim, cfg.model_dim, rng);
    ln2_ = LayerNorm(store, prefix + ".ln2", cfg.model_dim);
  }

  Value operator()(const Value& x, const AttentionMask& mask, ForwardContext& ctx,
                   std::vector<Tensor>* weights = nullptr) const {
    const Value a = dropout(attn_(x, mask, weights), ctx.rate(dropout_), ctx.rng);
    const Value h = ln1_(add(x, a));
    const Value f = dropout(ff2_(relu(ff1_(h))), ctx.rate(dropout_), ctx.rng);
    return ln2_(add(h, f));
  }

  const MultiHeadAttention& attention() const { return attn_; }

 private:
  double dropout_ = 0.0;
  MultiHeadAttention attn_;
  LayerNorm ln1_, ln2_;
  Linear ff1_, ff2_;
};

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                     const TransformerConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    cfg.validate();
    in_ = Linear(store, prefix + ".in", input_dim, cfg.model_dim, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      blocks_.emplace_back(store, prefix + ".block" + std::to_string(l), cfg, rng);
  }

  std::size_t output_dim() const { return cfg_.model_dim; }
  const std::vector<TransformerBlock>& blocks() const { return blocks_; }

  // `weights`, when given, receives the per-head attention matrices of every
  // block in order.
  Value encode(const Value& x, const AttentionMask& mask, ForwardContext& ctx,
               std::vector<Tensor>* weights = nullptr) const {
    if (!x.data().all_finite()) throw NumericError("encode_transformer: non-finite input");
    mask.validate(x.rows());
    Value h = add(in_(x), Value::constant(sinusoidal_positions(x.rows(), cfg_.model_dim)));
    h = dropout(h, ctx.rate(cfg_.dropout), ctx.rng);
    std::vector<Tensor> block_weights;
    for (const auto& block : blocks_) {
      h = block(h, mask, ctx, weights ? &block_weights : nullptr);
      if (weights) weights->insert(weights->end(), block_weights.begin(), block_weights.end());
    }
    return h;
  }

 private:
  TransformerConfig cfg_;
  Linear in_;
  std::vector<TransformerBlock> blocks_;
};

}  // namespace piie
