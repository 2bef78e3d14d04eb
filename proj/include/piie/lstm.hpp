#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/parameter.hpp"

namespace piie {

// One LSTM step over a batch of rows. `state` is [B x 2h] holding [h | c];
// W is [(din + h) x 4h] with gate blocks (input, forget, cell, output), b is
// [4h]. Rows with active[r] == 0 carry their state through unchanged, which
// lets sequences of different lengths share one step.
inline Value lstm_step(const Value& x, const Value& state, const Value& w, const Value& b,
                       const std::vector<std::uint8_t>& active) {
  const std::size_t batch = x.rows(), din = x.cols();
  const std::size_t h = state.cols() / 2;
  if (state.rows() != batch || state.cols() != 2 * h)
    throw DimensionError("lstm_step: input " + x.shape().str() + " with state " + state.shape().str());
  if (w.rows() != din + h || w.cols() != 4 * h || b.size() != 4 * h)
    throw DimensionError("lstm_step: weights " + w.shape().str() + " / bias " + b.shape().str() + " for input " +
                         x.shape().str() + " and hidden " + std::to_string(h));
  if (active.size() != batch) throw DimensionError("lstm_step: mask length differs from batch");

  struct Cache {
    Tensor xh;     // [B x (din + h)]
    Tensor gates;  // activated i, f, g, o  [B x 4h]
    Tensor c_new;  // [B x h]
    std::vector<std::uint8_t> active;
  };
  auto cache = std::make_shared<Cache>();
  cache->active = active;
  cache->xh = Tensor::matrix(batch, din + h);
  cache->xh.mat().leftCols(static_cast<Eigen::Index>(din)) = x.data().mat();
  cache->xh.mat().rightCols(static_cast<Eigen::Index>(h)) = state.data().mat().leftCols(static_cast<Eigen::Index>(h));
  cache->gates = Tensor::matrix(batch, 4 * h);
  cache->gates.mat().noalias() = cache->xh.mat() * w.data().mat();
  cache->c_new = Tensor::matrix(batch, h);

  Tensor out = state.data();
  const auto& S = state.data();
  for (std::size_t r = 0; r < batch; ++r) {
    double* z = cache->gates.data() + r * 4 * h;
    for (std::size_t k = 0; k < 4 * h; ++k) z[k] += b.data()[k];
    for (std::size_t k = 0; k < h; ++k) {
      z[k] = sigmoid_scalar(z[k]);
      z[h + k] = sigmoid_scalar(z[h + k]);
      z[2 * h + k] = std::tanh(z[2 * h + k]);
      z[3 * h + k] = sigmoid_scalar(z[3 * h + k]);
    }
    if (!active[r]) continue;
    for (std::size_t k = 0; k < h; ++k) {
      const double c = z[h + k] * S(r, h + k) + z[k] * z[2 * h + k];
      cache->c_new(r, k) = c;
      out(r, h + k) = c;
      out(r, k) = z[3 * h + k] * std::tanh(c);
    }
  }

  return make_op(std::move(out), {x, state, w, b}, [cache, batch, din, h](detail::Node& self) {
    const auto& S = self.parents[1]->value;
    const auto& W = self.parents[2]->value;
    Tensor dz = Tensor::matrix(batch, 4 * h);
    Tensor dc_prev = Tensor::matrix(batch, h);
    for (std::size_t r = 0; r < batch; ++r) {
      if (!cache->active[r]) continue;
      const double* z = cache->gates.data() + r * 4 * h;
      for (std::size_t k = 0; k < h; ++k) {
        const double i = z[k], f = z[h + k], g = z[2 * h + k], o = z[3 * h + k];
        const double tc = std::tanh(cache->c_new(r, k));
        const double dh = self.grad(r, k);
        const double dc = self.grad(r, h + k) + dh * o * (1.0 - tc * tc);
        dz(r, k) = dc * g * i * (1.0 - i);
        dz(r, h + k) = dc * S(r, h + k) * f * (1.0 - f);
        dz(r, 2 * h + k) = dc * i * (1.0 - g * g);
        dz(r, 3 * h + k) = dh * tc * o * (1.0 - o);
        dc_prev(r, k) = dc * f;
      }
    }
    const bool need_xh = detail::wants(self, 0) || detail::wants(self, 1);
    Tensor dxh;
    if (need_xh) {
      dxh = Tensor::matrix(batch, din + h);
      dxh.mat().noalias() = dz.mat() * W.mat().transpose();
    }
    if (detail::wants(self, 0))
      detail::grad_of(self, 0).mat() += dxh.mat().leftCols(static_cast<Eigen::Index>(din));
    if (detail::wants(self, 1)) {
      auto& gs = detail::grad_of(self, 1);
      for (std::size_t r = 0; r < batch; ++r) {
        if (!cache->active[r]) {
          for (std::size_t k = 0; k < 2 * h; ++k) gs(r, k) += self.grad(r, k);
          continue;
        }
        for (std::size_t k = 0; k < h; ++k) {
          gs(r, k) += dxh(r, din + k);
          gs(r, h + k) += dc_prev(r, k);
        }
      }
    }
    if (detail::wants(self, 2)) detail::grad_of(self, 2).mat().noalias() += cache->xh.mat().transpose() * dz.mat();
    if (detail::wants(self, 3)) detail::grad_of(self, 3).mat() += dz.mat().colwise().sum();
  });
}

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& prefix, std::size_t input_dim, std::size_t hidden, Rng& rng)
      : input_dim_(input_dim), hidden_(hidden) {
    w_ = store.add(prefix + ".W", xavier_uniform(input_dim + hidden, 4 * hidden, rng));
    b_ = store.add(prefix + ".b", zeros_vector(4 * hidden));
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }

  Value initial_state(std::size_t batch) const { return Value::constant(Tensor::matrix(batch, 2 * hidden_)); }

  Value step(const Value& x, const Value& state, const std::vector<std::uint8_t>& active) const {
    return lstm_step(x, state, w_, b_, active);
  }

  // Hidden part [B x h] of a state.
  Value hidden_of(const Value& state) const { return slice_cols(state, 0, hidden_); }

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  Value w_, b_;
};

// Word-level bidirectional LSTM: [n x din] -> [n x 2h], row i is
// [forward hidden at i | backward hidden at i].
class BiLstmEncoder {
 public:
  BiLstmEncoder() = default;
  BiLstmEncoder(ParameterStore& store, const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                Rng& rng)
      : fwd_(store, prefix + ".fwd", input_dim, hidden, rng), bwd_(store, prefix + ".bwd", input_dim, hidden, rng) {}

  std::size_t output_dim() const { return 2 * fwd_.hidden(); }

  Value encode(const Value& x) const {
    const std::size_t n = x.rows();
    if (n == 0) throw ContractError("encode_bilstm needs at least one position");
    if (x.cols() != fwd_.input_dim())
      throw DimensionError("encode_bilstm: input " + x.shape().str() + " for input width " +
                           std::to_string(fwd_.input_dim()));
    const std::vector<std::uint8_t> one{1};
    std::vector<Value> fw(n), bw(n);
    Value s = fwd_.initial_state(1);
    for (std::size_t i = 0; i < n; ++i) {
      s = fwd_.step(slice_rows(x, i, 1), s, one);
      fw[i] = fwd_.hidden_of(s);
    }
    s = bwd_.initial_state(1);
    for (std::size_t i = n; i-- > 0;) {
      s = bwd_.step(slice_rows(x, i, 1), s, one);
      bw[i] = bwd_.hidden_of(s);
    }
    return concat_cols({concat_rows(fw), concat_rows(bw)});
  }

 private:
  LstmCell fwd_, bwd_;
};

}  // namespace piie
