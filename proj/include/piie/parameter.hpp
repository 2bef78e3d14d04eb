#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/errors.hpp"

namespace piie {

// A named trainable leaf. `trainable` is structural (false for e.g. fixed
// lookup tables); `frozen` is the transfer-time switch. Either one keeps the
// optimizer away from the data.
struct Parameter {
  std::string name;
  Value value;
  bool trainable = true;
  bool frozen = false;

  bool updatable() const { return trainable && !frozen; }
  std::size_t numel() const { return value.size(); }
};

// Owns the parameters of one model, in registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Value add(std::string name, Tensor init, bool trainable = true) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back(Parameter{std::move(name), Value::leaf(std::move(init)), trainable, false});
    return params_.back().value;
  }

  Parameter* find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  Parameter& at(std::string_view name) {
    auto* p = find(name);
    if (!p) throw ContractError("no parameter named '" + std::string(name) + "'");
    return *p;
  }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  // Sets `frozen` on every parameter whose name starts with `prefix`; returns
  // how many matched.
  std::size_t set_frozen(std::string_view prefix, bool frozen) {
    std::size_t n = 0;
    for (auto& p : params_) {
      if (has_prefix(p.name, prefix)) {
        p.frozen = frozen;
        ++n;
      }
    }
    return n;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value.data());
    return out;
  }

  void restore(const std::vector<Tensor>& snap) {
    if (snap.size() != params_.size()) throw ContractError("snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) params_[i].value.mutable_data() = snap[i];
  }

  // Dotted-prefix match: "pii-gcn" matches "pii-gcn.layer0.W" and "pii-gcn"
  // but not "pii-gcnx".
  static bool has_prefix(std::string_view name, std::string_view prefix) {
    if (name.size() < prefix.size() || name.substr(0, prefix.size()) != prefix) return false;
    return name.size() == prefix.size() || name[prefix.size()] == '.';
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline Tensor zeros_vector(std::size_t n) { return Tensor(Shape{n}); }
inline Tensor ones_vector(std::size_t n) { return Tensor(Shape{n}, 1.0); }

}  // namespace piie
