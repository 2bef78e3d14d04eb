#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/errors.hpp"

namespace piie {

struct GradCheckOptions {
  double eps = 1e-3;
  double tol = 1e-4;
  // Move input coordinates with |x| < 10*eps to +-10*eps before checking, so
  // central differences do not straddle a ReLU kink at the inputs.
  bool shift_kinks = true;
  // Denominator floor. Gradients that are exactly zero (a key bias, which
  // softmax cancels) leave rounding noise of about 1e-12 on the numeric side.
  double zero_floor = 1e-6;
  // Compare each input's gradient as one vector. Per-entry ratios fail on
  // entries that are tiny by accident, where the O(eps^2) truncation error
  // of the central difference is larger than the entry itself.
  bool whole_input = true;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<double> input_max_rel_error;
  std::vector<bool> input_passed;
  bool passed = true;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// ||a - n|| / max(||a||, ||n||, floor)
inline double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
    na += analytic[j] * analytic[j];
    nn += numeric[j] * numeric[j];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

// Compares analytic gradients of scalar f() with respect to each leaf in
// `leaves` against central differences. f must rebuild its graph from the
// leaves on every call; leaves are perturbed in place and restored.
inline GradCheckReport grad_check_leaves(const std::function<Value()>& f, std::vector<Value> leaves,
                                         const GradCheckOptions& opt = {}) {
  auto eval = [&]() {
    const double v = f().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  if (opt.shift_kinks) {
    const double edge = 10.0 * opt.eps;
    for (auto& leaf : leaves)
      for (auto& x : leaf.mutable_data().values())
        if (std::abs(x) < edge) x = x < 0.0 ? -edge : edge;
  }

  for (auto& leaf : leaves) leaf.zero_grad();
  Value out = f();
  if (!std::isfinite(out.item())) throw NumericError("grad_check: non-finite function value");
  backward(out);

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) {
    if (!leaf.has_grad()) leaf.mutable_grad();
    analytic.push_back(leaf.grad());
    if (!leaf.grad().all_finite()) throw NumericError("grad_check: non-finite analytic gradient");
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Tensor& x = leaves[i].mutable_data();
    Tensor numeric(x.shape());
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double orig = x[j];
      x[j] = orig + opt.eps;
      const double up = eval();
      x[j] = orig - opt.eps;
      const double down = eval();
      x[j] = orig;
      numeric[j] = (up - down) / (2.0 * opt.eps);
    }
    double worst = 0.0;
    if (opt.whole_input) {
      worst = relative_error(analytic[i], numeric, opt.zero_floor);
    } else {
      for (std::size_t j = 0; j < x.size(); ++j)
        worst = std::max(worst, relative_error(analytic[i][j], numeric[j], opt.zero_floor));
    }
    report.input_max_rel_error.push_back(worst);
    report.input_passed.push_back(worst <= opt.tol);
    report.max_rel_error = std::max(report.max_rel_error, worst);
    report.passed = report.passed && worst <= opt.tol;
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return report;
}

// Functional form: f receives fresh leaves built from `inputs`.
inline GradCheckReport grad_check(const std::function<Value(std::span<const Value>)>& f,
                                  std::vector<Tensor> inputs, const GradCheckOptions& opt = {}) {
  std::vector<Value> leaves;
  leaves.reserve(inputs.size());
  for (auto& t : inputs) leaves.push_back(Value::leaf(std::move(t)));
  return grad_check_leaves([&]() { return f(leaves); }, leaves, opt);
}

}  // namespace piie
