#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/errors.hpp"
#include "piie/log.hpp"
#include "piie/parameter.hpp"
#include "piie/tags.hpp"

namespace piie {

inline constexpr double forbidden_score = -1e4;

// Allowed moves of a linear-chain CRF over k tags (1 = allowed).
struct TransitionMask {
  std::size_t k = 0;
  std::vector<std::uint8_t> start;  // [k]
  std::vector<std::uint8_t> trans;  // [k x k], from-major

  static TransitionMask none(std::size_t k) {
    return {k, std::vector<std::uint8_t>(k, 1), std::vector<std::uint8_t>(k * k, 1)};
  }

  // IOB constraints over the 15-tag scheme: no I-c at the start, after O, or
  // after a tag of another category.
  static TransitionMask iob() {
    TransitionMask m = none(TagScheme::size);
    for (std::size_t to = 0; to < m.k; ++to) {
      m.start[to] = TagScheme::allowed_start(static_cast<TagId>(to));
      for (std::size_t from = 0; from < m.k; ++from)
        m.trans[from * m.k + to] = TagScheme::allowed_transition(static_cast<TagId>(from), static_cast<TagId>(to));
    }
    return m;
  }

  bool allows_start(std::size_t to) const { return start[to] != 0; }
  bool allows(std::size_t from, std::size_t to) const { return trans[from * k + to] != 0; }
};

struct TagPath {
  std::vector<TagId> tags;
  double score = 0.0;
};

namespace detail {

struct CrfScores {
  std::size_t n = 0, k = 0;
  const Tensor* e = nullptr;
  Tensor t;                  // [k x k] with forbidden moves replaced
  std::vector<double> start, end;
};

inline CrfScores effective_scores(const Tensor& e, const Tensor& t, const Tensor& start, const Tensor& end,
                                  const TransitionMask* mask) {
  const std::size_t n = e.rows(), k = e.cols();
  if (n == 0) throw ContractError("CRF needs at least one position");
  if (t.rows() != k || t.cols() != k || start.size() != k || end.size() != k)
    throw DimensionError("CRF: emissions " + e.shape().str() + " with transitions " + t.shape().str());
  if (mask && mask->k != k) throw DimensionError("CRF: transition mask for " + std::to_string(mask->k) + " tags");
  if (!e.all_finite()) throw NumericError("CRF: non-finite emission scores");
  CrfScores s;
  s.n = n;
  s.k = k;
  s.e = &e;
  s.t = t;
  s.start.assign(start.values().begin(), start.values().end());
  s.end.assign(end.values().begin(), end.values().end());
  if (mask) {
    for (std::size_t j = 0; j < k; ++j) {
      if (!mask->allows_start(j)) s.start[j] = forbidden_score;
      for (std::size_t i = 0; i < k; ++i)
        if (!mask->allows(i, j)) s.t(i, j) = forbidden_score;
    }
  }
  return s;
}

inline double path_score(const CrfScores& s, std::span<const TagId> path) {
  if (path.size() != s.n)
    throw DimensionError("CRF: path of length " + std::to_string(path.size()) + " for " + std::to_string(s.n) +
                         " positions");
  for (auto y : path)
    if (y < 0 || static_cast<std::size_t>(y) >= s.k) throw ContractError("CRF: tag index out of range");
  double score = s.start[path[0]] + s.end[path[s.n - 1]];
  for (std::size_t i = 0; i < s.n; ++i) score += (*s.e)(i, path[i]);
  for (std::size_t i = 1; i < s.n; ++i) score += s.t(path[i - 1], path[i]);
  return score;
}

}  // namespace detail

// log of the summed exp-scores of all tag paths (forward algorithm). The
// backward rule distributes the incoming gradient as position and pair
// marginals. Entries replaced by the mask receive no gradient.
inline Value log_partition(const Value& e, const Value& t, const Value& start, const Value& end,
                           const TransitionMask* mask = nullptr) {
  auto s = std::make_shared<detail::CrfScores>(
      detail::effective_scores(e.data(), t.data(), start.data(), end.data(), mask));
  const std::size_t n = s->n, k = s->k;
  auto alpha = std::make_shared<Tensor>(Tensor::matrix(n, k));
  std::vector<double> buf(k);
  for (std::size_t j = 0; j < k; ++j) (*alpha)(0, j) = s->start[j] + e.data()(0, j);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t p = 0; p < k; ++p) buf[p] = (*alpha)(i - 1, p) + s->t(p, j);
      (*alpha)(i, j) = e.data()(i, j) + logsumexp(buf);
    }
  for (std::size_t j = 0; j < k; ++j) buf[j] = (*alpha)(n - 1, j) + s->end[j];
  const double log_z = logsumexp(buf);
  if (!std::isfinite(log_z)) throw NumericError("CRF: non-finite log-partition");

  std::shared_ptr<const TransitionMask> m = mask ? std::make_shared<TransitionMask>(*mask) : nullptr;
  return make_op(Tensor::scalar(log_z), {e, t, start, end}, [s, alpha, m, log_z](detail::Node& self) {
    const std::size_t n = s->n, k = s->k;
    const double g = self.grad[0];
    const Tensor& E = self.parents[0]->value;
    Tensor beta = Tensor::matrix(n, k);
    std::vector<double> buf(k);
    for (std::size_t j = 0; j < k; ++j) beta(n - 1, j) = s->end[j];
    for (std::size_t i = n - 1; i-- > 0;)
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t q = 0; q < k; ++q) buf[q] = s->t(j, q) + E(i + 1, q) + beta(i + 1, q);
        beta(i, j) = logsumexp(buf);
      }
    if (detail::wants(self, 0)) {
      auto& ge = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) ge(i, j) += g * std::exp((*alpha)(i, j) + beta(i, j) - log_z);
    }
    if (detail::wants(self, 1)) {
      auto& gt = detail::grad_of(self, 1);
      for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t q = 0; q < k; ++q) {
            if (m && !m->allows(p, q)) continue;
            gt(p, q) += g * std::exp((*alpha)(i, p) + s->t(p, q) + E(i + 1, q) + beta(i + 1, q) - log_z);
          }
    }
    if (detail::wants(self, 2)) {
      auto& gs = detail::grad_of(self, 2);
      for (std::size_t j = 0; j < k; ++j)
        if (!m || m->allows_start(j)) gs[j] += g * std::exp((*alpha)(0, j) + beta(0, j) - log_z);
    }
    if (detail::wants(self, 3)) {
      auto& gd = detail::grad_of(self, 3);
      for (std::size_t j = 0; j < k; ++j) gd[j] += g * std::exp((*alpha)(n - 1, j) + beta(n - 1, j) - log_z);
    }
  });
}

// Score of one tag path as a differentiable scalar.
inline Value path_score(const Value& e, const Value& t, const Value& start, const Value& end,
                        std::span<const TagId> path, const TransitionMask* mask = nullptr) {
  const auto s = detail::effective_scores(e.data(), t.data(), start.data(), end.data(), mask);
  const double score = detail::path_score(s, path);
  std::vector<TagId> y(path.begin(), path.end());
  std::shared_ptr<const TransitionMask> m = mask ? std::make_shared<TransitionMask>(*mask) : nullptr;
  return make_op(Tensor::scalar(score), {e, t, start, end}, [y = std::move(y), m](detail::Node& self) {
    const double g = self.grad[0];
    const std::size_t n = y.size();
    if (detail::wants(self, 0)) {
      auto& ge = detail::grad_of(self, 0);
      for (std::size_t i = 0; i < n; ++i) ge(i, y[i]) += g;
    }
    if (detail::wants(self, 1)) {
      auto& gt = detail::grad_of(self, 1);
      for (std::size_t i = 1; i < n; ++i)
        if (!m || m->allows(y[i - 1], y[i])) gt(y[i - 1], y[i]) += g;
    }
    if (detail::wants(self, 2) && (!m || m->allows_start(y[0]))) detail::grad_of(self, 2)[y[0]] += g;
    if (detail::wants(self, 3)) detail::grad_of(self, 3)[y[n - 1]] += g;
  });
}

inline bool path_respects(const TransitionMask& mask, std::span<const TagId> path) {
  if (path.empty()) return true;
  if (!mask.allows_start(path[0])) return false;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!mask.allows(path[i - 1], path[i])) return false;
  return true;
}

// Highest-scoring path. Ties go to the lower tag index.
inline TagPath viterbi(const Tensor& e, const Tensor& t, const Tensor& start, const Tensor& end,
                       const TransitionMask* mask = nullptr) {
  const auto s = detail::effective_scores(e, t, start, end, mask);
  const std::size_t n = s.n, k = s.k;
  Tensor delta = Tensor::matrix(n, k);
  std::vector<std::vector<TagId>> back(n, std::vector<TagId>(k, 0));
  for (std::size_t j = 0; j < k; ++j) delta(0, j) = s.start[j] + e(0, j);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      TagId arg = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double v = delta(i - 1, p) + s.t(p, j);
        if (v > best) {
          best = v;
          arg = static_cast<TagId>(p);
        }
      }
      delta(i, j) = best + e(i, j);
      back[i][j] = arg;
    }
  double best = -std::numeric_limits<double>::infinity();
  TagId last = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double v = delta(n - 1, j) + s.end[j];
    if (v > best) {
      best = v;
      last = static_cast<TagId>(j);
    }
  }
  TagPath out;
  out.score = best;
  out.tags.assign(n, 0);
  out.tags[n - 1] = last;
  for (std::size_t i = n - 1; i > 0; --i) out.tags[i - 1] = back[i][out.tags[i]];
  return out;
}

// Per-position argmax with no transition model. Ties go to the lower index.
inline TagPath softmax_decode(const Tensor& e) {
  const std::size_t n = e.rows(), k = e.cols();
  if (n == 0) throw ContractError("softmax_decode needs at least one position");
  TagPath out;
  out.tags.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (e(i, j) > e(i, arg)) arg = j;
    out.tags.push_back(static_cast<TagId>(arg));
    out.score += e(i, arg);
  }
  return out;
}

// Transition, start and end scores as trainable parameters.
class Crf {
 public:
  Crf() = default;
  Crf(ParameterStore& store, const std::string& prefix, std::size_t tags) : k_(tags) {
    transitions_ = store.add(prefix + ".transitions", Tensor::matrix(tags, tags));
    start_ = store.add(prefix + ".start", zeros_vector(tags));
    end_ = store.add(prefix + ".end", zeros_vector(tags));
  }

  std::size_t tags() const { return k_; }
  const Value& transitions() const { return transitions_; }
  const Value& start() const { return start_; }
  const Value& end() const { return end_; }

  Value log_partition(const Value& e, const TransitionMask* mask = nullptr) const {
    return piie::log_partition(e, transitions_, start_, end_, mask);
  }

  // log_partition - score(gold). A gold path that breaks the mask is scored
  // with the forbidden constant, so the loss stays defined but large.
  Value nll(const Value& e, std::span<const TagId> gold, const TransitionMask* mask = nullptr) const {
    if (mask && !path_respects(*mask, gold)) log::warning("CRF: gold path violates the transition constraints");
    return sub(log_partition(e, mask), path_score(e, transitions_, start_, end_, gold, mask));
  }

  TagPath decode(const Tensor& e, const TransitionMask* mask) const {
    return viterbi(e, transitions_.data(), start_.data(), end_.data(), mask);
  }

 private:
  std::size_t k_ = 0;
  Value transitions_, start_, end_;
};

}  // namespace piie
