#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "piie/errors.hpp"
#include "piie/tags.hpp"

namespace piie {

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;

  static PrfScores from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    PrfScores s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
  }

  friend bool operator==(const PrfScores&, const PrfScores&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t tokens = 0, correct_tokens = 0;
  std::array<PrfScores, category_count> per_category{};

  const PrfScores& category(Category c) const { return per_category[static_cast<std::size_t>(c)]; }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

using TagSequences = std::vector<std::vector<TagId>>;
using SpanSets = std::vector<std::vector<PiiSpan>>;

struct TokenCounts {
  std::size_t tokens = 0, correct = 0;
};

inline TokenCounts count_tokens(const TagSequences& gold, const TagSequences& pred) {
  if (gold.size() != pred.size())
    throw ContractError("token_accuracy: " + std::to_string(gold.size()) + " gold vs " + std::to_string(pred.size()) +
                        " predicted sentences");
  TokenCounts c;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size())
      throw ContractError("token_accuracy: sentence " + std::to_string(s) + " has " + std::to_string(gold[s].size()) +
                          " gold vs " + std::to_string(pred[s].size()) + " predicted tags");
    c.tokens += gold[s].size();
    for (std::size_t i = 0; i < gold[s].size(); ++i) c.correct += gold[s][i] == pred[s][i];
  }
  return c;
}

// Micro token accuracy over the corpus, O tags included.
inline double token_accuracy(const TagSequences& gold, const TagSequences& pred) {
  const auto c = count_tokens(gold, pred);
  return c.tokens ? static_cast<double>(c.correct) / static_cast<double>(c.tokens) : 0.0;
}

// Strict span matching (category, start and end all equal), micro-averaged.
// Token fields of the report are left at zero.
inline MetricsReport entity_prf(const SpanSets& gold, const SpanSets& pred) {
  if (gold.size() != pred.size()) throw ContractError("entity_prf: sentence counts differ");
  std::array<std::size_t, category_count> tp{}, fp{}, fn{};
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const std::set<PiiSpan> g(gold[s].begin(), gold[s].end());
    const std::set<PiiSpan> p(pred[s].begin(), pred[s].end());
    for (const auto& span : p) (g.count(span) ? tp : fp)[static_cast<std::size_t>(span.category)]++;
    for (const auto& span : g)
      if (!p.count(span)) fn[static_cast<std::size_t>(span.category)]++;
  }
  MetricsReport r;
  for (std::size_t c = 0; c < category_count; ++c) {
    r.per_category[c] = PrfScores::from_counts(tp[c], fp[c], fn[c]);
    r.tp += tp[c];
    r.fp += fp[c];
    r.fn += fn[c];
  }
  const auto micro = PrfScores::from_counts(r.tp, r.fp, r.fn);
  r.precision = micro.precision;
  r.recall = micro.recall;
  r.f1 = micro.f1;
  return r;
}

// Token accuracy plus span scores from tag sequences.
inline MetricsReport evaluate_tags(const TagSequences& gold, const TagSequences& pred) {
  const auto counts = count_tokens(gold, pred);
  SpanSets gs, ps;
  gs.reserve(gold.size());
  ps.reserve(pred.size());
  for (std::size_t s = 0; s < gold.size(); ++s) {
    gs.push_back(iob_to_spans(std::span<const TagId>(gold[s])));
    ps.push_back(iob_to_spans(std::span<const TagId>(pred[s])));
  }
  MetricsReport r = entity_prf(gs, ps);
  r.tokens = counts.tokens;
  r.correct_tokens = counts.correct;
  r.accuracy = counts.tokens ? static_cast<double>(counts.correct) / static_cast<double>(counts.tokens) : 0.0;
  return r;
}

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // per sentence

  std::vector<std::size_t> indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> complement(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(i);
    return out;
  }
};

// Seeded shuffle, then round-robin fold assignment.
inline FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("kfold_split needs k >= 2");
  if (n < k) throw ContractError("kfold_split: " + std::to_string(n) + " items for " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldSplit split{k, std::vector<std::size_t>(n)};
  for (std::size_t pos = 0; pos < n; ++pos) split.fold_of[order[pos]] = pos % k;
  return split;
}

template <class T>
FoldSplit kfold_split(const std::vector<T>& items, std::size_t k, std::uint64_t seed) {
  return kfold_split(items.size(), k, seed);
}

template <class T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items.at(i));
  return out;
}

}  // namespace piie
