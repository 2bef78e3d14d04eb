#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "piie/autodiff.hpp"
#include "piie/crf.hpp"
#include "piie/embedder.hpp"
#include "piie/gcn.hpp"
#include "piie/grad_check.hpp"
#include "piie/lstm.hpp"
#include "piie/parameter.hpp"
#include "piie/tags.hpp"
#include "piie/transformer.hpp"
#include "piie/vocab.hpp"

// Finite-difference checks for every layer type, each run over several
// seeds with small random instances.

namespace piie {

struct LayerCheckResult {
  std::string layer;
  std::size_t seeds = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct LayerCheckSummary {
  std::vector<LayerCheckResult> layers;
  double seconds = 0.0;

  bool passed() const {
    for (const auto& l : layers)
      if (!l.passed) return false;
    return true;
  }
};

namespace checks {

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline std::vector<int> random_ids(std::size_t n, int lo, int hi, Rng& rng) {
  std::uniform_int_distribution<int> d(lo, hi);
  std::vector<int> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

// Random dependency tree over n tokens: token i > 1 attaches to an earlier one.
inline std::vector<int> random_heads(std::size_t n, Rng& rng) {
  std::vector<int> heads(n, 0);
  for (std::size_t i = 1; i < n; ++i) heads[i] = std::uniform_int_distribution<int>(0, static_cast<int>(i))(rng);
  return heads;
}

inline void randomize(Tensor& t, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
}

inline std::vector<Value> leaves_of(ParameterStore& store) {
  std::vector<Value> out;
  for (auto& p : store) out.push_back(p.value);
  return out;
}

// A case builds its function and leaves from a seed.
struct Case {
  std::function<Value()> f;
  std::vector<Value> leaves;
  // Keeps modules and stores alive as long as the closure.
  std::shared_ptr<void> owner;
  // Smallest |pre-activation| of any ReLU, when the case has one.
  std::function<double()> relu_margin = {};
};

inline double min_abs(const Tensor& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.values()) m = std::min(m, std::abs(v));
  return m;
}

// Pre-activations of each layer of ReLU(A H W).
inline double gcn_margin(const Tensor& a, Tensor h, const std::vector<Value>& weights) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& w : weights) {
    Tensor pre = Tensor::matrix(h.rows(), w.cols());
    pre.mat() = a.mat() * h.mat() * w.data().mat();
    m = std::min(m, min_abs(pre));
    for (auto& v : pre.values()) v = std::max(v, 0.0);
    h = std::move(pre);
  }
  return m;
}

using CaseBuilder = std::function<Case(Rng&)>;

inline const std::vector<std::pair<std::string, CaseBuilder>>& registry() {
  static const std::vector<std::pair<std::string, CaseBuilder>> cases = {
      {"matmul+add",
       [](Rng& rng) {
         auto a = Value::leaf(random_matrix(3, 4, rng));
         auto b = Value::leaf(random_matrix(4, 2, rng));
         auto c = Value::leaf(random_matrix(1, 2, rng));
         const Tensor r = random_matrix(3, 2, rng);
         return Case{[=] { return sum(mul(add(matmul(a, b), c), Value::constant(r))); }, {a, b, c}, nullptr};
       }},
      {"elementwise",
       [](Rng& rng) {
         auto a = Value::leaf(random_matrix(3, 4, rng));
         auto b = Value::leaf(random_matrix(3, 4, rng));
         const Tensor r = random_matrix(3, 4, rng);
         return Case{[=] {
                       Value h = add(mul(tanh(a), sigmoid(b)), scale(sub(a, transpose(transpose(b))), 0.5));
                       return sum(mul(h, Value::constant(r)));
                     },
                     {a, b},
                     nullptr};
       }},
      {"relu",
       [](Rng& rng) {
         auto a = Value::leaf(random_matrix(3, 4, rng));
         const Tensor r = random_matrix(3, 4, rng);
         return Case{[=] { return sum(mul(relu(a), Value::constant(r))); }, {a}, nullptr};
       }},
      {"softmax+logsumexp",
       [](Rng& rng) {
         auto a = Value::leaf(random_matrix(3, 5, rng));
         const Tensor r = random_matrix(3, 5, rng);
         const Tensor q = random_matrix(3, 1, rng);
         return Case{[=] {
                       return add(sum(mul(softmax_rows(a), Value::constant(r))),
                                  sum(mul(logsumexp_rows(a), Value::constant(q))));
                     },
                     {a},
                     nullptr};
       }},
      {"slice+concat",
       [](Rng& rng) {
         auto a = Value::leaf(random_matrix(4, 5, rng));
         auto b = Value::leaf(random_matrix(4, 2, rng));
         const Tensor r = random_matrix(6, 5, rng);
         return Case{[=] {
                       Value cols = concat_cols({slice_cols(a, 1, 3), b});
                       Value rows = concat_rows({slice_rows(cols, 0, 2), cols});
                       return sum(mul(rows, Value::constant(r)));
                     },
                     {a, b},
                     nullptr};
       }},
      {"lookup",
       [](Rng& rng) {
         auto table = Value::leaf(random_matrix(6, 3, rng));
         const auto ids = random_ids(5, 0, 5, rng);
         const Tensor r = random_matrix(5, 3, rng);
         return Case{[=] { return sum(mul(lookup(table, ids, -1), Value::constant(r))); }, {table}, nullptr};
       }},
      {"softmax-cross-entropy",
       [](Rng& rng) {
         auto logits = Value::leaf(random_matrix(4, 5, rng));
         const auto gold = random_ids(4, 0, 4, rng);
         return Case{[=] { return softmax_cross_entropy(logits, gold); }, {logits}, nullptr};
       }},
      {"linear",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         auto lin = std::make_shared<Linear>(*store, "lin", 4, 3, rng);
         for (auto& p : *store) randomize(p.value.mutable_data(), rng, 0.5);
         auto x = Value::leaf(random_matrix(3, 4, rng));
         const Tensor r = random_matrix(3, 3, rng);
         auto leaves = leaves_of(*store);
         leaves.push_back(x);
         return Case{[=] { return sum(mul((*lin)(x), Value::constant(r))); }, leaves, lin};
       }},
      {"layer-norm",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         auto ln = std::make_shared<LayerNorm>(*store, "ln", 5);
         for (auto& p : *store) randomize(p.value.mutable_data(), rng, 0.5);
         auto x = Value::leaf(random_matrix(3, 5, rng));
         const Tensor r = random_matrix(3, 5, rng);
         auto leaves = leaves_of(*store);
         leaves.push_back(x);
         return Case{[=] { return sum(mul((*ln)(x), Value::constant(r))); }, leaves, ln};
       }},
      {"multi-head-attention",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         auto mha = std::make_shared<MultiHeadAttention>(*store, "attn", 6, 2, rng);
         auto x = Value::leaf(random_matrix(4, 6, rng));
         AttentionMask mask{{1, 1, 0, 1}};
         const Tensor r = random_matrix(4, 6, rng);
         auto leaves = leaves_of(*store);
         leaves.push_back(x);
         return Case{[=] { return sum(mul((*mha)(x, mask), Value::constant(r))); }, leaves, mha};
       }},
      {"transformer-encoder",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         TransformerConfig cfg{1, 2, 6, 8, 0.0};
         auto enc = std::make_shared<TransformerEncoder>(*store, "transformer", 5, cfg, rng);
         auto x = Value::leaf(random_matrix(3, 5, rng));
         const Tensor r = random_matrix(3, 6, rng);
         auto leaves = leaves_of(*store);
         leaves.push_back(x);
         return Case{[=] {
                       ForwardContext ctx;
                       return sum(mul(enc->encode(x, AttentionMask::all(3), ctx), Value::constant(r)));
                     },
                     leaves,
                     enc};
       }},
      {"bilstm",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         auto enc = std::make_shared<BiLstmEncoder>(*store, "bilstm", 3, 4, rng);
         auto x = Value::leaf(random_matrix(3, 3, rng));
         const Tensor r = random_matrix(3, 8, rng);
         auto leaves = leaves_of(*store);
         leaves.push_back(x);
         return Case{[=] { return sum(mul(enc->encode(x), Value::constant(r))); }, leaves, enc};
       }},
      {"char-bilstm",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         auto enc = std::make_shared<CharEncoder>(*store, "char-bilstm", 6, 3, 3, rng);
         // ragged words exercise the per-token activity mask
         const std::vector<std::vector<int>> words = {random_ids(3, 2, 5, rng), random_ids(1, 2, 5, rng),
                                                      random_ids(2, 2, 5, rng)};
         const Tensor r = random_matrix(3, 6, rng);
         return Case{[=] { return sum(mul(enc->encode(words), Value::constant(r))); }, leaves_of(*store), enc};
       }},
      {"embedder",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         const Vocab vocab({"ab", "ba", "abc"}, {'a', 'b', 'c'});
         EmbedderConfig cfg{4, 3, 2, false};
         auto emb = std::make_shared<Embedder>(*store, cfg, vocab, rng);
         TokenIds ids{{2, 1, 4}, {{2, 3}, {3, 2, 4}, {2, 3, 4}}};
         const Tensor r = random_matrix(3, emb->output_dim(), rng);
         return Case{[=] { return sum(mul(emb->represent(ids), Value::constant(r))); }, leaves_of(*store), emb};
       }},
      {"gcn-layer",
       [](Rng& rng) {
         const std::size_t n = 5;
         const auto a = normalized_adjacency(random_heads(n, rng));
         auto w = Value::leaf(random_matrix(4, 3, rng));
         auto x = Value::leaf(random_matrix(n, 4, rng));
         const Tensor r = random_matrix(n, 3, rng);
         const Value an = Value::constant(a.a);
         return Case{[=] { return sum(mul(gcn_layer(x, an, w), Value::constant(r))); },
                     {w, x},
                     nullptr,
                     [=] { return gcn_margin(a.a, x.data(), {w}); }};
       }},
      {"gcn-stack",
       [](Rng& rng) {
         const std::size_t n = 5;
         auto store = std::make_shared<ParameterStore>();
         auto stack = std::make_shared<GcnStack>(*store, "pii-gcn", 4, 3, 2, rng);
         const auto a = normalized_adjacency(random_heads(n, rng));
         auto x = Value::leaf(random_matrix(n, 4, rng));
         const Tensor r = random_matrix(n, 3, rng);
         auto leaves = leaves_of(*store);
         leaves.push_back(x);
         return Case{[=] { return sum(mul(stack->forward(x, a), Value::constant(r))); },
                     leaves,
                     stack,
                     [=] { return gcn_margin(a.a, x.data(), stack->weights()); }};
       }},
      {"crf-log-partition",
       [](Rng& rng) {
         auto e = Value::leaf(random_matrix(4, 5, rng));
         auto t = Value::leaf(random_matrix(5, 5, rng));
         auto s = Value::leaf(random_matrix(1, 5, rng));
         auto z = Value::leaf(random_matrix(1, 5, rng));
         return Case{[=] { return log_partition(e, t, s, z); }, {e, t, s, z}, nullptr};
       }},
      {"crf-nll",
       [](Rng& rng) {
         auto store = std::make_shared<ParameterStore>();
         auto crf = std::make_shared<Crf>(*store, "crf", TagScheme::size);
         for (auto& p : *store) randomize(p.value.mutable_data(), rng, 0.5);
         auto e = Value::leaf(random_matrix(4, TagScheme::size, rng));
         const std::vector<TagId> gold = spans_to_iob(4, std::vector<PiiSpan>{{Category::name, 1, 3}});
         auto leaves = leaves_of(*store);
         leaves.push_back(e);
         return Case{[=] { return crf->nll(e, gold); }, leaves, crf};
       }},
  };
  return cases;
}

}  // namespace checks

inline std::vector<std::string> layer_check_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : checks::registry()) out.push_back(name);
  return out;
}

inline LayerCheckResult check_layer(const std::string& layer, std::size_t seeds, const GradCheckOptions& opt = {}) {
  for (const auto& [name, build] : checks::registry()) {
    if (name != layer) continue;
    LayerCheckResult res{layer, seeds, 0.0, true};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(0x6a09e667f3bcc909ULL + s);
      checks::Case c = build(rng);
      // Draws whose ReLU inputs sit next to the kink are redrawn: central
      // differences across it measure the kink, not the gradient.
      for (int tries = 0; tries < 100 && c.relu_margin && c.relu_margin() < 10.0 * opt.eps; ++tries) c = build(rng);
      const auto rep = grad_check_leaves(c.f, c.leaves, opt);
      res.max_rel_error = std::max(res.max_rel_error, rep.max_rel_error);
      res.passed = res.passed && rep.passed;
    }
    return res;
  }
  throw ValidationError("unknown layer '" + layer + "'");
}

inline LayerCheckSummary check_all_layers(std::size_t seeds = 10, const GradCheckOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  LayerCheckSummary out;
  for (const auto& name : layer_check_names()) out.layers.push_back(check_layer(name, seeds, opt));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace piie
