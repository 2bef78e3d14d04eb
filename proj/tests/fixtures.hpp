#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "piie/crf.hpp"
#include "piie/model.hpp"
#include "piie/tags.hpp"

namespace piie::fixtures {

struct RepairCase {
  std::vector<std::string> input;
  std::vector<std::string> repaired;
};

// Orphan I-c becomes B-c; everything else is left alone.
inline const std::vector<RepairCase>& repair_table() {
  static const std::vector<RepairCase> table = {
      {{}, {}},
      {{"O"}, {"O"}},
      {{"I-Name"}, {"B-Name"}},
      {{"I-Name", "O"}, {"B-Name", "O"}},
      {{"O", "I-Date"}, {"O", "B-Date"}},
      {{"B-Age", "I-Date"}, {"B-Age", "B-Date"}},
      {{"B-Name", "I-Name", "I-Name"}, {"B-Name", "I-Name", "I-Name"}},
      {{"I-Name", "I-Name", "I-Name"}, {"B-Name", "I-Name", "I-Name"}},
      {{"I-ID", "I-Contact"}, {"B-ID", "B-Contact"}},
      {{"B-Location", "O", "I-Location"}, {"B-Location", "O", "B-Location"}},
      {{"B-Profession", "B-Profession"}, {"B-Profession", "B-Profession"}},
      {{"I-Age", "B-Age", "I-Age"}, {"B-Age", "B-Age", "I-Age"}},
      {{"B-Date", "I-Date", "I-Age", "I-Age"}, {"B-Date", "I-Date", "B-Age", "I-Age"}},
      {{"O", "O", "O"}, {"O", "O", "O"}},
      {{"I-Contact", "O", "I-Contact", "I-Contact"}, {"B-Contact", "O", "B-Contact", "I-Contact"}},
      {{"B-Name", "I-Location", "I-Name"}, {"B-Name", "B-Location", "B-Name"}},
      {{"I-Profession", "I-Profession", "O", "B-ID", "I-ID"},
       {"B-Profession", "I-Profession", "O", "B-ID", "I-ID"}},
      {{"B-ID", "I-ID", "B-ID", "I-ID"}, {"B-ID", "I-ID", "B-ID", "I-ID"}},
      {{"O", "B-Name", "I-Date", "I-Date", "O", "I-Name"}, {"O", "B-Name", "B-Date", "I-Date", "O", "B-Name"}},
      {{"I-Location", "I-Age", "I-Date", "I-Contact"}, {"B-Location", "B-Age", "B-Date", "B-Contact"}},
  };
  return table;
}

// Uniform-ish random IOB-valid sequence of length n.
inline std::vector<TagId> random_valid_iob(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tag(0, static_cast<int>(TagScheme::size) - 1);
  std::vector<TagId> out;
  out.reserve(n);
  while (out.size() < n) {
    const TagId t = tag(rng);
    const bool ok = out.empty() ? TagScheme::allowed_start(t) : TagScheme::allowed_transition(out.back(), t);
    if (ok) out.push_back(t);
  }
  return out;
}

// Brute-force CRF quantities over all k^n paths.
struct Enumerated {
  double log_partition = 0.0;
  std::vector<int> argmax;
  Tensor marginals;  // [n x k]
};

inline double path_score_of(const Tensor& e, const Tensor& trans, const Tensor& start, const Tensor& end,
                            const std::vector<int>& path) {
  double s = start[static_cast<std::size_t>(path[0])] + end[static_cast<std::size_t>(path.back())];
  for (std::size_t i = 0; i < path.size(); ++i) {
    s += e(i, static_cast<std::size_t>(path[i]));
    if (i) s += trans(static_cast<std::size_t>(path[i - 1]), static_cast<std::size_t>(path[i]));
  }
  return s;
}

// Visits paths in lexicographic order, so the first strict maximum is the
// lexicographically smallest argmax.
inline Enumerated enumerate(const Tensor& e, const Tensor& trans, const Tensor& start, const Tensor& end) {
  const std::size_t n = e.rows(), k = e.cols();
  std::vector<int> path(n, 0);
  std::vector<std::pair<std::vector<int>, double>> all;
  double best = -std::numeric_limits<double>::infinity();
  Enumerated out;
  while (true) {
    const double s = path_score_of(e, trans, start, end, path);
    all.emplace_back(path, s);
    if (s > best) {
      best = s;
      out.argmax = path;
    }
    std::size_t i = n;
    while (i > 0 && static_cast<std::size_t>(path[i - 1]) == k - 1) path[--i] = 0;
    if (i == 0) break;
    ++path[i - 1];
  }
  double z = 0.0;
  for (const auto& [p, s] : all) z += std::exp(s - best);
  out.log_partition = best + std::log(z);
  out.marginals = Tensor::matrix(n, k);
  for (const auto& [p, s] : all) {
    const double prob = std::exp(s - out.log_partition);
    for (std::size_t i = 0; i < n; ++i) out.marginals(i, static_cast<std::size_t>(p[i])) += prob;
  }
  return out;
}

// Small widths so full training runs take seconds.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.embedder = EmbedderConfig{8, 4, 4, false};
  c.transformer = TransformerConfig{1, 2, 8, 16, 0.0};
  c.bilstm_hidden = 4;
  c.gcn_layers = 1;
  c.gcn_dim = 8;
  c.epochs = 3;
  c.batch_size = 8;
  c.dev_fraction = 0.0;
  c.optimizer.learning_rate = 1e-2;
  return c;
}

}  // namespace piie::fixtures
