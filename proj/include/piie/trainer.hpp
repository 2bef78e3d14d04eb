#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "piie/checkpoint.hpp"
#include "piie/corpus.hpp"
#include "piie/errors.hpp"
#include "piie/log.hpp"
#include "piie/metrics.hpp"
#include "piie/model.hpp"
#include "piie/optimizer.hpp"

namespace piie {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // per token
  double dev_loss = 0.0;    // per token
  double dev_f1 = 0.0;
  std::size_t updated_scalars = 0;  // by the last optimizer step
  bool improved = false;
};

using EpochCallback = std::function<void(const EpochStats&, const Model&)>;

struct TrainOptions {
  EpochCallback on_epoch;
  // Held-out set for early stopping. When null, a seeded fraction of the
  // training corpus is split off.
  const Corpus* dev = nullptr;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  std::vector<std::string> optimizer_state;  // parameters holding moments
};

struct DevSplit {
  Corpus train, dev;
};

// Seeded held-out split: round(fraction * n) sentences (at least one when
// the fraction is positive and n >= 2) go to dev.
inline DevSplit dev_split(const Corpus& corpus, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_dev = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(corpus.size())));
  if (fraction > 0.0 && n_dev == 0 && corpus.size() >= 2) n_dev = 1;
  if (n_dev >= corpus.size()) n_dev = corpus.size() - 1;
  std::vector<std::size_t> dev(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dev));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_dev), order.end());
  std::sort(dev.begin(), dev.end());
  std::sort(train.begin(), train.end());
  return {select(corpus, train), select(corpus, dev)};
}

inline TagSequences gold_tags(const Corpus& corpus) {
  TagSequences out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(s.tags());
  return out;
}

inline TagSequences predict_tags(const Model& model, const Corpus& corpus) {
  TagSequences out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(model.decode(s));
  return out;
}

inline MetricsReport evaluate(const Model& model, const Corpus& corpus) {
  return evaluate_tags(gold_tags(corpus), predict_tags(model, corpus));
}

// Mean per-token loss without dropout, plus span scores.
inline std::pair<double, MetricsReport> evaluate_with_loss(const Model& model, const Corpus& corpus) {
  double loss = 0.0;
  std::size_t tokens = 0;
  TagSequences pred;
  pred.reserve(corpus.size());
  for (const auto& s : corpus) {
    ForwardContext ctx;
    const Value e = model.emissions(s, ctx);
    pred.push_back(model.decode_emissions(e.data()));
    const auto gold = s.tags();
    const double l = model.config().decoder == DecoderKind::softmax
                         ? softmax_cross_entropy(e, gold).item()
                         : model.crf().nll(e, gold).item();
    loss += l;
    tokens += s.size();
  }
  return {tokens ? loss / static_cast<double>(tokens) : 0.0, evaluate_tags(gold_tags(corpus), pred)};
}

inline void apply_transfer_schedule(Model& model, std::size_t epoch) {
  const TransferPlan* plan = model.transfer_plan();
  if (!plan) return;
  for (const auto& e : plan->entries) {
    const bool frozen = e.freeze && !(plan->fine_tune_epoch && epoch >= *plan->fine_tune_epoch);
    model.params().set_frozen(e.prefix, frozen);
  }
}

// Mini-batch training with early stopping on dev F1 (dev loss breaks ties).
// The best epoch's parameters are restored at the end.
inline TrainResult train_model(Model& model, const Corpus& corpus, const TrainOptions& opts = {}) {
  if (corpus.empty()) throw ContractError("train on an empty corpus");
  const ModelConfig& cfg = model.config();
  Corpus train_set, dev_set;
  if (opts.dev) {
    train_set = corpus;
    dev_set = *opts.dev;
  } else if (cfg.dev_fraction > 0.0 && corpus.size() >= 2) {
    auto split = dev_split(corpus, cfg.dev_fraction, cfg.seed);
    train_set = std::move(split.train);
    dev_set = std::move(split.dev);
  } else {
    train_set = corpus;
  }

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Optimizer optimizer(cfg.optimizer);
  ParameterStore& params = model.params();
  params.zero_grad();

  TrainResult result;
  std::vector<Tensor> best = params.snapshot();
  double best_f1 = -1.0, best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    apply_transfer_schedule(model, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    double total = 0.0;
    std::size_t tokens = 0, batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Sentence& s = train_set[order[i]];
        ForwardContext ctx{true, &rng};
        const Value l = model.loss(s, ctx);
        if (!std::isfinite(l.item()))
          throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no) + " (sentence '" + s.id + "')");
        backward(scale(l, inv));
        total += l.item();
        tokens += s.size();
      }
      stats.updated_scalars = optimizer.step(params);
    }
    stats.train_loss = tokens ? total / static_cast<double>(tokens) : 0.0;

    if (!dev_set.empty()) {
      auto [dl, report] = evaluate_with_loss(model, dev_set);
      stats.dev_loss = dl;
      stats.dev_f1 = report.f1;
      stats.improved = report.f1 > best_f1 || (report.f1 == best_f1 && dl < best_loss);
    } else {
      stats.improved = true;
    }
    if (stats.improved) {
      best = params.snapshot();
      best_f1 = stats.dev_f1;
      best_loss = stats.dev_loss;
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    log::info("epoch " + std::to_string(epoch) + ": train loss " + std::to_string(stats.train_loss) +
              ", dev loss " + std::to_string(stats.dev_loss) + ", dev F1 " + std::to_string(stats.dev_f1));
    result.history.push_back(stats);
    if (opts.on_epoch) opts.on_epoch(stats, model);
    if (!dev_set.empty() && stale >= cfg.patience) break;
  }
  params.restore(best);
  result.best_dev_f1 = std::max(best_f1, 0.0);
  for (const auto& [name, m] : optimizer.moments()) result.optimizer_state.push_back(name);
  return result;
}

inline nlohmann::json provenance_of(std::string_view domain, const TrainResult& r) {
  return {{"domain", domain},
          {"epochs", r.history.size()},
          {"best_epoch", r.best_epoch},
          {"dev_f1", r.best_dev_f1}};
}

// Builds the vocabulary and a fresh model from `cfg`, then trains it.
inline Model fit(const Corpus& corpus, const ModelConfig& cfg, const TrainOptions& opts = {},
                 TrainResult* result = nullptr, const EmbeddingTable* pretrained = nullptr) {
  if (corpus.empty()) throw ContractError("train on an empty corpus");
  Model model(cfg, Vocab::build(corpus), pretrained);
  auto r = train_model(model, corpus, opts);
  if (result) *result = std::move(r);
  return model;
}

inline Checkpoint train(const Corpus& corpus, const ModelConfig& cfg, const TrainOptions& opts = {}) {
  TrainResult r;
  Model model = fit(corpus, cfg, opts, &r);
  return make_checkpoint(model, provenance_of("source", r));
}

// Builds a target model whose planned layers come from `source`. The token
// vocabulary is the source's extended by the target corpus; the character
// vocabulary is the source's. Word-embedding rows are copied by token string
// and stay trainable; the emission projection and CRF start fresh.
inline Model transfer(const Checkpoint& source, const TransferPlan& plan, const ModelConfig& target_cfg,
                      const Corpus& target_corpus) {
  plan.validate();
  if (target_corpus.empty()) throw ContractError("transfer needs a non-empty target corpus");
  const Vocab source_vocab = source.vocab();
  Model model(target_cfg, source_vocab.extended_with(Vocab::build(target_corpus)));

  std::vector<std::string> problems;
  for (const auto& e : plan.entries) {
    const bool any = std::any_of(model.params().begin(), model.params().end(),
                                 [&](const Parameter& p) { return ParameterStore::has_prefix(p.name, e.prefix); });
    if (!any) problems.push_back(e.prefix + " (no such layer in the target model)");
  }
  for (auto& p : model.params()) {
    if (!plan.covers(p.name)) continue;
    const auto* t = source.find(p.name);
    if (!t)
      problems.push_back(p.name + " (missing from checkpoint)");
    else if (!same_dims(*t, p.value.shape()))
      problems.push_back(p.name + " (checkpoint " + Shape(std::span<const std::size_t>(
                                                        std::vector<std::size_t>(t->dims.begin(), t->dims.end())))
                                                        .str() +
                         ", target " + p.value.shape().str() + ")");
  }
  const auto* words = source.find("word-emb.table");
  Parameter& target_words = model.params().at("word-emb.table");
  if (words && (words->dims.size() != 2 || words->dims[1] != target_words.value.cols()))
    problems.push_back("word-emb.table (embedding width)");
  if (!problems.empty()) {
    std::string msg = "source checkpoint incompatible with target configuration:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw CompatibilityError(msg);
  }

  for (auto& p : model.params())
    if (plan.covers(p.name)) p.value.mutable_data() = to_tensor(*source.find(p.name));
  if (words) {
    const std::size_t d = target_words.value.cols();
    Tensor& table = target_words.value.mutable_data();
    const auto& tokens = model.vocab().tokens();
    for (std::size_t row = 2; row < tokens.size(); ++row) {
      if (!source_vocab.contains(tokens[row])) continue;
      const auto src = static_cast<std::size_t>(source_vocab.token_index(tokens[row]));
      for (std::size_t j = 0; j < d; ++j) table(row, j) = static_cast<double>(words->values[src * d + j]);
    }
    for (std::size_t j = 0; j < d; ++j) table(Vocab::unk, j) = static_cast<double>(words->values[Vocab::unk * d + j]);
  }
  model.set_transfer_plan(plan);
  apply_transfer_schedule(model, 1);
  return model;
}

inline Checkpoint train_target(Model& model, const Corpus& corpus, const TrainOptions& opts = {},
                               TrainResult* result = nullptr) {
  auto r = train_model(model, corpus, opts);
  auto ckpt = make_checkpoint(model, provenance_of("target", r));
  if (result) *result = std::move(r);
  return ckpt;
}

}  // namespace piie
