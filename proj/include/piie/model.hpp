#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "piie/autodiff.hpp"
#include "piie/corpus.hpp"
#include "piie/crf.hpp"
#include "piie/embedder.hpp"
#include "piie/errors.hpp"
#include "piie/gcn.hpp"
#include "piie/lstm.hpp"
#include "piie/optimizer.hpp"
#include "piie/parameter.hpp"
#include "piie/tags.hpp"
#include "piie/transformer.hpp"
#include "piie/vocab.hpp"

namespace piie {

enum class EncoderKind { transformer, bilstm };
enum class DecoderKind { crf, softmax };

inline std::string_view to_string(EncoderKind k) { return k == EncoderKind::transformer ? "transformer" : "bilstm"; }
inline std::string_view to_string(DecoderKind k) { return k == DecoderKind::crf ? "crf" : "softmax"; }

inline EncoderKind parse_encoder(std::string_view s) {
  if (s == "transformer") return EncoderKind::transformer;
  if (s == "bilstm") return EncoderKind::bilstm;
  throw ValidationError("unknown encoder '" + std::string(s) + "' (expected transformer or bilstm)");
}

inline DecoderKind parse_decoder(std::string_view s) {
  if (s == "crf") return DecoderKind::crf;
  if (s == "softmax") return DecoderKind::softmax;
  throw ValidationError("unknown decoder '" + std::string(s) + "' (expected crf or softmax)");
}

struct ModelConfig {
  EncoderKind encoder = EncoderKind::transformer;
  bool use_gcn = true;
  DecoderKind decoder = DecoderKind::crf;

  EmbedderConfig embedder;
  TransformerConfig transformer;
  std::size_t bilstm_hidden = 64;
  std::size_t gcn_layers = 2;
  std::size_t gcn_dim = 128;
  bool constrained_decoding = true;
  bool constrained_training = false;

  std::uint64_t seed = 7;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::size_t patience = 5;
  double dev_fraction = 0.1;
  // Probability of replacing a training token's word id with UNK.
  double word_dropout = 0.0;
  OptimizerConfig optimizer;

  void validate() const {
    transformer.validate();
    if (embedder.word_dim == 0 || embedder.char_dim == 0 || embedder.char_hidden == 0)
      throw ValidationError("embedding widths must be positive");
    if (bilstm_hidden == 0) throw ValidationError("bilstm hidden width must be positive");
    if (gcn_layers > 0 && gcn_dim == 0) throw ValidationError("gcn width must be positive");
    if (epochs == 0) throw ValidationError("epochs must be positive");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) throw ValidationError("dev fraction must be in [0, 1)");
    if (!(word_dropout >= 0.0 && word_dropout < 1.0)) throw ValidationError("word dropout must be in [0, 1)");
    if (!(optimizer.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (optimizer.clip_norm < 0.0) throw ValidationError("clip norm must be non-negative");
  }

  // Short label used in reports, e.g. "transformer+gcn+crf".
  std::string label() const {
    return std::string(to_string(encoder)) + (use_gcn ? "+gcn" : "") + "+" + std::string(to_string(decoder));
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    return json{
        {"encoder", to_string(encoder)},
        {"use_gcn", use_gcn},
        {"decoder", to_string(decoder)},
        {"embedder",
         {{"word_dim", embedder.word_dim},
          {"char_dim", embedder.char_dim},
          {"char_hidden", embedder.char_hidden},
          {"freeze_pretrained", embedder.freeze_pretrained}}},
        {"transformer",
         {{"layers", transformer.layers},
          {"heads", transformer.heads},
          {"model_dim", transformer.model_dim},
          {"ff_dim", transformer.ff_dim},
          {"dropout", transformer.dropout}}},
        {"bilstm", {{"hidden", bilstm_hidden}}},
        {"gcn", {{"layers", gcn_layers}, {"dim", gcn_dim}}},
        {"constrained_decoding", constrained_decoding},
        {"constrained_training", constrained_training},
        {"seed", seed},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"patience", patience},
        {"dev_fraction", dev_fraction},
        {"word_dropout", word_dropout},
        {"optimizer",
         {{"kind", optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"},
          {"learning_rate", optimizer.learning_rate},
          {"beta1", optimizer.beta1},
          {"beta2", optimizer.beta2},
          {"epsilon", optimizer.epsilon},
          {"clip_norm", optimizer.clip_norm}}},
    };
  }

  // Applies the keys present in `j` on top of `base`. Unknown keys and
  // ill-typed values are validation errors.
  static ModelConfig from_json(const nlohmann::json& j) { return from_json(j, ModelConfig{}); }

  static ModelConfig from_json(const nlohmann::json& j, ModelConfig base) {
    ModelConfig c = std::move(base);
    try {
      apply(j, c);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

 private:
  template <class T>
  static void set(const nlohmann::json& obj, const char* key, T& field) {
    if (auto it = obj.find(key); it != obj.end()) field = it->template get<T>();
  }

  static void check_keys(const nlohmann::json& obj, std::string_view where, std::set<std::string> allowed) {
    if (!obj.is_object()) throw ValidationError("config: '" + std::string(where) + "' must be an object");
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) throw ValidationError("config: unknown key '" + k + "' in " + std::string(where));
  }

  static void apply(const nlohmann::json& j, ModelConfig& c) {
    check_keys(j, "config",
               {"encoder", "use_gcn", "decoder", "embedder", "transformer", "bilstm", "gcn", "constrained_decoding",
                "constrained_training", "seed", "epochs", "batch_size", "patience", "dev_fraction", "word_dropout",
                "optimizer"});
    if (j.contains("encoder")) c.encoder = parse_encoder(j["encoder"].get<std::string>());
    if (j.contains("decoder")) c.decoder = parse_decoder(j["decoder"].get<std::string>());
    set(j, "use_gcn", c.use_gcn);
    set(j, "constrained_decoding", c.constrained_decoding);
    set(j, "constrained_training", c.constrained_training);
    set(j, "seed", c.seed);
    set(j, "epochs", c.epochs);
    set(j, "batch_size", c.batch_size);
    set(j, "patience", c.patience);
    set(j, "dev_fraction", c.dev_fraction);
    set(j, "word_dropout", c.word_dropout);
    if (auto it = j.find("embedder"); it != j.end()) {
      check_keys(*it, "embedder", {"word_dim", "char_dim", "char_hidden", "freeze_pretrained"});
      set(*it, "word_dim", c.embedder.word_dim);
      set(*it, "char_dim", c.embedder.char_dim);
      set(*it, "char_hidden", c.embedder.char_hidden);
      set(*it, "freeze_pretrained", c.embedder.freeze_pretrained);
    }
    if (auto it = j.find("transformer"); it != j.end()) {
      check_keys(*it, "transformer", {"layers", "heads", "model_dim", "ff_dim", "dropout"});
      set(*it, "layers", c.transformer.layers);
      set(*it, "heads", c.transformer.heads);
      set(*it, "model_dim", c.transformer.model_dim);
      set(*it, "ff_dim", c.transformer.ff_dim);
      set(*it, "dropout", c.transformer.dropout);
    }
    if (auto it = j.find("bilstm"); it != j.end()) {
      check_keys(*it, "bilstm", {"hidden"});
      set(*it, "hidden", c.bilstm_hidden);
    }
    if (auto it = j.find("gcn"); it != j.end()) {
      check_keys(*it, "gcn", {"layers", "dim"});
      set(*it, "layers", c.gcn_layers);
      set(*it, "dim", c.gcn_dim);
    }
    if (auto it = j.find("optimizer"); it != j.end()) {
      check_keys(*it, "optimizer", {"kind", "learning_rate", "beta1", "beta2", "epsilon", "clip_norm"});
      if (it->contains("kind")) {
        const auto kind = (*it)["kind"].get<std::string>();
        if (kind == "adam")
          c.optimizer.kind = OptimizerKind::adam;
        else if (kind == "sgd")
          c.optimizer.kind = OptimizerKind::sgd;
        else
          throw ValidationError("config: unknown optimizer '" + kind + "'");
      }
      set(*it, "learning_rate", c.optimizer.learning_rate);
      set(*it, "beta1", c.optimizer.beta1);
      set(*it, "beta2", c.optimizer.beta2);
      set(*it, "epsilon", c.optimizer.epsilon);
      set(*it, "clip_norm", c.optimizer.clip_norm);
    }
  }
};

// Which layers a target model takes over from a source checkpoint, whether
// each stays frozen, and when (1-based epoch) frozen layers are released.
struct TransferPlan {
  struct Entry {
    std::string prefix;
    bool freeze = true;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::vector<Entry> entries{{"char-bilstm", true}, {"transformer", true}, {"pii-gcn", true}};
  std::optional<std::size_t> fine_tune_epoch;

  // The default plan adapted to an architecture: the Bi-LSTM context encoder
  // takes the transformer's place.
  static TransferPlan for_config(const ModelConfig& cfg) {
    TransferPlan p;
    if (cfg.encoder == EncoderKind::bilstm) p.entries[1].prefix = "context-bilstm";
    if (!cfg.use_gcn) p.entries.pop_back();
    return p;
  }

  void set_freeze(bool freeze) {
    for (auto& e : entries) e.freeze = freeze;
  }

  bool covers(std::string_view name) const {
    for (const auto& e : entries)
      if (ParameterStore::has_prefix(name, e.prefix)) return true;
    return false;
  }

  void validate() const {
    for (const auto& e : entries) {
      if (e.prefix.empty()) throw ValidationError("transfer plan has an empty prefix");
      if (e.prefix == "crf" || e.prefix == "emission" || ParameterStore::has_prefix(e.prefix, "crf") ||
          ParameterStore::has_prefix(e.prefix, "emission"))
        throw ValidationError("transfer plan may not include '" + e.prefix + "': the decoder is always retrained");
    }
    if (fine_tune_epoch && *fine_tune_epoch == 0) throw ValidationError("fine-tune epoch is 1-based");
  }

  nlohmann::json to_json() const {
    nlohmann::json es = nlohmann::json::array();
    for (const auto& e : entries) es.push_back({{"prefix", e.prefix}, {"freeze", e.freeze}});
    nlohmann::json j{{"entries", es}};
    j["fine_tune_epoch"] = fine_tune_epoch ? nlohmann::json(*fine_tune_epoch) : nlohmann::json(nullptr);
    return j;
  }
};

// The full tagger: embeddings, context encoder, optional dependency GCN,
// emission projection and decoder.
class Model {
 public:
  Model(const ModelConfig& cfg, Vocab vocab, const EmbeddingTable* pretrained = nullptr)
      : cfg_(cfg), vocab_(std::move(vocab)), iob_(TransitionMask::iob()) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    embedder_ = Embedder(store_, cfg_.embedder, vocab_, rng, pretrained);
    std::size_t width = embedder_.output_dim();
    if (cfg_.encoder == EncoderKind::transformer) {
      transformer_ = TransformerEncoder(store_, "transformer", width, cfg_.transformer, rng);
      width = transformer_.output_dim();
    } else {
      bilstm_ = BiLstmEncoder(store_, "context-bilstm", width, cfg_.bilstm_hidden, rng);
      width = bilstm_.output_dim();
    }
    if (cfg_.use_gcn) {
      gcn_ = GcnStack(store_, "pii-gcn", width, cfg_.gcn_dim, cfg_.gcn_layers, rng);
      width = gcn_.output_dim();
    }
    emission_ = Linear(store_, "emission", width, TagScheme::size, rng);
    if (cfg_.decoder == DecoderKind::crf) crf_ = Crf(store_, "crf", TagScheme::size);
  }

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Crf& crf() const { return crf_; }

  const TransferPlan* transfer_plan() const { return plan_ ? &*plan_ : nullptr; }
  void set_transfer_plan(std::optional<TransferPlan> plan) { plan_ = std::move(plan); }

  // Tag scores [n x |tags|]. With ctx.training, dropout and word dropout apply.
  Value emissions(const Sentence& s, ForwardContext& ctx) const {
    if (s.size() == 0) throw ContractError("emissions on an empty sentence");
    TokenIds ids = encode_tokens(s, vocab_);
    if (ctx.training && ctx.rng && cfg_.word_dropout > 0.0) {
      std::bernoulli_distribution drop(cfg_.word_dropout);
      for (auto& w : ids.words)
        if (drop(*ctx.rng)) w = Vocab::unk;
    }
    Value h = embedder_.represent(ids);
    if (cfg_.encoder == EncoderKind::transformer)
      h = transformer_.encode(h, AttentionMask::all(s.size()), ctx);
    else
      h = bilstm_.encode(h);
    if (cfg_.use_gcn) {
      const auto heads = s.heads();
      h = gcn_.forward(h, normalized_adjacency(heads));
    }
    return emission_(h);
  }

  Value emissions(const Sentence& s) const {
    ForwardContext ctx;
    return emissions(s, ctx);
  }

  // Negative log-likelihood of the gold tags (CRF) or summed token
  // cross-entropy (softmax decoder).
  Value loss(const Sentence& s, ForwardContext& ctx) const {
    const Value e = emissions(s, ctx);
    const auto gold = s.tags();
    if (cfg_.decoder == DecoderKind::softmax) return softmax_cross_entropy(e, gold);
    return crf_.nll(e, gold, cfg_.constrained_training ? &iob_ : nullptr);
  }

  std::vector<TagId> decode_emissions(const Tensor& e) const {
    if (cfg_.decoder == DecoderKind::softmax) return softmax_decode(e).tags;
    return crf_.decode(e, cfg_.constrained_decoding ? &iob_ : nullptr).tags;
  }

  std::vector<TagId> decode(const Sentence& s) const { return decode_emissions(emissions(s).data()); }

  // Decoded spans. Unconstrained decoders may emit orphan I- tags; spans are
  // read from the repaired sequence.
  std::vector<PiiSpan> predict(const Sentence& s) const {
    const auto tags = decode(s);
    return iob_to_spans(std::span<const TagId>(tags));
  }

 private:
  ModelConfig cfg_;
  Vocab vocab_;
  TransitionMask iob_;
  ParameterStore store_;
  Embedder embedder_;
  TransformerEncoder transformer_;
  BiLstmEncoder bilstm_;
  GcnStack gcn_;
  Linear emission_;
  Crf crf_;
  std::optional<TransferPlan> plan_;
};

}  // namespace piie
