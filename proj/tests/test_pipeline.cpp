#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "piie/checkpoint.hpp"
#include "piie/experiments.hpp"
#include "piie/synthetic.hpp"
#include "piie/trainer.hpp"

using namespace piie;
using fixtures::tiny_config;

namespace {

const Corpus& source_corpus() {
  static const Corpus c = generate_synthetic(7, 60, Profile::source);
  return c;
}

const Corpus& target_corpus() {
  static const Corpus c = generate_synthetic(7, 30, Profile::target);
  return c;
}

const Checkpoint& source_checkpoint() {
  static const Checkpoint ck = train(source_corpus(), tiny_config());
  return ck;
}

std::vector<float> as_floats(const Tensor& t) {
  std::vector<float> out;
  out.reserve(t.size());
  for (double v : t.values()) out.push_back(static_cast<float>(v));
  return out;
}

bool equals_checkpoint(const Parameter& p, const Checkpoint& ck) {
  const auto* t = ck.find(p.name);
  return t && t->values == as_floats(p.value.data());
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("piie_test_" + name);
}

}  // namespace

TEST(Train, LossDecreasesOnToyCorpus) {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 2;
  TrainResult r;
  fit(generate_synthetic(3, 50, Profile::source), cfg, {}, &r);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_LT(r.history[1].train_loss, r.history[0].train_loss);
}

TEST(Train, SameSeedGivesBitwiseIdenticalParameters) {
  ModelConfig cfg = tiny_config();
  cfg.dev_fraction = 0.2;
  Model a = fit(source_corpus(), cfg);
  Model b = fit(source_corpus(), cfg);
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& pa = *(a.params().begin() + static_cast<std::ptrdiff_t>(i));
    const auto& pb = *(b.params().begin() + static_cast<std::ptrdiff_t>(i));
    EXPECT_EQ(pa.name, pb.name);
    EXPECT_EQ(pa.value.data(), pb.value.data()) << pa.name;
  }
}

TEST(Train, EmptyCorpusIsContractError) {
  EXPECT_THROW(train(Corpus{}, tiny_config()), ContractError);
  Model m(tiny_config(), Vocab::build(source_corpus()));
  EXPECT_THROW(train_model(m, Corpus{}), ContractError);
}

TEST(Train, MemorizesSmallCorpus) {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 200;
  cfg.batch_size = 4;
  const Corpus c = generate_synthetic(5, 20, Profile::source);
  Model m = fit(c, cfg);
  const auto [loss, report] = evaluate_with_loss(m, c);
  EXPECT_LT(loss, 0.05);
  EXPECT_GT(report.f1, 0.95);
}

TEST(Config, UnknownKeyIsValidationError) {
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"layers", 3}}), ValidationError);
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"gcn", {{"depth", 3}}}}), ValidationError);
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"epochs", "many"}}), ValidationError);
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"encoder", "rnn"}}), ValidationError);
}

TEST(Config, JsonRoundTrip) {
  ModelConfig cfg = tiny_config();
  cfg.encoder = EncoderKind::bilstm;
  cfg.use_gcn = false;
  cfg.decoder = DecoderKind::softmax;
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
}

TEST(TransferPlan, DefaultsAndValidation) {
  TransferPlan p;
  ASSERT_EQ(p.entries.size(), 3u);
  EXPECT_EQ(p.entries[0].prefix, "char-bilstm");
  EXPECT_EQ(p.entries[1].prefix, "transformer");
  EXPECT_EQ(p.entries[2].prefix, "pii-gcn");
  for (const auto& e : p.entries) EXPECT_TRUE(e.freeze);
  EXPECT_FALSE(p.fine_tune_epoch);
  EXPECT_NO_THROW(p.validate());
  TransferPlan bad = p;
  bad.entries.push_back({"crf", true});
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = p;
  bad.entries.push_back({"emission", false});
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = p;
  bad.fine_tune_epoch = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Transfer, FrozenLayersStayBitwiseEqual) {
  const auto& src = source_checkpoint();
  ModelConfig cfg = ModelConfig::from_json(default_target_overrides(), src.config());
  cfg.epochs = 5;
  Model m = transfer(src, TransferPlan{}, cfg, target_corpus());
  const Tensor crf_init = m.params().at("crf.transitions").value.data();
  std::size_t epochs_seen = 0;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochStats&, const Model& model) {
    ++epochs_seen;
    for (const auto& p : model.params())
      if (TransferPlan{}.covers(p.name)) {
        EXPECT_TRUE(equals_checkpoint(p, src)) << p.name << " epoch " << epochs_seen;
      }
  };
  TrainResult r = train_model(m, target_corpus(), opts);
  EXPECT_EQ(epochs_seen, cfg.epochs);
  EXPECT_GT(max_abs_diff(m.params().at("crf.transitions").value.data(), crf_init), 0.0);
  for (const auto& name : r.optimizer_state) EXPECT_FALSE(TransferPlan{}.covers(name)) << name;
  EXPECT_FALSE(r.optimizer_state.empty());
}

TEST(Transfer, FineTuneReleasesFromEpochTwo) {
  const auto& src = source_checkpoint();
  ModelConfig cfg = ModelConfig::from_json(default_target_overrides(), src.config());
  cfg.epochs = 3;
  TransferPlan plan;
  plan.fine_tune_epoch = 2;
  Model m = transfer(src, plan, cfg, target_corpus());
  std::vector<bool> unchanged;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochStats&, const Model& model) {
    bool all = true;
    for (const auto& p : model.params())
      if (plan.covers(p.name)) all = all && equals_checkpoint(p, src);
    unchanged.push_back(all);
  };
  train_model(m, target_corpus(), opts);
  EXPECT_EQ(unchanged, (std::vector<bool>{true, false, false}));
}

TEST(Transfer, UpdateCountIsDecoderOnlyWhenEverythingElseFrozen) {
  const auto& src = source_checkpoint();
  ModelConfig cfg = ModelConfig::from_json(default_target_overrides(), src.config());
  cfg.epochs = 1;
  Model m = transfer(src, TransferPlan{}, cfg, target_corpus());
  m.params().set_frozen("word-emb", true);
  std::size_t expected = 0;
  for (const auto& p : m.params())
    if (ParameterStore::has_prefix(p.name, "crf") || ParameterStore::has_prefix(p.name, "emission"))
      expected += p.numel();
  const auto r = train_model(m, target_corpus());
  EXPECT_EQ(r.history.at(0).updated_scalars, expected);
}

TEST(Transfer, UnfrozenPlanTrainsEverything) {
  const auto& src = source_checkpoint();
  ModelConfig cfg = ModelConfig::from_json(default_target_overrides(), src.config());
  cfg.epochs = 1;
  TransferPlan plan;
  plan.set_freeze(false);
  Model m = transfer(src, plan, cfg, target_corpus());
  const auto r = train_model(m, target_corpus());
  EXPECT_EQ(r.history.at(0).updated_scalars, m.params().scalar_count());
}

TEST(Transfer, WordRowsRemappedByToken) {
  const auto& src = source_checkpoint();
  Model m = transfer(src, TransferPlan{}, src.config(), target_corpus());
  const Vocab sv = src.vocab();
  const auto* words = src.find("word-emb.table");
  const Tensor& table = m.params().at("word-emb.table").value.data();
  const std::size_t d = table.cols();
  std::size_t shared = 0;
  for (std::size_t row = 2; row < m.vocab().token_count(); ++row) {
    const auto& tok = m.vocab().tokens()[row];
    if (!sv.contains(tok)) continue;
    ++shared;
    const auto srow = static_cast<std::size_t>(sv.token_index(tok));
    for (std::size_t j = 0; j < d; ++j) ASSERT_EQ(static_cast<float>(table(row, j)), words->values[srow * d + j]);
  }
  EXPECT_GT(shared, 0u);
}

TEST(Transfer, WidthMismatchListsTensors) {
  const auto& src = source_checkpoint();
  ModelConfig cfg = src.config();
  cfg.gcn_dim = 12;
  try {
    transfer(src, TransferPlan{}, cfg, target_corpus());
    FAIL() << "expected CompatibilityError";
  } catch (const CompatibilityError& e) {
    EXPECT_NE(std::string(e.what()).find("pii-gcn.layer0.W"), std::string::npos) << e.what();
  }
  cfg = src.config();
  cfg.use_gcn = false;
  EXPECT_THROW(transfer(src, TransferPlan{}, cfg, target_corpus()), CompatibilityError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto& src = source_checkpoint();
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(src, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(src));
  const Model m = model_from_checkpoint(back);
  EXPECT_EQ(serialize_checkpoint(make_checkpoint(m, back.provenance())), serialize_checkpoint(src));
  std::filesystem::remove(path);
}

TEST(Checkpoint, TensorsWithinSinglePrecision) {
  Model m(tiny_config(), Vocab::build(source_corpus()));
  const Model back = model_from_checkpoint(make_checkpoint(m));
  auto it = back.params().begin();
  for (const auto& p : m.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double a = p.value.data()[i], b = it->value.data()[i];
      EXPECT_LE(std::abs(a - b), 1e-6 * std::max(1.0, std::abs(a))) << p.name;
    }
    ++it;
  }
}

TEST(Checkpoint, BadMagicIsFormatError) {
  std::string bytes = serialize_checkpoint(source_checkpoint());
  bytes[0] = 'X';
  std::istringstream in(bytes);
  EXPECT_THROW(read_checkpoint(in), FormatError);
}

TEST(Checkpoint, VersionMismatchIsUnsupportedVersion) {
  std::string bytes = serialize_checkpoint(source_checkpoint());
  bytes[4] = static_cast<char>(checkpoint_version + 1);
  std::istringstream in(bytes);
  EXPECT_THROW(read_checkpoint(in), UnsupportedVersionError);
}

TEST(Checkpoint, TruncationIsFormatError) {
  const std::string bytes = serialize_checkpoint(source_checkpoint());
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(read_checkpoint(in), FormatError) << "cut at " << cut;
  }
}

TEST(Checkpoint, MissingFileIsFormatError) {
  EXPECT_THROW(load_checkpoint(temp_file("does-not-exist.ckpt")), FormatError);
}

TEST(Predict, SpansAreValidAndDeterministic) {
  const Model m = model_from_checkpoint(source_checkpoint());
  for (const auto& s : target_corpus()) {
    const auto spans = m.predict(s);
    EXPECT_EQ(spans, m.predict(s));
    for (std::size_t i = 0; i < spans.size(); ++i) {
      EXPECT_LT(spans[i].start, spans[i].end);
      EXPECT_LE(spans[i].end, s.size());
      if (i) {
        EXPECT_LE(spans[i - 1].end, spans[i].start);
      }
    }
    EXPECT_TRUE(is_iob_valid(m.decode(s)));
  }
}

TEST(Predict, UntrainedModelStillGivesValidOutput) {
  ModelConfig cfg = tiny_config();
  cfg.constrained_decoding = false;
  cfg.seed = 3;
  const Model m(cfg, Vocab::build(source_corpus()));
  for (const auto& s : source_corpus()) {
    const auto tags = m.decode(s);
    ASSERT_EQ(tags.size(), s.size());
    EXPECT_EQ(spans_to_iob(s.size(), m.predict(s)), repair_iob(tags));
  }
}

TEST(Ablate, SevenRowTable) {
  ExperimentOptions opt;
  opt.target_train = 10;
  opt.target_overrides = {{"epochs", 1}, {"dev_fraction", 0.0}};
  ModelConfig cfg = tiny_config();
  cfg.epochs = 1;
  const auto table = ablate(generate_synthetic(7, 30, Profile::source), generate_synthetic(7, 20, Profile::target), cfg, opt);
  ASSERT_EQ(table.rows.size(), 7u);
  std::size_t source_rows = 0;
  for (const auto& r : table.rows) source_rows += r.domain == "Source";
  EXPECT_EQ(source_rows, 3u);
  EXPECT_EQ(table.rows.back().label, ablation::drop_dtl);
  const std::string text = table.text();
  EXPECT_NE(text.find("Dropped Layer(s)"), std::string::npos);
  EXPECT_NE(text.find("F1"), std::string::npos);
  EXPECT_EQ(table.records().size(), 7u);
}

TEST(Benchmark, SplitSizes) {
  const auto b = split_benchmark(generate_synthetic(1, 50, Profile::source), generate_synthetic(1, 30, Profile::target), 7, 10);
  EXPECT_EQ(b.source_test.size(), 10u);
  EXPECT_EQ(b.source_train.size(), 40u);
  EXPECT_EQ(b.target_train.size(), 10u);
  EXPECT_EQ(b.target_test.size(), 20u);
}
