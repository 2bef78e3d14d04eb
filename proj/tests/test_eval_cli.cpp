#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "piie/cli.hpp"
#include "piie/metrics.hpp"
#include "piie/report.hpp"

using namespace piie;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "piie");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("piie_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

std::string write_tiny_config(const TempDir& dir) {
  ModelConfig cfg = fixtures::tiny_config();
  cfg.epochs = 2;
  const std::string path = dir.file("tiny.json");
  std::ofstream(path) << cfg.to_json().dump(2);
  return path;
}

std::vector<TagId> tags(std::initializer_list<const char*> names) {
  std::vector<TagId> out;
  for (const char* n : names) out.push_back(TagScheme::index(n));
  return out;
}

}  // namespace

TEST(TokenAccuracy, Examples) {
  const TagSequences gold = {tags({"O", "B-Name", "I-Name", "O"})};
  EXPECT_EQ(token_accuracy(gold, gold), 1.0);
  EXPECT_EQ(token_accuracy(gold, {tags({"B-Age", "O", "O", "B-Date"})}), 0.0);
  EXPECT_EQ(token_accuracy(gold, {tags({"O", "B-Name", "I-Name", "B-ID"})}), 0.75);
}

TEST(TokenAccuracy, LengthMismatchIsContractError) {
  EXPECT_THROW(token_accuracy({tags({"O", "O"})}, {tags({"O"})}), ContractError);
  EXPECT_THROW(token_accuracy({tags({"O"})}, {}), ContractError);
}

TEST(EntityPrf, Examples) {
  const SpanSets gold = {{{Category::name, 3, 5}}};
  auto r = entity_prf(gold, gold);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);

  r = entity_prf(gold, {{{Category::name, 3, 4}}});
  EXPECT_EQ(r.tp, 0u);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);

  r = entity_prf({{{Category::name, 0, 1}, {Category::date, 2, 3}}}, {{{Category::name, 0, 1}, {Category::age, 2, 3}}});
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 0.5);
  EXPECT_EQ(r.category(Category::age).fp, 1u);
  EXPECT_EQ(r.category(Category::date).fn, 1u);
}

TEST(EntityPrf, SwappingGoldAndPredictionSwapsPrecisionAndRecall) {
  const SpanSets a = {{{Category::name, 0, 2}, {Category::id, 3, 4}}, {{Category::date, 0, 1}}};
  const SpanSets b = {{{Category::name, 0, 2}}, {{Category::date, 0, 1}, {Category::age, 2, 3}, {Category::id, 4, 5}}};
  const auto ab = entity_prf(a, b), ba = entity_prf(b, a);
  EXPECT_DOUBLE_EQ(ab.precision, ba.recall);
  EXPECT_DOUBLE_EQ(ab.recall, ba.precision);
  EXPECT_DOUBLE_EQ(ab.f1, ba.f1);
}

TEST(EntityPrf, NoSpansAnywhereIsZero) {
  const auto r = entity_prf({{}, {}}, {{}, {}});
  EXPECT_EQ(r.f1, 0.0);
}

TEST(KFold, EvenSplit) {
  const auto s = kfold_split(10, 5, 1);
  for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(s.indices(f).size(), 2u);
}

TEST(KFold, RemainderGoesToFirstFolds) {
  const auto s = kfold_split(11, 5, 1);
  std::vector<std::size_t> sizes;
  for (std::size_t f = 0; f < 5; ++f) sizes.push_back(s.indices(f).size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2, 2, 2}));
}

TEST(KFold, FoldsPartitionAndAreSeeded) {
  const auto s = kfold_split(23, 4, 9);
  std::vector<int> seen(23, 0);
  for (std::size_t f = 0; f < 4; ++f) {
    for (auto i : s.indices(f)) ++seen[i];
    EXPECT_EQ(s.indices(f).size() + s.complement(f).size(), 23u);
  }
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_EQ(kfold_split(23, 4, 9).fold_of, s.fold_of);
  EXPECT_NE(kfold_split(23, 4, 10).fold_of, s.fold_of);
}

TEST(KFold, FewerThanTwoFoldsIsContractError) {
  EXPECT_THROW(kfold_split(10, 1, 1), ContractError);
  EXPECT_THROW(kfold_split(3, 5, 1), ContractError);
}

TEST(Report, JsonlRoundTrip) {
  MetricsReport m = evaluate_tags({tags({"B-Name", "I-Name", "O", "B-Date"})}, {tags({"B-Name", "I-Name", "O", "B-Age"})});
  const std::vector<ReportRecord> records = {ReportRecord::from_metrics("Target", "transformer+gcn+crf", m),
                                             ReportRecord::from_metrics("Source", "bilstm+crf", MetricsReport{})};
  std::stringstream ss;
  write_jsonl(ss, records);
  EXPECT_EQ(read_jsonl(ss), records);
}

TEST(Report, MalformedLineIsFormatError) {
  std::stringstream ss("{\"domain\": \"x\"}\n");
  EXPECT_THROW(read_jsonl(ss), FormatError);
  std::stringstream bad("not json\n");
  EXPECT_THROW(read_jsonl(bad), FormatError);
}

TEST(Report, TableSchema) {
  const std::string t = format_table({"Domain", "Dropped Layer(s)", "A", "P", "R", "F1"}, {{"Target", "DTL", "1.0%", "2.0%", "3.0%", "4.0%"}});
  EXPECT_EQ(t.substr(0, t.find('\n')), "Domain  Dropped Layer(s)  A     P     R     F1");
  EXPECT_EQ(percent(0.7111), "71.1%");
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--bogus"}).code, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, MissingInputFileNamesPath) {
  TempDir dir;
  const std::string missing = dir.file("nope.conll");
  const auto r = run({"train", "--source", missing, "--out", dir.file("m.ckpt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
  const auto e = run({"eval", "--checkpoint", dir.file("none.ckpt"), "--source", missing});
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.err.find("none.ckpt"), std::string::npos) << e.err;
}

TEST(Cli, GradCheckPasses) {
  const auto r = run({"grad-check", "--seeds", "2"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("multi-head-attention"), std::string::npos);
  EXPECT_NE(r.out.find("crf-nll"), std::string::npos);
}

TEST(Cli, GradCheckFailsAtImpossibleTolerance) {
  const auto r = run({"grad-check", "--seeds", "1", "--tol", "1e-30"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, EndToEnd) {
  TempDir dir;
  const std::string cfg = write_tiny_config(dir);
  const std::string src = dir.file("source.conll"), tgt = dir.file("target.conll");
  const std::string ckpt = dir.file("source.ckpt"), tckpt = dir.file("target.ckpt");

  auto r = run({"gen-data", "--seed", "3", "-n", "40", "--profile", "source", "--out", src});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_corpus_file(src).size(), 40u);
  r = run({"gen-data", "--seed", "3", "-n", "20", "--profile", "target", "--out", tgt});
  ASSERT_EQ(r.code, 0) << r.err;

  r = run({"train", "--config", cfg, "--source", src, "--out", ckpt, "--test", tgt, "--report", dir.file("train.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(ckpt));
  {
    std::ifstream in(dir.file("train.jsonl"));
    const auto recs = read_jsonl(in);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].domain, "Source");
  }

  r = run({"eval", "--checkpoint", ckpt, "--target", tgt});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("token accuracy"), std::string::npos);
  EXPECT_NE(r.out.find("\"domain\":\"Target\""), std::string::npos) << r.out;

  r = run({"eval", "--checkpoint", ckpt, "--source", src, "--target", tgt});
  EXPECT_EQ(r.code, 1);

  r = run({"transfer", "--checkpoint", ckpt, "--target", tgt, "--out", tckpt, "--fine-tune-epoch", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("50 target epochs"), std::string::npos) << r.out;

  r = run({"predict", "--checkpoint", tckpt, "--input", tgt, "--out", dir.file("pred.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream pred(dir.file("pred.jsonl"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(pred, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("id"));
    EXPECT_TRUE(j.at("spans").is_array());
    ++lines;
  }
  EXPECT_EQ(lines, 20u);
}

TEST(Cli, AblateWritesSevenRecords) {
  TempDir dir;
  const std::string cfg = write_tiny_config(dir);
  const std::string src = dir.file("s.conll"), tgt = dir.file("t.conll"), tcfg = dir.file("target.json");
  write_corpus_file(src, generate_synthetic(7, 30, Profile::source));
  write_corpus_file(tgt, generate_synthetic(7, 20, Profile::target));
  std::ofstream(tcfg) << R"({"epochs": 1, "dev_fraction": 0.0})";
  const auto r = run({"ablate", "--config", cfg, "--source", src, "--target", tgt, "--seed", "7", "--target-train", "10",
                      "--target-config", tcfg, "--out", dir.file("ablate.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Dropped Layer(s)"), std::string::npos);
  std::ifstream in(dir.file("ablate.jsonl"));
  EXPECT_EQ(read_jsonl(in).size(), 7u);
}

TEST(Cli, BadConfigKeyIsUsageError) {
  TempDir dir;
  const std::string cfg = dir.file("bad.json");
  std::ofstream(cfg) << R"({"layers": 3})";
  const std::string src = dir.file("s.conll");
  write_corpus_file(src, generate_synthetic(1, 5, Profile::source));
  const auto r = run({"train", "--config", cfg, "--source", src, "--out", dir.file("m.ckpt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("layers"), std::string::npos) << r.err;
}
