#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "piie/checkpoint.hpp"
#include "piie/corpus.hpp"
#include "piie/embedder.hpp"
#include "piie/errors.hpp"
#include "piie/experiments.hpp"
#include "piie/layer_checks.hpp"
#include "piie/log.hpp"
#include "piie/metrics.hpp"
#include "piie/model.hpp"
#include "piie/report.hpp"
#include "piie/synthetic.hpp"
#include "piie/trainer.hpp"

namespace piie {

namespace cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_runtime = 2;

// Flags shared by every subcommand that builds a model configuration.
struct ModelFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string encoder;
  bool no_gcn = false;
  std::string decoder;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "JSON model configuration");
    app.add_option("--seed", seed, "Model seed");
    app.add_option("--encoder", encoder, "Context encoder")->check(CLI::IsMember({"transformer", "bilstm"}));
    app.add_flag("--no-gcn", no_gcn, "Drop the dependency GCN");
    app.add_option("--decoder", decoder, "Tag decoder")->check(CLI::IsMember({"crf", "softmax"}));
  }

  ModelConfig resolve(ModelConfig base = {}) const {
    if (!config_path.empty()) base = ModelConfig::from_json(read_json(config_path), base);
    if (seed) base.seed = *seed;
    if (!encoder.empty()) base.encoder = parse_encoder(encoder);
    if (no_gcn) base.use_gcn = false;
    if (!decoder.empty()) base.decoder = parse_decoder(decoder);
    base.validate();
    return base;
  }

  static nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("config file '" + path + "': " + e.what());
    }
  }
};

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError("missing " + what + " path");
  if (!std::filesystem::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
}

inline Corpus read_corpus(const std::string& path, const std::string& what) {
  require_file(path, what);
  Corpus c = parse_corpus_file(path);
  if (c.empty()) throw ValidationError(what + " '" + path + "' has no sentences");
  return c;
}

inline Checkpoint read_checkpoint_file(const std::string& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

inline std::string category_table(const MetricsReport& m) {
  std::vector<std::vector<std::string>> rows;
  for (auto c : all_categories) {
    const auto& s = m.category(c);
    rows.push_back({std::string(to_string(c)), percent(s.precision), percent(s.recall), percent(s.f1),
                    std::to_string(s.tp), std::to_string(s.fp), std::to_string(s.fn)});
  }
  rows.push_back({"All", percent(m.precision), percent(m.recall), percent(m.f1), std::to_string(m.tp),
                  std::to_string(m.fp), std::to_string(m.fn)});
  return format_table({"Category", "P", "R", "F1", "TP", "FP", "FN"}, rows) +
         "token accuracy " + percent(m.accuracy) + "\n";
}

// Records go to `path` when given, otherwise to `out` after the table.
inline void emit_records(const std::vector<ReportRecord>& records, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    write_jsonl(out, records);
    return;
  }
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write report file '" + path + "'");
  write_jsonl(f, records);
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("bad seed '" + item + "' in --seeds");
    }
  }
  if (out.empty()) throw ValidationError("--seeds needs at least one seed");
  return out;
}

}  // namespace cli

// Entry point for the command-line tool. Exit codes: 0 success, 1 usage or
// validation error, 2 runtime or numeric error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli;
  CLI::App app{"PII extraction with dependency GCNs and transfer learning"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log training progress");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus");
  std::uint64_t gen_seed = 7;
  std::size_t gen_n = 2000;
  std::string gen_profile = "source", gen_out;
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--sentences,-n", gen_n, "Number of sentences");
  gen->add_option("--profile", gen_profile, "source or target")->check(CLI::IsMember({"source", "target"}));
  gen->add_option("--out", gen_out, "Output corpus file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on a source corpus");
  ModelFlags train_flags;
  train_flags.add_to(*train_cmd);
  std::string train_source, train_out, train_test, train_embeddings, train_report;
  train_cmd->add_option("--source", train_source, "Training corpus")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint to write")->required();
  train_cmd->add_option("--test", train_test, "Corpus to evaluate after training");
  train_cmd->add_option("--embeddings", train_embeddings, "Pretrained word vectors (text format)");
  train_cmd->add_option("--report", train_report, "JSONL report for --test");

  // transfer
  auto* transfer_cmd = app.add_subcommand("transfer", "Transfer a source checkpoint and train on a target corpus");
  ModelFlags transfer_flags;
  transfer_flags.add_to(*transfer_cmd);
  std::string transfer_ckpt, transfer_target, transfer_out, transfer_test, transfer_report;
  bool transfer_no_freeze = false;
  std::optional<std::size_t> transfer_fte;
  transfer_cmd->add_option("--checkpoint", transfer_ckpt, "Source checkpoint")->required();
  transfer_cmd->add_option("--target", transfer_target, "Target training corpus")->required();
  transfer_cmd->add_option("--out", transfer_out, "Target checkpoint to write")->required();
  transfer_cmd->add_option("--test", transfer_test, "Corpus to evaluate after training");
  transfer_cmd->add_option("--report", transfer_report, "JSONL report for --test");
  transfer_cmd->add_flag("--no-freeze", transfer_no_freeze, "Fine-tune transferred layers from the start");
  transfer_cmd->add_option("--fine-tune-epoch", transfer_fte, "Unfreeze transferred layers from this epoch");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled corpus");
  std::string eval_ckpt, eval_source, eval_target, eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  auto* eval_src_opt = eval_cmd->add_option("--source", eval_source, "Source-domain corpus");
  auto* eval_tgt_opt = eval_cmd->add_option("--target", eval_target, "Target-domain corpus");
  eval_src_opt->excludes(eval_tgt_opt);
  eval_cmd->add_option("--out", eval_out, "JSONL report");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation suite (and optionally the baselines)");
  ModelFlags ablate_flags;
  ablate_flags.add_to(*ablate_cmd);
  std::string ablate_source, ablate_target, ablate_out, ablate_seeds, ablate_target_config;
  std::optional<std::uint64_t> ablate_split_seed;
  std::size_t ablate_target_train = 100, ablate_threads = 1;
  bool ablate_no_freeze = false, ablate_baselines = false;
  std::optional<std::size_t> ablate_fte;
  ablate_cmd->add_option("--source", ablate_source, "Source corpus")->required();
  ablate_cmd->add_option("--target", ablate_target, "Target corpus")->required();
  ablate_cmd->add_option("--out", ablate_out, "JSONL report");
  ablate_cmd->add_option("--seeds", ablate_seeds, "Comma-separated model seeds (overrides --seed)");
  ablate_cmd->add_option("--split-seed", ablate_split_seed, "Seed of the source test split (default: first seed)");
  ablate_cmd->add_option("--target-train", ablate_target_train, "Leading target sentences used for training");
  ablate_cmd->add_option("--threads", ablate_threads, "Worker threads");
  ablate_cmd->add_option("--target-config", ablate_target_config,
                         "JSON keys applied to target runs (default: 50 epochs, no dev split)");
  ablate_cmd->add_flag("--no-freeze", ablate_no_freeze, "Fine-tune transferred layers from the start");
  ablate_cmd->add_option("--fine-tune-epoch", ablate_fte, "Unfreeze transferred layers from this epoch");
  ablate_cmd->add_flag("--baselines", ablate_baselines, "Also run the baseline comparison");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Extract PII spans with a checkpoint");
  std::string predict_ckpt, predict_input, predict_out;
  predict_cmd->add_option("--checkpoint", predict_ckpt, "Checkpoint")->required();
  predict_cmd->add_option("--input", predict_input, "Corpus file; the TAG column is ignored")->required();
  predict_cmd->add_option("--out", predict_out, "JSONL output (default: stdout)");

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of every layer type");
  std::size_t grad_seeds = 10;
  double grad_eps = 1e-3, grad_tol = 1e-4;
  grad_cmd->add_option("--seeds", grad_seeds, "Random instances per layer");
  grad_cmd->add_option("--eps", grad_eps, "Central-difference step");
  grad_cmd->add_option("--tol", grad_tol, "Relative error tolerance");
  bool grad_per_entry = false;
  grad_cmd->add_flag("--per-entry", grad_per_entry, "Judge every gradient entry separately");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }
  if (verbose) log::set_level(log::Level::info);

  try {
    if (*gen) {
      if (gen_n == 0) throw ValidationError("--sentences must be positive");
      const Corpus c = generate_synthetic(gen_seed, gen_n, parse_profile(gen_profile));
      write_corpus_file(gen_out, c);
      out << "wrote " << c.size() << " " << gen_profile << " sentences to " << gen_out << "\n";
      return exit_ok;
    }

    if (*train_cmd) {
      const ModelConfig cfg = train_flags.resolve();
      const Corpus corpus = read_corpus(train_source, "source corpus");
      std::optional<Corpus> test;
      if (!train_test.empty()) test = read_corpus(train_test, "test corpus");
      std::optional<EmbeddingTable> pretrained;
      if (!train_embeddings.empty()) {
        require_file(train_embeddings, "embedding file");
        Rng rng(cfg.seed ^ 0xe7037ed1a0b428dbULL);
        pretrained = load_pretrained(train_embeddings, Vocab::build(corpus), cfg.embedder.word_dim, rng);
      }
      TrainResult r;
      Model model = fit(corpus, cfg, {}, &r, pretrained ? &*pretrained : nullptr);
      save_checkpoint(make_checkpoint(model, provenance_of("source", r)), train_out);
      out << "trained " << cfg.label() << " for " << r.history.size() << " epochs (best " << r.best_epoch
          << ", dev F1 " << percent(r.best_dev_f1) << "); checkpoint " << train_out << "\n";
      if (test) {
        const auto m = evaluate(model, *test);
        out << category_table(m);
        emit_records({ReportRecord::from_metrics("Source", cfg.label(), m)}, train_report, out);
      }
      return exit_ok;
    }

    if (*transfer_cmd) {
      const Checkpoint src = read_checkpoint_file(transfer_ckpt);
      const Corpus corpus = read_corpus(transfer_target, "target corpus");
      std::optional<Corpus> test;
      if (!transfer_test.empty()) test = read_corpus(transfer_test, "test corpus");
      const ModelConfig cfg = transfer_flags.resolve(ModelConfig::from_json(default_target_overrides(), src.config()));
      TransferPlan plan = TransferPlan::for_config(cfg);
      plan.set_freeze(!transfer_no_freeze);
      plan.fine_tune_epoch = transfer_fte;
      Model model = transfer(src, plan, cfg, corpus);
      TrainResult r;
      const Checkpoint ckpt = train_target(model, corpus, {}, &r);
      save_checkpoint(ckpt, transfer_out);
      out << "transferred " << cfg.label() << " and trained " << r.history.size() << " target epochs; checkpoint "
          << transfer_out << "\n";
      if (test) {
        const auto m = evaluate(model, *test);
        out << category_table(m);
        emit_records({ReportRecord::from_metrics("Target", cfg.label(), m)}, transfer_report, out);
      }
      return exit_ok;
    }

    if (*eval_cmd) {
      if (eval_source.empty() && eval_target.empty()) throw ValidationError("eval needs --source or --target");
      const Checkpoint ckpt = read_checkpoint_file(eval_ckpt);
      const bool is_source = !eval_source.empty();
      const Corpus corpus = read_corpus(is_source ? eval_source : eval_target, "corpus");
      const Model model = model_from_checkpoint(ckpt);
      const auto m = evaluate(model, corpus);
      out << category_table(m);
      emit_records({ReportRecord::from_metrics(is_source ? "Source" : "Target", model.config().label(), m)}, eval_out,
                   out);
      return exit_ok;
    }

    if (*ablate_cmd) {
      const ModelConfig base = ablate_flags.resolve();
      const Corpus source = read_corpus(ablate_source, "source corpus");
      const Corpus target = read_corpus(ablate_target, "target corpus");
      ExperimentOptions opt;
      opt.seeds = ablate_seeds.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seeds(ablate_seeds);
      opt.split_seed = ablate_split_seed.value_or(opt.seeds.front());
      opt.target_train = ablate_target_train;
      opt.threads = std::max<std::size_t>(1, ablate_threads);
      opt.freeze = !ablate_no_freeze;
      opt.fine_tune_epoch = ablate_fte;
      if (!ablate_target_config.empty()) opt.target_overrides = ModelFlags::read_json(ablate_target_config);
      if (verbose) opt.progress = [&err](const std::string& s) { err << s << "\n"; };
      auto records = std::vector<ReportRecord>{};
      const auto table = ablate(source, target, base, opt);
      out << table.text();
      records = table.records();
      if (ablate_baselines) {
        const auto baselines = compare_baselines(source, target, base, opt);
        out << "\n" << baselines.text();
        const auto more = baselines.records();
        records.insert(records.end(), more.begin(), more.end());
      }
      emit_records(records, ablate_out, out);
      return exit_ok;
    }

    if (*predict_cmd) {
      const Checkpoint ckpt = read_checkpoint_file(predict_ckpt);
      const Corpus corpus = read_corpus(predict_input, "input corpus");
      const Model model = model_from_checkpoint(ckpt);
      std::ofstream file;
      if (!predict_out.empty()) {
        file.open(predict_out);
        if (!file) throw ValidationError("cannot write '" + predict_out + "'");
      }
      std::ostream& dst = predict_out.empty() ? out : file;
      for (const auto& s : corpus) {
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& sp : model.predict(s)) {
          std::string text;
          for (std::size_t i = sp.start; i < sp.end; ++i) text += (i > sp.start ? " " : "") + s.tokens[i].raw;
          spans.push_back({{"category", to_string(sp.category)}, {"start", sp.start}, {"end", sp.end}, {"text", text}});
        }
        dst << nlohmann::json{{"id", s.id}, {"spans", spans}}.dump() << "\n";
      }
      return exit_ok;
    }

    if (*grad_cmd) {
      GradCheckOptions opt;
      opt.eps = grad_eps;
      opt.tol = grad_tol;
      opt.whole_input = !grad_per_entry;
      const auto summary = check_all_layers(grad_seeds, opt);
      std::vector<std::vector<std::string>> rows;
      for (const auto& l : summary.layers) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", l.max_rel_error);
        rows.push_back({l.layer, std::to_string(l.seeds), buf, l.passed ? "ok" : "FAIL"});
      }
      out << format_table({"Layer", "Seeds", "Max rel. error", "Status"}, rows);
      out << "checked " << summary.layers.size() << " layer types in " << summary.seconds << " s\n";
      return summary.passed() ? exit_ok : exit_runtime;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_runtime;
  }
  return exit_usage;
}

}  // namespace piie
