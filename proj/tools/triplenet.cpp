// Command-line surface: training, evaluation, prediction, the ablation
// harness, the utterance-importance sweep, attention dumping, ensemble
// voting, and synthetic data generation.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "triplenet/trainer.hpp"

namespace fs = std::filesystem;
using namespace triplenet;

namespace {

// Options shared by every subcommand that builds a TrainConfig. Applied
// in order: preset, config file, explicit seed, ablation switches.
struct ConfigOpts {
  std::string preset = "paper";
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> flags;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "configuration preset: paper|tiny");
    cmd->add_option("--config", config_path, "flat key = value config file");
    cmd->add_option("--seed", seed, "RNG seed override")
        ->each([this](const std::string&) { seed_set = true; });
    for (const auto& name : ablation_flag_names())
      cmd->add_flag_function(
          "--" + name, [this, name](int64_t) { flags.push_back(name); },
          "ablation switch " + name);
  }

  TrainConfig build() const {
    TrainConfig cfg = preset_by_name(preset);
    if (!config_path.empty()) load_config_file(cfg, config_path);
    if (seed_set) cfg.seed = seed;
    for (const auto& name : flags) *ablation_flag_by_name(cfg.flags, name) = true;
    cfg.validate();
    return cfg;
  }

  AblationFlags suppress() const {
    AblationFlags s;
    for (const auto& name : flags) *ablation_flag_by_name(s, name) = true;
    return s;
  }
};

std::vector<IndexedSample> load_indexed(const std::string& path, const Vocab& vocab,
                                        const TrainConfig& cfg) {
  return index_samples(load_corpus(path), vocab, limits_of(cfg));
}

// Rebuilds a model from a checkpoint plus its vocab table; the config
// travels inside the checkpoint.
struct LoadedModel {
  TrainConfig cfg;
  Vocab vocab;
  std::unique_ptr<TripleNetModel<float>> model;
};

LoadedModel load_model(const std::string& ckpt_path, const std::string& vocab_path) {
  LoadedModel lm;
  Checkpoint ck = Checkpoint::load(ckpt_path);
  lm.cfg = ck.config;
  lm.vocab = load_vocab_table(vocab_path);
  lm.model = std::make_unique<TripleNetModel<float>>(lm.cfg, lm.vocab.word_count(),
                                                     lm.vocab.char_count());
  restore_checkpoint(ck, *lm.model, static_cast<Adamax<float>*>(nullptr), nullptr);
  return lm;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  check(bool(out), "cli", "cannot write " + path);
  out << content;
}

int run(int argc, char** argv) {
  CLI::App app{"multi-turn response selection: hierarchical triple attention matcher"};
  app.require_subcommand(1);

  // ---- synth-data ----
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic keyword corpus");
  struct {
    uint64_t seed = 1;
    size_t groups = 200, valid = 40, test = 40, vocab = 40, candidates = 2;
    std::string out = ".";
  } sd;
  synth->add_option("--seed", sd.seed, "generator seed");
  synth->add_option("--groups", sd.groups, "training candidate groups");
  synth->add_option("--valid-groups", sd.valid, "validation groups");
  synth->add_option("--test-groups", sd.test, "test groups");
  synth->add_option("--vocab-size", sd.vocab, "synthetic vocabulary size (>= 12)");
  synth->add_option("--candidates", sd.candidates, "candidates per group");
  synth->add_option("--out", sd.out, "output directory");
  synth->callback([&] {
    fs::create_directories(sd.out);
    SynthCorpus c = synth_corpus(sd.seed, sd.groups, sd.vocab, sd.candidates, sd.valid, sd.test);
    save_corpus(c.train, sd.out + "/train.tsv");
    save_corpus(c.valid, sd.out + "/valid.tsv");
    save_corpus(c.test, sd.out + "/test.tsv");
    std::cout << "wrote " << c.train.size() << "/" << c.valid.size() << "/" << c.test.size()
              << " samples to " << sd.out << "\n";
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a model and write checkpoints");
  struct {
    std::string data, valid, out = ".";
  } to;
  ConfigOpts tr_cfg;
  tr->add_option("--data", to.data, "training corpus TSV")->required();
  tr->add_option("--valid", to.valid, "validation corpus TSV");
  tr->add_option("--out", to.out, "output directory (vocab, checkpoints)");
  tr_cfg.attach(tr);
  tr->callback([&] {
    TrainConfig cfg = tr_cfg.build();
    fs::create_directories(to.out);
    auto samples = load_corpus(to.data);
    Vocab vocab = build_vocab(samples, cfg.min_count);
    save_vocab_table(vocab, to.out + "/vocab.tbl");
    auto train_set = index_samples(samples, vocab, limits_of(cfg));
    std::vector<IndexedSample> valid;
    if (!to.valid.empty()) valid = load_indexed(to.valid, vocab, cfg);
    TripleNetModel<float> model(cfg, vocab.word_count(), vocab.char_count());
    TrainResult res = train(model, train_set, valid, &std::cout, to.out);
    make_checkpoint(model, static_cast<Adamax<float>*>(nullptr), nullptr, res.steps)
        .save(to.out + "/final.ckpt");
    std::cout << "steps:" << res.steps << "\nfinal_loss:" << format_real(res.final_loss)
              << "\n";
    if (res.has_best)
      std::cout << "best_r_at_1:" << format_real(res.best_metric) << "\nbest_step:"
                << res.best_step << "\n";
  });

  // ---- eval / predict ----
  struct EvalOpts {
    std::string ckpt, vocab, data, scores;
    size_t candidates = 0;
  };
  auto add_eval_opts = [](CLI::App* cmd, EvalOpts& eo) {
    cmd->add_option("--ckpt", eo.ckpt, "checkpoint file")->required();
    cmd->add_option("--vocab", eo.vocab, "vocab table written by train")->required();
    cmd->add_option("--data", eo.data, "corpus TSV")->required();
    cmd->add_option("--candidates", eo.candidates, "group size override");
  };

  auto* ev = app.add_subcommand("eval", "score a corpus and report ranking metrics");
  EvalOpts eo;
  ConfigOpts ev_cfg;  // ablation switches act as eval-time suppression here
  add_eval_opts(ev, eo);
  ev->add_option("--scores", eo.scores, "write per-candidate scores TSV");
  for (const auto& name : ablation_flag_names())
    ev->add_flag_function(
        "--" + name, [&ev_cfg, name](int64_t) { ev_cfg.flags.push_back(name); },
        "suppress at forward time: " + name);
  ev->callback([&] {
    LoadedModel lm = load_model(eo.ckpt, eo.vocab);
    size_t n = eo.candidates ? eo.candidates : lm.cfg.candidates;
    AblationFlags sup = ev_cfg.suppress();
    auto groups = score_groups(*lm.model, load_indexed(eo.data, lm.vocab, lm.cfg), n, &sup);
    EvalReport rep = evaluate_groups(groups, n);
    std::cout << rep.table() << rep.key_values();
    if (!eo.scores.empty()) write_scores(groups, eo.scores);
  });

  auto* pr = app.add_subcommand("predict", "score a corpus and emit the scores TSV");
  EvalOpts po;
  add_eval_opts(pr, po);
  pr->add_option("--scores", po.scores, "output scores TSV (stdout when omitted)");
  pr->callback([&] {
    LoadedModel lm = load_model(po.ckpt, po.vocab);
    size_t n = po.candidates ? po.candidates : lm.cfg.candidates;
    auto groups = score_groups(*lm.model, load_indexed(po.data, lm.vocab, lm.cfg), n);
    if (po.scores.empty()) {
      std::cout.precision(17);
      for (auto& g : groups)
        for (auto& c : g.candidates)
          std::cout << g.id << '\t' << c.score << '\t' << c.label << '\n';
    } else {
      write_scores(groups, po.scores);
    }
  });

  // ---- ablate ----
  auto* ab = app.add_subcommand("ablate", "per-flag ablation sweep with metric deltas");
  struct {
    std::string data, valid, test;
    bool eval_only = false;
  } ao;
  ConfigOpts ab_cfg;
  ab->add_option("--data", ao.data, "training corpus TSV")->required();
  ab->add_option("--valid", ao.valid, "validation corpus TSV");
  ab->add_option("--test", ao.test, "test corpus TSV")->required();
  ab->add_flag("--eval-only", ao.eval_only,
               "suppress flags on the trained full model instead of retraining");
  ab_cfg.attach(ab);
  ab->callback([&] {
    TrainConfig cfg = preset_by_name(ab_cfg.preset);
    if (!ab_cfg.config_path.empty()) load_config_file(cfg, ab_cfg.config_path);
    if (ab_cfg.seed_set) cfg.seed = ab_cfg.seed;
    cfg.validate();
    std::vector<std::string> flags =
        ab_cfg.flags.empty() ? ablation_flag_names() : ab_cfg.flags;
    auto samples = load_corpus(ao.data);
    Vocab vocab = build_vocab(samples, cfg.min_count);
    auto train_set = index_samples(samples, vocab, limits_of(cfg));
    std::vector<IndexedSample> valid;
    if (!ao.valid.empty()) valid = load_indexed(ao.valid, vocab, cfg);
    auto test_set = load_indexed(ao.test, vocab, cfg);
    auto rows = ablation_sweep<float>(cfg, vocab.word_count(), vocab.char_count(), train_set,
                                      valid, test_set, flags, !ao.eval_only);
    std::cout << ablation_table(rows);
  });

  // ---- utterance-importance ----
  auto* ui = app.add_subcommand("utterance-importance",
                                "per-position removal sweep (query-blind variant)");
  struct {
    std::string data, test;
  } uo;
  ConfigOpts ui_cfg;
  ui->add_option("--data", uo.data, "training corpus TSV")->required();
  ui->add_option("--test", uo.test, "test corpus TSV")->required();
  ui_cfg.attach(ui);
  ui->callback([&] {
    TrainConfig cfg = ui_cfg.build();
    auto samples = load_corpus(uo.data);
    Vocab vocab = build_vocab(samples, cfg.min_count);
    auto train_set = index_samples(samples, vocab, limits_of(cfg));
    auto test_set = load_indexed(uo.test, vocab, cfg);
    auto rows = utterance_importance<float>(cfg, vocab.word_count(), vocab.char_count(),
                                            train_set, test_set);
    std::cout << "position  r_at_1    drop      (position " << cfg.max_turns - 1
              << " is the query)\n";
    for (auto& r : rows)
      std::cout << r.position << "         " << format_real(r.r_at_1) << "  "
                << (r.drop >= 0 ? "+" : "") << format_real(r.drop) << "\n";
  });

  // ---- dump-attention ----
  auto* da = app.add_subcommand("dump-attention",
                                "word-level attention of one sample as labeled TSVs");
  struct {
    std::string ckpt, vocab, data, out = ".";
    size_t index = 0;
  } dopt;
  da->add_option("--ckpt", dopt.ckpt, "checkpoint file")->required();
  da->add_option("--vocab", dopt.vocab, "vocab table")->required();
  da->add_option("--data", dopt.data, "corpus TSV")->required();
  da->add_option("--index", dopt.index, "0-based sample index");
  da->add_option("--out", dopt.out, "output directory");
  da->callback([&] {
    LoadedModel lm = load_model(dopt.ckpt, dopt.vocab);
    auto samples = load_corpus(dopt.data);
    check(dopt.index < samples.size(), "dump-attention",
          "sample index " + std::to_string(dopt.index) + " out of range (corpus has " +
              std::to_string(samples.size()) + " samples)");
    AttentionTsv tsv = dump_attention_tsv(*lm.model, samples[dopt.index], lm.vocab);
    fs::create_directories(dopt.out);
    write_file(dopt.out + "/query_context.tsv", tsv.query_over_context);
    write_file(dopt.out + "/query_response.tsv", tsv.query_over_response);
    write_file(dopt.out + "/response_context.tsv", tsv.response_over_context);
    std::cout << "wrote 3 attention TSVs to " << dopt.out << "\n";
  });

  // ---- ensemble-vote ----
  auto* en = app.add_subcommand("ensemble-vote", "merge score files by top-1 plurality vote");
  std::vector<std::string> score_files;
  en->add_option("files", score_files, "scores TSVs from k models")->required();
  en->callback([&] {
    std::vector<std::vector<CandidateGroup>> runs;
    for (auto& f : score_files) runs.push_back(read_scores(f));
    auto winners = ensemble_vote(runs);
    size_t hits = 0;
    for (size_t g = 0; g < winners.size(); ++g) {
      std::cout << runs[0][g].id << '\t' << winners[g] << '\n';
      hits += runs[0][g].candidates[winners[g]].label == 1;
    }
    std::cout << "vote_r_at_1:" << format_real(double(hits) / double(winners.size())) << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
