#pragma once

// Training loop (Adamax, seeded shuffling, early stopping), evaluation
// driver, ablation harness, utterance-importance sweep, attention dump
// and ensemble voting. Everything is single-threaded and bit-deterministic
// for a fixed seed: log lines use a fixed numeric format, reduction orders
// are fixed, and checkpoints round-trip exactly.

#include <iomanip>
#include <ostream>
#include <sstream>

#include "triplenet/checkpoint.hpp"
#include "triplenet/metrics.hpp"
#include "triplenet/model.hpp"
#include "triplenet/optimizer.hpp"

namespace triplenet {

inline Limits limits_of(const TrainConfig& cfg) {
  return Limits{cfg.max_turns, cfg.max_words, cfg.max_chars};
}

inline std::vector<IndexedSample> index_samples(const std::vector<DialogueSample>& samples,
                                                const Vocab& vocab, const Limits& lim) {
  std::vector<IndexedSample> out;
  out.reserve(samples.size());
  for (auto& s : samples) out.push_back(index_and_pad(s, vocab, lim));
  return out;
}

inline std::string format_real(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------- evaluation ----------

// Scores consecutive blocks of `group_size` samples as candidate groups.
template <class T>
std::vector<CandidateGroup> score_groups(TripleNetModel<T>& model,
                                         const std::vector<IndexedSample>& samples,
                                         size_t group_size,
                                         const AblationFlags* suppress = nullptr) {
  check(group_size >= 2, "evaluate", "group size must be >= 2");
  check(samples.size() % group_size == 0, "evaluate",
        "sample count " + std::to_string(samples.size()) +
            " is not a multiple of group size " + std::to_string(group_size));
  size_t batch = model.config().batch_size;
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (size_t off = 0; off < samples.size(); off += batch) {
    size_t take = std::min(batch, samples.size() - off);
    std::vector<IndexedSample> chunk(samples.begin() + off, samples.begin() + off + take);
    for (auto& s : model.forward(chunk, false, suppress)) scores.push_back(double(s.item()));
  }
  std::vector<CandidateGroup> groups;
  for (size_t g = 0; g * group_size < samples.size(); ++g) {
    CandidateGroup grp{std::to_string(g), {}};
    for (size_t c = 0; c < group_size; ++c)
      grp.candidates.push_back(
          {scores[g * group_size + c], samples[g * group_size + c].label});
    groups.push_back(std::move(grp));
  }
  return groups;
}

struct EvalReport {
  size_t group_size = 0;
  double r_at_1 = 0;
  double r_at_2 = 0;
  double r_at_5 = 0;  // only when group_size >= 5
  RankReport rank;

  std::string table() const {
    std::ostringstream os;
    os << "metric            value\n";
    os << "R_" << group_size << "@1           " << format_real(r_at_1) << "\n";
    if (group_size >= 2) os << "R_" << group_size << "@2           " << format_real(r_at_2) << "\n";
    if (group_size >= 5) os << "R_" << group_size << "@5           " << format_real(r_at_5) << "\n";
    os << "MAP               " << format_real(rank.map) << "\n";
    os << "MRR               " << format_real(rank.mrr) << "\n";
    os << "P@1               " << format_real(rank.p1) << "\n";
    return os.str();
  }
  std::string key_values() const {
    std::ostringstream os;
    os << "group_size:" << group_size << "\n";
    os << "r_at_1:" << format_real(r_at_1) << "\n";
    if (group_size >= 2) os << "r_at_2:" << format_real(r_at_2) << "\n";
    if (group_size >= 5) os << "r_at_5:" << format_real(r_at_5) << "\n";
    os << "map:" << format_real(rank.map) << "\n";
    os << "mrr:" << format_real(rank.mrr) << "\n";
    os << "p1:" << format_real(rank.p1) << "\n";
    os << "groups_skipped:" << rank.groups_skipped << "\n";
    return os.str();
  }
};

inline EvalReport evaluate_groups(const std::vector<CandidateGroup>& groups, size_t n) {
  EvalReport rep;
  rep.group_size = n;
  rep.r_at_1 = recall_at_k(groups, n, 1);
  if (n >= 2) rep.r_at_2 = recall_at_k(groups, n, 2);
  if (n >= 5) rep.r_at_5 = recall_at_k(groups, n, 5);
  rep.rank = map_mrr_p1(groups);
  return rep;
}

// ---------- checkpoint glue ----------

template <class T>
Checkpoint make_checkpoint(TripleNetModel<T>& model, Adamax<T>* opt, Rng* rng,
                           uint64_t step) {
  Checkpoint ck;
  ck.step = step;
  ck.config = model.config();
  if (rng) {
    std::ostringstream os;
    os << rng->engine();
    ck.rng_state = os.str();
  }
  auto put = [&](const std::string& name, const Shape& shape, const std::vector<T>& data) {
    TensorEntry e{name, shape, {}};
    e.data.reserve(data.size());
    for (T v : data) e.data.push_back(float(v));
    ck.tensors.push_back(std::move(e));
  };
  for (auto& [name, t] : model.params().items()) put(name, t.shape(), t.values());
  for (auto& [name, buf] : model.buffers()) put(name, Shape{buf->size()}, *buf);
  if (opt)
    for (auto& [name, buf] : opt->state_buffers()) put(name, Shape{buf->size()}, *buf);
  return ck;
}

template <class T>
void restore_checkpoint(const Checkpoint& ck, TripleNetModel<T>& model, Adamax<T>* opt,
                        Rng* rng) {
  auto take = [&](const std::string& name, const Shape& shape, std::vector<T>& dst) {
    const TensorEntry& e = ck.find(name);
    check(e.shape == shape, "checkpoint",
          "shape mismatch for " + name + ": file " + shape_str(e.shape) + " vs model " +
              shape_str(shape));
    dst.assign(e.data.begin(), e.data.end());
  };
  for (auto& [name, t] : model.params().items()) take(name, t.shape(), t.values());
  for (auto& [name, buf] : model.buffers()) take(name, Shape{buf->size()}, *buf);
  if (opt) {
    for (auto& [name, buf] : opt->state_buffers()) take(name, Shape{buf->size()}, *buf);
    opt->set_step_count(ck.step);
  }
  if (rng && !ck.rng_state.empty()) {
    std::istringstream is(ck.rng_state);
    is >> rng->engine();
    check(bool(is), "checkpoint", "bad rng state");
  }
}

// ---------- training ----------

struct TrainResult {
  std::vector<std::string> log;  // deterministic, one line per event
  uint64_t steps = 0;
  double final_loss = 0;
  bool has_best = false;
  double best_metric = 0;
  uint64_t best_step = 0;
  Checkpoint best;
};

// Seeded shuffled-batch training. If `valid` is non-empty it is scored
// every eval_interval steps with R_n@1 (n = cfg.candidates); the best
// checkpoint is kept (and written to out_dir, when given) and early
// stopping uses cfg.patience evaluations without improvement. Training
// aborts on non-finite loss with the best checkpoint retained.
template <class T>
TrainResult train(TripleNetModel<T>& model, const std::vector<IndexedSample>& train_set,
                  const std::vector<IndexedSample>& valid,
                  std::ostream* log_stream = nullptr, const std::string& out_dir = "") {
  const TrainConfig& cfg = model.config();
  check(!train_set.empty(), "trainer", "empty training set");
  Adamax<T> opt(model.params(), T(cfg.lr), T(cfg.beta1), T(cfg.beta2), T(cfg.epsilon));
  Rng rng(cfg.seed);
  TrainResult res;
  auto emit = [&](const std::string& line) {
    res.log.push_back(line);
    if (log_stream) (*log_stream) << line << "\n";
  };
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  uint64_t step = 0;
  size_t bad_evals = 0;
  bool stop = false;
  while (!stop && step < cfg.max_steps) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (size_t off = 0; off < order.size() && !stop; off += cfg.batch_size) {
      size_t take = std::min(cfg.batch_size, order.size() - off);
      std::vector<IndexedSample> batch;
      batch.reserve(take);
      for (size_t i = 0; i < take; ++i) batch.push_back(train_set[order[off + i]]);
      model.params().zero_grads();
      TensorT<T> loss = model.batch_loss(batch, true);
      double lv = double(loss.item());
      if (!std::isfinite(lv)) {
        emit("step " + std::to_string(step + 1) + " loss diverged");
        tensor_error("trainer", "non-finite loss at step " + std::to_string(step + 1) +
                                    "; best checkpoint retained");
      }
      loss.backward();
      opt.step();
      ++step;
      res.final_loss = lv;
      emit("step " + std::to_string(step) + " loss " + format_real(lv));
      if (!valid.empty() && step % cfg.eval_interval == 0) {
        auto groups = score_groups(model, valid, cfg.candidates);
        double r1 = recall_at_k(groups, cfg.candidates, 1);
        emit("step " + std::to_string(step) + " valid_r_at_1 " + format_real(r1));
        if (!res.has_best || r1 > res.best_metric) {
          res.has_best = true;
          res.best_metric = r1;
          res.best_step = step;
          res.best = make_checkpoint(model, &opt, &rng, step);
          if (!out_dir.empty()) res.best.save(out_dir + "/best.ckpt");
          bad_evals = 0;
        } else if (cfg.early_stopping && ++bad_evals >= cfg.patience) {
          emit("step " + std::to_string(step) + " early_stop");
          stop = true;
        }
      }
      if (step >= cfg.max_steps) stop = true;
    }
  }
  res.steps = step;
  if (!res.has_best) {
    res.has_best = true;
    res.best_metric = 0;
    res.best_step = step;
    res.best = make_checkpoint(model, &opt, &rng, step);
    if (!out_dir.empty()) res.best.save(out_dir + "/best.ckpt");
  }
  return res;
}

// ---------- ablation harness ----------

struct AblationRow {
  std::string flag;
  EvalReport report;
  double delta_r_at_1 = 0;  // vs the full model
};

// Retrain protocol: one model per flag, trained from scratch with the flag
// set structurally. Eval-only protocol: the base model is rescored with
// the flag suppressed at forward time.
template <class T>
std::vector<AblationRow> ablation_sweep(const TrainConfig& base_cfg, size_t word_vocab,
                                        size_t char_vocab,
                                        const std::vector<IndexedSample>& train_set,
                                        const std::vector<IndexedSample>& valid,
                                        const std::vector<IndexedSample>& test_set,
                                        const std::vector<std::string>& flag_names,
                                        bool retrain, std::ostream* log = nullptr) {
  for (auto& name : flag_names) {
    AblationFlags probe;
    check(ablation_flag_by_name(probe, name) != nullptr, "ablate",
          "unknown flag '" + name + "'; valid flags: " + [] {
            std::string all;
            for (auto& f : ablation_flag_names()) all += (all.empty() ? "" : ", ") + f;
            return all;
          }());
  }
  std::vector<AblationRow> rows;
  TripleNetModel<T> base(base_cfg, word_vocab, char_vocab);
  train(base, train_set, valid, log);
  EvalReport full = evaluate_groups(score_groups(base, test_set, base_cfg.candidates),
                                    base_cfg.candidates);
  rows.push_back({"full", full, 0.0});
  for (auto& name : flag_names) {
    AblationRow row;
    row.flag = name;
    if (retrain) {
      TrainConfig cfg = base_cfg;
      *ablation_flag_by_name(cfg.flags, name) = true;
      TripleNetModel<T> variant(cfg, word_vocab, char_vocab);
      train(variant, train_set, valid, log);
      row.report = evaluate_groups(score_groups(variant, test_set, cfg.candidates),
                                   cfg.candidates);
    } else {
      AblationFlags suppress;
      *ablation_flag_by_name(suppress, name) = true;
      row.report = evaluate_groups(
          score_groups(base, test_set, base_cfg.candidates, &suppress), base_cfg.candidates);
    }
    row.delta_r_at_1 = row.report.r_at_1 - full.r_at_1;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant                r_at_1    delta\n";
  for (auto& r : rows) {
    os << std::left << std::setw(22) << r.flag << ' ' << format_real(r.report.r_at_1) << ' '
       << (r.delta_r_at_1 >= 0 ? "+" : "") << format_real(r.delta_r_at_1) << "\n";
  }
  return os.str();
}

// ---------- utterance importance ----------

// Blanks context position `pos` (0-based row in the padded context).
inline IndexedSample drop_utterance(IndexedSample ix, size_t pos) {
  check(pos < ix.n(), "utterance-importance",
        "position " + std::to_string(pos) + " out of range 0.." + std::to_string(ix.n() - 1));
  size_t m = ix.m(), l = ix.l();
  ix.utt_mask[pos] = 0;
  for (size_t j = 0; j < m; ++j) {
    ix.ctx_word[pos * m + j] = kPadId;
    ix.ctx_token_mask[pos * m + j] = 0;
    ix.ctx_mf[pos * m + j] = 0;
    for (size_t k = 0; k < l; ++k) ix.ctx_char[(pos * m + j) * l + k] = kPadId;
  }
  return ix;
}

struct ImportanceRow {
  size_t position = 0;  // 0-based context row; n-1 is the query
  double r_at_1 = 0;
  double drop = 0;  // baseline minus this variant
};

// Retrains the query-blind variant once per context position with that
// position blanked in both training and evaluation; reports the R_n@1
// drop against the same variant trained on intact data.
template <class T>
std::vector<ImportanceRow> utterance_importance(const TrainConfig& base_cfg, size_t word_vocab,
                                                size_t char_vocab,
                                                const std::vector<IndexedSample>& train_set,
                                                const std::vector<IndexedSample>& test_set,
                                                std::ostream* log = nullptr) {
  TrainConfig cfg = base_cfg;
  cfg.flags.no_query = true;  // treat every utterance the same way
  TripleNetModel<T> base(cfg, word_vocab, char_vocab);
  train(base, train_set, {}, log);
  double baseline = recall_at_k(score_groups(base, test_set, cfg.candidates),
                                cfg.candidates, 1);
  std::vector<ImportanceRow> rows;
  for (size_t pos = 0; pos < cfg.max_turns; ++pos) {
    std::vector<IndexedSample> tr, te;
    tr.reserve(train_set.size());
    te.reserve(test_set.size());
    for (auto& s : train_set) tr.push_back(drop_utterance(s, pos));
    for (auto& s : test_set) te.push_back(drop_utterance(s, pos));
    TripleNetModel<T> variant(cfg, word_vocab, char_vocab);
    train(variant, tr, {}, log);
    double r1 = recall_at_k(score_groups(variant, te, cfg.candidates), cfg.candidates, 1);
    rows.push_back({pos, r1, baseline - r1});
  }
  return rows;
}

// ---------- attention dump ----------

// Word-level attention of one sample as three TSVs with token labels.
// Rows are renormalized softmax outputs, so each sums to 1.
struct AttentionTsv {
  std::string query_over_context;
  std::string query_over_response;
  std::string response_over_context;
};

template <class T>
AttentionTsv dump_attention_tsv(TripleNetModel<T>& model, const DialogueSample& sample,
                                const Vocab& vocab) {
  const TrainConfig& cfg = model.config();
  check(TripleNetModel<T>::attention_enabled(cfg.flags) &&
            TripleNetModel<T>::level_active(cfg.flags, Level::Word),
        "dump-attention", "word-level triple attention is disabled by the model's flags");
  Limits lim = limits_of(cfg);
  IndexedSample ix = index_and_pad(sample, vocab, lim);
  AttentionDump<T> dump;
  model.forward({ix}, false, nullptr, &dump);

  auto label = [&](int32_t id) {
    return id == kPadId ? std::string("<pad>") : std::string(vocab.id_to_word[size_t(id)]);
  };
  std::string note;
  if (sample.context.size() > lim.max_turns)
    note += "# context truncated to the last " + std::to_string(lim.max_turns) +
            " utterances\n";
  for (auto& u : sample.context)
    if (u.size() > lim.max_words) {
      note += "# utterances truncated to the first " + std::to_string(lim.max_words) +
              " tokens\n";
      break;
    }
  if (sample.response.size() > lim.max_words)
    note += "# response truncated to the first " + std::to_string(lim.max_words) + " tokens\n";

  auto render = [&](const TensorT<T>& att, const std::vector<int32_t>& row_ids,
                    const std::vector<int32_t>& col_ids) {
    std::ostringstream os;
    os << note;
    for (size_t j = 0; j < col_ids.size(); ++j) os << '\t' << label(col_ids[j]);
    os << '\n';
    for (size_t i = 0; i < row_ids.size(); ++i) {
      os << label(row_ids[i]);
      for (size_t j = 0; j < col_ids.size(); ++j) os << '\t' << format_real(att(i, j));
      os << '\n';
    }
    return os.str();
  };
  AttentionTsv out;
  out.query_over_context = render(dump.query_over_context, ix.q_word, ix.ctx_word);
  out.query_over_response = render(dump.query_over_response, ix.q_word, ix.r_word);
  out.response_over_context = render(dump.response_over_context, ix.r_word, ix.ctx_word);
  return out;
}

// ---------- ensemble voting ----------

// Per group each model votes for its top-1 candidate; plurality wins,
// ties broken by mean score across models, then by input order.
inline std::vector<size_t> ensemble_vote(const std::vector<std::vector<CandidateGroup>>& runs) {
  check(!runs.empty(), "ensemble", "no score files");
  size_t n_groups = runs[0].size();
  for (auto& r : runs) {
    check(r.size() == n_groups, "ensemble", "group count differs between score files");
    for (size_t g = 0; g < n_groups; ++g) {
      check(r[g].id == runs[0][g].id, "ensemble", "group id mismatch at group " + r[g].id);
      check(r[g].candidates.size() == runs[0][g].candidates.size(), "ensemble",
            "candidate count mismatch in group " + r[g].id);
      for (size_t c = 0; c < r[g].candidates.size(); ++c)
        check(r[g].candidates[c].label == runs[0][g].candidates[c].label, "ensemble",
              "label mismatch in group " + r[g].id);
    }
  }
  std::vector<size_t> winners;
  winners.reserve(n_groups);
  for (size_t g = 0; g < n_groups; ++g) {
    size_t n_c = runs[0][g].candidates.size();
    std::vector<size_t> votes(n_c, 0);
    std::vector<double> mean_score(n_c, 0);
    for (auto& r : runs) {
      ++votes[ranking(r[g])[0]];
      for (size_t c = 0; c < n_c; ++c) mean_score[c] += r[g].candidates[c].score;
    }
    size_t best = 0;
    for (size_t c = 1; c < n_c; ++c) {
      if (votes[c] > votes[best] ||
          (votes[c] == votes[best] && mean_score[c] > mean_score[best]))
        best = c;
    }
    winners.push_back(best);
  }
  return winners;
}

}  // namespace triplenet
