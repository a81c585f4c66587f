#pragma once

// Full response-selection model: hierarchical representations, triple
// attention over (context, query, response) at every level, response-
// centered matching and fused scoring.
//
// Triple attention at one level runs the pairwise bilinear attention flow
// over (C,Q), (C,R) and (Q,R); each element's updates are summed and
// batch-normalized (statistics pooled over all valid positions of the
// batch, one normalizer per element per level). Elements untouched by any
// active pair keep their raw representation.
//
// Ablations come in two forms: structural flags in TrainConfig (parameters
// for the removed part are never created; retraining semantics) and an
// eval-time suppression mask passed to forward() (attention pairs are
// skipped, matching channels zeroed, query columns dropped; the trained
// parameters are untouched).

#include <array>
#include <optional>

#include "triplenet/attention.hpp"
#include "triplenet/config.hpp"
#include "triplenet/matching.hpp"
#include "triplenet/representation.hpp"

namespace triplenet {

enum class Level { Char = 0, Word = 1, Utterance = 2, Context = 3 };
inline constexpr std::array<Level, 4> kLevels = {Level::Char, Level::Word, Level::Utterance,
                                                 Level::Context};
inline const char* level_name(Level l) {
  switch (l) {
    case Level::Char: return "char";
    case Level::Word: return "word";
    case Level::Utterance: return "utterance";
    case Level::Context: return "context";
  }
  return "?";
}

// Word-level attention matrices (values only) captured for one sample.
template <class T>
struct AttentionDump {
  TensorT<T> query_over_context;   // (m, n*m)
  TensorT<T> query_over_response;  // (m, m)
  TensorT<T> response_over_context;  // (m, n*m)
};

template <class T>
class TripleNetModel {
 public:
  TripleNetModel(const TrainConfig& cfg, size_t word_vocab, size_t char_vocab)
      : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    reps_ = RepLayers<T>::init(params_, cfg_, word_vocab, char_vocab, rng_);
    bool attn_on = attention_enabled(cfg_.flags);
    for (Level lv : kLevels) {
      LevelBlock& b = block(lv);
      b.active = level_active(cfg_.flags, lv);
      if (!b.active) continue;
      b.dim = level_dim(lv);
      if (!attn_on) continue;
      std::string base = std::string("baf.") + level_name(lv) + ".";
      auto make_w = [&](const std::string& pair) {
        return params_.add(base + pair + ".w",
                           TensorT<T>::param({b.dim, b.dim},
                                             glorot_uniform<T>(b.dim * b.dim, b.dim, b.dim,
                                                               rng_)));
      };
      if (pair_enabled(cfg_.flags, Pair::CQ)) b.w_cq = make_w("cq");
      if (pair_enabled(cfg_.flags, Pair::CR)) b.w_cr = make_w("cr");
      if (pair_enabled(cfg_.flags, Pair::QR)) b.w_qr = make_w("qr");
      std::string bn_base = std::string("bn.") + level_name(lv) + ".";
      if (b.w_cq || b.w_cr)
        b.bn_c = BatchNormLayer<T>::init(params_, bn_base + "c", b.dim);
      if (b.w_cq || b.w_qr)
        b.bn_q = BatchNormLayer<T>::init(params_, bn_base + "q", b.dim);
      if (b.w_cr || b.w_qr)
        b.bn_r = BatchNormLayer<T>::init(params_, bn_base + "r", b.dim);
    }
    size_t depth = 0;
    for (Level lv : kLevels) depth += block(lv).active;
    fusion_ = FusionLayers<T>::init(params_, depth, cfg_.fusion_hidden, rng_);
    head_ = DenseSigmoidHead<T>::init(params_, "head", 2 * cfg_.fusion_hidden, rng_);
  }

  TripleNetModel(const TripleNetModel&) = delete;
  TripleNetModel& operator=(const TripleNetModel&) = delete;

  const TrainConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  // persistent non-parameter state (batch-norm running statistics)
  std::vector<std::pair<std::string, std::vector<T>*>> buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    for (Level lv : kLevels) {
      LevelBlock& b = block(lv);
      auto reg = [&](std::optional<BatchNormLayer<T>>& bn, const char* elem) {
        if (!bn) return;
        std::string base = std::string("bn.") + level_name(lv) + "." + elem;
        out.push_back({base + ".running_mean", &bn->running_mean});
        out.push_back({base + ".running_var", &bn->running_var});
      };
      reg(b.bn_c, "c");
      reg(b.bn_q, "q");
      reg(b.bn_r, "r");
    }
    return out;
  }

  // Scores in (0,1), one per sample. `suppress` applies eval-time ablation;
  // `dump` captures the word-level attention of batch[0]; `cube_out`
  // captures batch[0]'s matching channels (one (m, cols) matrix per level).
  std::vector<TensorT<T>> forward(const std::vector<IndexedSample>& batch, bool training,
                                  const AblationFlags* suppress = nullptr,
                                  AttentionDump<T>* dump = nullptr,
                                  std::vector<TensorT<T>>* cube_out = nullptr) {
    check(!batch.empty(), "model", "empty batch");
    size_t n = batch[0].n(), m = batch[0].m();
    for (auto& ix : batch)
      check(ix.n() == n && ix.m() == m, "model", "mixed padding limits in batch");

    std::vector<SampleReps<T>> reps;
    reps.reserve(batch.size());
    for (auto& ix : batch) reps.push_back(build_reps(reps_, ix));

    // per level, per sample: attended (or raw) triples
    std::array<std::vector<Triple>, 4> level_out;
    for (Level lv : kLevels) {
      if (!block(lv).active) continue;
      level_out[size_t(lv)] = attend_level(lv, batch, reps, training, suppress, dump);
    }

    bool ctx_cols = !cfg_.flags.no_M_CR;
    bool q_cols = query_columns(cfg_.flags);
    if (suppress) {
      ctx_cols = ctx_cols && !suppress->no_M_CR;
      q_cols = q_cols && query_columns(*suppress);
    }
    check(ctx_cols || q_cols, "model", "all matching columns suppressed");

    std::vector<TensorT<T>> scores;
    scores.reserve(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
      const IndexedSample& ix = batch[s];
      size_t cols = (ctx_cols ? n : 0) + (q_cols ? m : 0);
      MaskVec col_mask;
      if (ctx_cols) col_mask.insert(col_mask.end(), ix.utt_mask.begin(), ix.utt_mask.end());
      if (q_cols) col_mask.insert(col_mask.end(), ix.q_mask.begin(), ix.q_mask.end());

      std::vector<TensorT<T>> channels;
      for (Level lv : kLevels) {
        if (!block(lv).active) continue;
        if (suppress && level_suppressed(*suppress, lv)) {
          channels.push_back(TensorT<T>::zeros({m, cols}));
          continue;
        }
        const Triple& t = level_out[size_t(lv)][s];
        std::vector<TensorT<T>> parts;
        if (ctx_cols) {
          if (lv == Level::Char || lv == Level::Word)
            parts.push_back(match_pooled(t.r, t.c, ix.ctx_token_mask, n, m));
          else
            parts.push_back(match_flat(t.r, t.c));
        }
        if (q_cols) parts.push_back(match_flat(t.r, t.q));
        channels.push_back(parts.size() == 1 ? parts[0] : concat(1, parts));
      }
      if (cube_out && s == 0) *cube_out = channels;
      TensorT<T> v = fuse(fusion_, channels, col_mask, ix.r_mask);
      scores.push_back(head_.apply(v));
    }
    return scores;
  }

  // Mean binary cross entropy over the batch.
  TensorT<T> batch_loss(const std::vector<IndexedSample>& batch, bool training) {
    auto scores = forward(batch, training);
    std::vector<TensorT<T>> losses;
    losses.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i)
      losses.push_back(reshape(bce(scores[i], T(batch[i].label)), {1}));
    return scale(sum(concat(0, losses)), T(1) / T(scores.size()));
  }

  static bool attention_enabled(const AblationFlags& f) {
    return !(f.no_tam || f.no_triple_attention);
  }
  static bool query_columns(const AblationFlags& f) {
    return !(f.no_M_QR || f.no_query || f.no_tam);
  }
  static bool level_active(const AblationFlags& f, Level lv) {
    switch (lv) {
      case Level::Char: return !f.no_char;
      case Level::Word: return !f.no_word;
      case Level::Utterance: return !f.no_utterance;
      case Level::Context: return !f.no_context;
    }
    return true;
  }

 private:
  enum class Pair { CQ, CR, QR };

  static bool pair_enabled(const AblationFlags& f, Pair p) {
    if (!attention_enabled(f)) return false;
    switch (p) {
      case Pair::CQ: return !(f.no_A_CQ || f.no_query);
      case Pair::CR: return !f.no_A_CR;
      case Pair::QR: return !(f.no_A_QR || f.no_query);
    }
    return false;
  }

  static bool level_suppressed(const AblationFlags& f, Level lv) {
    return !level_active(f, lv);
  }

  struct LevelBlock {
    bool active = false;
    size_t dim = 0;
    std::optional<TensorT<T>> w_cq, w_cr, w_qr;
    std::optional<BatchNormLayer<T>> bn_c, bn_q, bn_r;
  };

  struct Triple {
    TensorT<T> c, q, r;
  };

  LevelBlock& block(Level lv) { return blocks_[size_t(lv)]; }

  size_t level_dim(Level lv) const {
    return lv == Level::Char ? cfg_.conv_filters : 2 * cfg_.word_hidden;
  }

  // raw (C, Q, R) carriers and masks for one sample at one level
  struct Carrier {
    TensorT<T> c, q, r;
    MaskVec c_mask, q_mask, r_mask;
  };

  Carrier carrier(Level lv, const IndexedSample& ix, const SampleReps<T>& r) const {
    switch (lv) {
      case Level::Char:
        return {r.ctx_char, r.q_char, r.r_char, ix.ctx_token_mask, ix.q_mask, ix.r_mask};
      case Level::Word:
        return {r.ctx_word, r.q_word, r.r_word, ix.ctx_token_mask, ix.q_mask, ix.r_mask};
      case Level::Utterance:
        return {r.utt, r.q_word, r.r_word, ix.utt_mask, ix.q_mask, ix.r_mask};
      case Level::Context:
        return {r.ctx_level, r.q_word, r.r_word, ix.utt_mask, ix.q_mask, ix.r_mask};
    }
    tensor_error("model", "bad level");
  }

  std::vector<Triple> attend_level(Level lv, const std::vector<IndexedSample>& batch,
                                   const std::vector<SampleReps<T>>& reps, bool training,
                                   const AblationFlags* suppress, AttentionDump<T>* dump) {
    LevelBlock& b = block(lv);
    size_t bs = batch.size();
    std::vector<Carrier> raw;
    raw.reserve(bs);
    for (size_t s = 0; s < bs; ++s) raw.push_back(carrier(lv, batch[s], reps[s]));

    auto pair_on = [&](Pair p, const std::optional<TensorT<T>>& w) {
      if (!w) return false;
      if (suppress && !pair_enabled(*suppress, p)) return false;
      return true;
    };
    bool cq = pair_on(Pair::CQ, b.w_cq);
    bool cr = pair_on(Pair::CR, b.w_cr);
    bool qr = pair_on(Pair::QR, b.w_qr);

    std::vector<Triple> out(bs);
    if (!cq && !cr && !qr) {
      for (size_t s = 0; s < bs; ++s) out[s] = {raw[s].c, raw[s].q, raw[s].r};
      return out;
    }

    // per-sample pre-normalization sums per element
    std::vector<TensorT<T>> pre_c(bs), pre_q(bs), pre_r(bs);
    for (size_t s = 0; s < bs; ++s) {
      const Carrier& x = raw[s];
      std::optional<BafOutput<T>> o_cq, o_cr, o_qr;
      if (cq) o_cq = baf(x.c, x.q, *b.w_cq, x.c_mask, x.q_mask);
      if (cr) o_cr = baf(x.c, x.r, *b.w_cr, x.c_mask, x.r_mask);
      if (qr) o_qr = baf(x.q, x.r, *b.w_qr, x.q_mask, x.r_mask);
      auto combine = [](const std::optional<TensorT<T>>& a,
                        const std::optional<TensorT<T>>& b2) -> TensorT<T> {
        if (a && b2) return add(*a, *b2);
        return a ? *a : *b2;
      };
      if (cq || cr)
        pre_c[s] = combine(o_cq ? std::optional(o_cq->p_new) : std::nullopt,
                           o_cr ? std::optional(o_cr->p_new) : std::nullopt);
      if (cq || qr)
        pre_q[s] = combine(o_cq ? std::optional(o_cq->q_new) : std::nullopt,
                           o_qr ? std::optional(o_qr->p_new) : std::nullopt);
      if (cr || qr)
        pre_r[s] = combine(o_cr ? std::optional(o_cr->q_new) : std::nullopt,
                           o_qr ? std::optional(o_qr->q_new) : std::nullopt);
      if (dump && lv == Level::Word && s == 0) {
        if (o_cq) dump->query_over_context = TensorT<T>(o_cq->att_qp.shape(),
                                                        o_cq->att_qp.values());
        if (o_qr) dump->query_over_response = TensorT<T>(o_qr->att_pq.shape(),
                                                         o_qr->att_pq.values());
        if (o_cr) dump->response_over_context = TensorT<T>(o_cr->att_qp.shape(),
                                                           o_cr->att_qp.values());
      }
    }

    // batch-pooled normalization per element; untouched elements stay raw
    auto normalize = [&](std::vector<TensorT<T>>& pre, BatchNormLayer<T>& bn,
                         auto mask_of) -> std::vector<TensorT<T>> {
      size_t rows = pre[0].dim(0);
      MaskVec all_mask;
      for (size_t s = 0; s < bs; ++s) {
        const MaskVec& mk = mask_of(s);
        all_mask.insert(all_mask.end(), mk.begin(), mk.end());
      }
      TensorT<T> stacked = bs == 1 ? pre[0] : concat(0, pre);
      TensorT<T> normed = bn.apply(stacked, all_mask, training);
      std::vector<TensorT<T>> parts(bs);
      for (size_t s = 0; s < bs; ++s) parts[s] = slice(normed, 0, s * rows, rows);
      return parts;
    };
    std::vector<TensorT<T>> c_out, q_out, r_out;
    if (cq || cr)
      c_out = normalize(pre_c, *b.bn_c, [&](size_t s) -> const MaskVec& { return raw[s].c_mask; });
    if (cq || qr)
      q_out = normalize(pre_q, *b.bn_q, [&](size_t s) -> const MaskVec& { return raw[s].q_mask; });
    if (cr || qr)
      r_out = normalize(pre_r, *b.bn_r, [&](size_t s) -> const MaskVec& { return raw[s].r_mask; });

    for (size_t s = 0; s < bs; ++s) {
      out[s].c = (cq || cr) ? c_out[s] : raw[s].c;
      out[s].q = (cq || qr) ? q_out[s] : raw[s].q;
      out[s].r = (cr || qr) ? r_out[s] : raw[s].r;
    }
    return out;
  }

  TrainConfig cfg_;
  Rng rng_;
  ParamSet<T> params_;
  RepLayers<T> reps_;
  std::array<LevelBlock, 4> blocks_;
  FusionLayers<T> fusion_;
  DenseSigmoidHead<T> head_;
};

}  // namespace triplenet
