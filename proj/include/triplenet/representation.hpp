#pragma once

// Hierarchical representations of one indexed dialogue sample:
//   char level      -- per-token char-CNN vectors
//   word level      -- BiLSTM over token embeddings e(x) = [emb; ch(x); mf]
//   utterance level -- self-attention pooling of each utterance's word states
//   context level   -- BiLSTM over the utterance vectors
// Padded tokens are zero rows everywhere and receive no gradient; the
// self-attention weights are kept for visualization.

#include "triplenet/config.hpp"
#include "triplenet/corpus.hpp"
#include "triplenet/layers.hpp"
#include "triplenet/tensor.hpp"

namespace triplenet {

template <class T>
struct RepLayers {
  TensorT<T> embed_word;  // (V_w, emb_dim), PAD row zero
  TensorT<T> embed_char;  // (V_c, char_emb_dim), PAD row zero
  Conv1dLayer<T> char_conv;
  BiLstmLayer<T> word_lstm;
  TensorT<T> attn_w;  // (2*word_hidden, attn_dim)
  TensorT<T> attn_v;  // (attn_dim, 1)
  BiLstmLayer<T> ctx_lstm;

  static RepLayers init(ParamSet<T>& ps, const TrainConfig& cfg, size_t word_vocab,
                        size_t char_vocab, Rng& rng) {
    RepLayers r;
    auto uniform_rows = [&](size_t rows, size_t dim) {
      std::vector<T> v(rows * dim);
      for (size_t i = dim; i < v.size(); ++i)  // row 0 (PAD) stays zero
        v[i] = T(rng.uniform(-0.05, 0.05));
      return v;
    };
    r.embed_word = ps.add("embed.word",
                          TensorT<T>::param({word_vocab, cfg.emb_dim},
                                            uniform_rows(word_vocab, cfg.emb_dim)));
    r.embed_char = ps.add("embed.char",
                          TensorT<T>::param({char_vocab, cfg.char_emb_dim},
                                            uniform_rows(char_vocab, cfg.char_emb_dim)));
    r.char_conv = Conv1dLayer<T>::init(ps, "char_conv", cfg.conv_filters, cfg.conv_window,
                                       cfg.char_emb_dim, rng);
    size_t e_dim = cfg.emb_dim + cfg.conv_filters + 1;
    r.word_lstm = BiLstmLayer<T>::init(ps, "word_lstm", e_dim, cfg.word_hidden, rng);
    size_t d_w = 2 * cfg.word_hidden;
    r.attn_w = ps.add("self_attn.w",
                      TensorT<T>::param({d_w, cfg.attn_dim},
                                        glorot_uniform<T>(d_w * cfg.attn_dim, d_w,
                                                          cfg.attn_dim, rng)));
    r.attn_v = ps.add("self_attn.v",
                      TensorT<T>::param({cfg.attn_dim, 1},
                                        glorot_uniform<T>(cfg.attn_dim, cfg.attn_dim, 1, rng)));
    r.ctx_lstm = BiLstmLayer<T>::init(ps, "ctx_lstm", d_w, cfg.ctx_hidden, rng);
    return r;
  }
};

template <class T>
struct SampleReps {
  // char level: per-token CNN vectors
  TensorT<T> ctx_char;           // (n*m, filters)
  TensorT<T> q_char, r_char;     // (m, filters)
  // word level: BiLSTM states
  TensorT<T> ctx_word;           // (n*m, 2H)
  TensorT<T> q_word, r_word;     // (m, 2H)
  // utterance / context level
  TensorT<T> utt;                // (n, 2H)
  TensorT<T> ctx_level;          // (n, 2H)
  std::vector<TensorT<T>> attn;  // per utterance: (m) self-attention weights; empty if padded
};

namespace detail {

// (1, filters) char-CNN vector for one token; zero for padded tokens.
template <class T>
TensorT<T> token_char_vec(const RepLayers<T>& layers, const int32_t* chars, size_t l,
                          bool valid) {
  size_t filters = layers.char_conv.b.dim(0);
  if (!valid) return TensorT<T>::zeros({1, filters});
  size_t ce = layers.embed_char.dim(1);
  size_t valid_len = 0;
  while (valid_len < l && chars[valid_len] != kPadId) ++valid_len;
  std::vector<TensorT<T>> rows;
  rows.reserve(valid_len);
  for (size_t k = 0; k < valid_len; ++k)
    rows.push_back(slice(layers.embed_char, 0, size_t(chars[k]), 1));
  TensorT<T> mat = valid_len == 1 ? rows[0] : concat(0, rows);
  if (valid_len < l)  // conv pads implicitly; shape only needs the valid prefix
    mat = concat(0, {mat, TensorT<T>::zeros({l - valid_len, ce})});
  return reshape(layers.char_conv.apply(mat, valid_len), {1, filters});
}

// (m, emb + filters + 1) token embeddings for one sequence, plus the
// char vectors reused as the char-level channel.
template <class T>
void sequence_embed(const RepLayers<T>& layers, const int32_t* words, const int32_t* chars,
                    const uint8_t* mf, const uint8_t* mask, size_t m, size_t l,
                    TensorT<T>* char_out, TensorT<T>* embed_out) {
  size_t emb = layers.embed_word.dim(1);
  size_t filters = layers.char_conv.b.dim(0);
  std::vector<TensorT<T>> char_rows, embed_rows;
  char_rows.reserve(m);
  embed_rows.reserve(m);
  for (size_t j = 0; j < m; ++j) {
    bool valid = mask[j] != 0;
    TensorT<T> cv = token_char_vec(layers, chars + j * l, l, valid);
    char_rows.push_back(cv);
    if (!valid) {
      embed_rows.push_back(TensorT<T>::zeros({1, emb + filters + 1}));
      continue;
    }
    TensorT<T> wr = slice(layers.embed_word, 0, size_t(words[j]), 1);
    TensorT<T> flag = TensorT<T>({1, 1}, {T(mf[j])});
    embed_rows.push_back(concat(1, {wr, cv, flag}));
  }
  *char_out = concat(0, char_rows);
  *embed_out = concat(0, embed_rows);
}

// Self-attention pooling: u = alpha^T H with alpha = softmax over valid
// tokens of v^T tanh(H W).
template <class T>
TensorT<T> attend_pool(const RepLayers<T>& layers, const TensorT<T>& h, const MaskVec& mask,
                       TensorT<T>* alpha_out) {
  size_t m = h.dim(0);
  TensorT<T> scores = reshape(matmul(tanh_t(matmul(h, layers.attn_w)), layers.attn_v), {m});
  TensorT<T> alpha = masked_softmax(scores, 0, mask);
  if (alpha_out) *alpha_out = alpha;
  return matmul(reshape(alpha, {1, m}), h);  // (1, 2H)
}

}  // namespace detail

template <class T>
SampleReps<T> build_reps(const RepLayers<T>& layers, const IndexedSample& ix) {
  size_t n = ix.n(), m = ix.m(), l = ix.l();
  SampleReps<T> reps;
  reps.attn.resize(n);
  size_t d_w = layers.word_lstm.out_dim();
  size_t filters = layers.char_conv.b.dim(0);

  std::vector<TensorT<T>> ctx_char_parts, ctx_word_parts, utt_rows;
  for (size_t u = 0; u < n; ++u) {
    if (!ix.utt_mask[u]) {
      ctx_char_parts.push_back(TensorT<T>::zeros({m, filters}));
      ctx_word_parts.push_back(TensorT<T>::zeros({m, d_w}));
      utt_rows.push_back(TensorT<T>::zeros({1, d_w}));
      continue;
    }
    MaskVec tok_mask(ix.ctx_token_mask.begin() + u * m, ix.ctx_token_mask.begin() + (u + 1) * m);
    TensorT<T> chars, embeds;
    detail::sequence_embed(layers, ix.ctx_word.data() + u * m, ix.ctx_char.data() + u * m * l,
                           ix.ctx_mf.data() + u * m, tok_mask.data(), m, l, &chars, &embeds);
    TensorT<T> h = layers.word_lstm.run(embeds, tok_mask);
    ctx_char_parts.push_back(chars);
    ctx_word_parts.push_back(h);
    utt_rows.push_back(detail::attend_pool(layers, h, tok_mask, &reps.attn[u]));
  }
  reps.ctx_char = concat(0, ctx_char_parts);
  reps.ctx_word = concat(0, ctx_word_parts);
  reps.utt = concat(0, utt_rows);
  reps.ctx_level = layers.ctx_lstm.run(reps.utt, ix.utt_mask);

  TensorT<T> q_embed, r_embed;
  detail::sequence_embed(layers, ix.q_word.data(), ix.q_char.data(), ix.q_mf.data(),
                         ix.q_mask.data(), m, l, &reps.q_char, &q_embed);
  detail::sequence_embed(layers, ix.r_word.data(), ix.r_char.data(), ix.r_mf.data(),
                         ix.r_mask.data(), m, l, &reps.r_char, &r_embed);
  reps.q_word = layers.word_lstm.run(q_embed, ix.q_mask);
  reps.r_word = layers.word_lstm.run(r_embed, ix.r_mask);
  return reps;
}

}  // namespace triplenet
