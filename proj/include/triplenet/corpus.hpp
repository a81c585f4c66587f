#pragma once

// Dialogue data model: TSV corpus loading, vocabulary, the word-matching
// (MF) co-occurrence feature, fixed-shape indexing with padding masks,
// pretrained-embedding loading, and a synthetic keyword corpus for
// desk-scale verification.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "triplenet/layers.hpp"
#include "triplenet/tensor.hpp"

namespace triplenet {

constexpr int32_t kPadId = 0;
constexpr int32_t kUnkId = 1;
constexpr size_t kReservedIds = 2;
inline const char* kTurnSeparator = "__eot__";

struct DialogueSample {
  std::vector<std::vector<std::string>> context;  // utterances; last one is the query
  std::vector<std::string> response;
  int label = 0;

  const std::vector<std::string>& query() const { return context.back(); }
};

[[noreturn]] inline void corpus_error(const std::string& what) {
  throw std::runtime_error("corpus: " + what);
}

inline std::string lowercase(std::string s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  return s;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// ---------- TSV corpus ----------
// label<TAB>utt1 __eot__ utt2 __eot__ ... <TAB>response

inline std::vector<DialogueSample> parse_corpus(std::istream& in) {
  std::vector<DialogueSample> samples;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (fields.size() != 3)
      corpus_error("line " + std::to_string(lineno) + ": expected 3 tab-separated fields, got " +
                   std::to_string(fields.size()));
    DialogueSample s;
    if (fields[0] == "0")
      s.label = 0;
    else if (fields[0] == "1")
      s.label = 1;
    else
      corpus_error("line " + std::to_string(lineno) + ": bad label '" + fields[0] + "'");
    std::vector<std::string> ctx_tokens = split_ws(lowercase(fields[1]));
    std::vector<std::string> utt;
    for (auto& tok : ctx_tokens) {
      if (tok == kTurnSeparator) {
        if (utt.empty())
          corpus_error("line " + std::to_string(lineno) + ": empty utterance in context");
        s.context.push_back(std::move(utt));
        utt.clear();
      } else {
        utt.push_back(tok);
      }
    }
    if (!utt.empty()) s.context.push_back(std::move(utt));
    if (s.context.empty())
      corpus_error("line " + std::to_string(lineno) + ": empty context");
    s.response = split_ws(lowercase(fields[2]));
    if (s.response.empty())
      corpus_error("line " + std::to_string(lineno) + ": empty response");
    samples.push_back(std::move(s));
  }
  return samples;
}

inline std::vector<DialogueSample> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) corpus_error("cannot open " + path);
  return parse_corpus(in);
}

inline std::string join(const std::vector<std::string>& toks, const std::string& sep = " ") {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += sep;
    out += toks[i];
  }
  return out;
}

inline std::string serialize_corpus(const std::vector<DialogueSample>& samples) {
  std::string out;
  for (auto& s : samples) {
    out += std::to_string(s.label);
    out += '\t';
    for (size_t u = 0; u < s.context.size(); ++u) {
      if (u) out += std::string(" ") + kTurnSeparator + " ";
      out += join(s.context[u]);
    }
    out += '\t';
    out += join(s.response);
    out += '\n';
  }
  return out;
}

inline void save_corpus(const std::vector<DialogueSample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) corpus_error("cannot write " + path);
  out << serialize_corpus(samples);
}

// ---------- vocabulary ----------

struct Vocab {
  std::unordered_map<std::string, int32_t> word_to_id;
  std::vector<std::string> id_to_word;  // index 0 = PAD, 1 = UNK
  std::unordered_map<char, int32_t> char_to_id;
  std::vector<char> id_to_char;

  size_t word_count() const { return id_to_word.size(); }
  size_t char_count() const { return id_to_char.size() + kReservedIds; }

  int32_t word_id(const std::string& w) const {
    auto it = word_to_id.find(w);
    return it == word_to_id.end() ? kUnkId : it->second;
  }
  int32_t char_id(char c) const {
    auto it = char_to_id.find(c);
    return it == char_to_id.end() ? kUnkId : it->second;
  }
};

// Tokens with frequency >= min_count, ordered by frequency desc then
// lexicographic; chars always included (frequency order as well).
inline Vocab build_vocab(const std::vector<DialogueSample>& samples, size_t min_count = 1) {
  if (samples.empty()) corpus_error("build_vocab: no samples");
  std::map<std::string, size_t> word_freq;
  std::map<char, size_t> char_freq;
  auto count = [&](const std::vector<std::string>& toks) {
    for (auto& t : toks) {
      ++word_freq[t];
      for (char c : t) ++char_freq[c];
    }
  };
  for (auto& s : samples) {
    for (auto& u : s.context) count(u);
    count(s.response);
  }
  Vocab v;
  v.id_to_word = {"<pad>", "<unk>"};
  std::vector<std::pair<std::string, size_t>> words(word_freq.begin(), word_freq.end());
  std::sort(words.begin(), words.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [w, f] : words) {
    if (f < min_count) continue;
    v.word_to_id[w] = int32_t(v.id_to_word.size());
    v.id_to_word.push_back(w);
  }
  std::vector<std::pair<char, size_t>> chars(char_freq.begin(), char_freq.end());
  std::sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [c, f] : chars) {
    v.char_to_id[c] = int32_t(v.id_to_char.size() + kReservedIds);
    v.id_to_char.push_back(c);
  }
  return v;
}

inline void save_vocab(const Vocab& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) corpus_error("cannot write " + path);
  for (size_t i = kReservedIds; i < v.id_to_word.size(); ++i) out << v.id_to_word[i] << '\n';
}

// Full table (words and chars, id order) so a model can be rebuilt
// without the training corpus.
inline void save_vocab_table(const Vocab& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) corpus_error("cannot write " + path);
  out << "words " << v.id_to_word.size() - kReservedIds << '\n';
  for (size_t i = kReservedIds; i < v.id_to_word.size(); ++i) out << v.id_to_word[i] << '\n';
  out << "chars " << v.id_to_char.size() << '\n';
  for (char c : v.id_to_char) out << int(static_cast<unsigned char>(c)) << '\n';
}

inline Vocab load_vocab_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) corpus_error("cannot open " + path);
  Vocab v;
  v.id_to_word = {"<pad>", "<unk>"};
  std::string key;
  size_t n = 0;
  if (!(in >> key >> n) || key != "words") corpus_error("vocab table " + path + ": bad header");
  for (size_t i = 0; i < n; ++i) {
    std::string w;
    if (!(in >> w)) corpus_error("vocab table " + path + ": truncated word list");
    v.word_to_id[w] = int32_t(v.id_to_word.size());
    v.id_to_word.push_back(w);
  }
  if (!(in >> key >> n) || key != "chars")
    corpus_error("vocab table " + path + ": bad char header");
  for (size_t i = 0; i < n; ++i) {
    int code = 0;
    if (!(in >> code)) corpus_error("vocab table " + path + ": truncated char list");
    char c = char(static_cast<unsigned char>(code));
    v.char_to_id[c] = int32_t(v.id_to_char.size() + kReservedIds);
    v.id_to_char.push_back(c);
  }
  return v;
}

// ---------- word-matching (MF) feature ----------

struct MfFlags {
  std::vector<std::vector<uint8_t>> context;  // per utterance, per token
  std::vector<uint8_t> query;
  std::vector<uint8_t> response;
};

// Response token flag = 1 iff the token appears in context or query;
// context/query token flag = 1 iff the token appears in the response.
inline MfFlags compute_mf(const DialogueSample& s) {
  std::unordered_set<std::string> ctx_tokens, resp_tokens;
  for (auto& u : s.context)
    for (auto& t : u) ctx_tokens.insert(t);
  for (auto& t : s.response) resp_tokens.insert(t);
  MfFlags mf;
  for (auto& u : s.context) {
    std::vector<uint8_t> flags;
    for (auto& t : u) flags.push_back(resp_tokens.count(t) ? 1 : 0);
    mf.context.push_back(std::move(flags));
  }
  mf.query = mf.context.back();
  for (auto& t : s.response) mf.response.push_back(ctx_tokens.count(t) ? 1 : 0);
  return mf;
}

// ---------- fixed-shape indexing ----------

struct Limits {
  size_t max_turns = 12;   // n
  size_t max_words = 50;   // m
  size_t max_chars = 16;   // l
};

struct IndexedSample {
  // context: n x m word ids, n x m x l char ids; query/response: m, m x l
  std::vector<int32_t> ctx_word, ctx_char;
  std::vector<int32_t> q_word, q_char;
  std::vector<int32_t> r_word, r_char;
  std::vector<uint8_t> ctx_mf;  // n x m
  std::vector<uint8_t> q_mf, r_mf;
  MaskVec ctx_token_mask;  // n x m
  MaskVec utt_mask;        // n
  MaskVec q_mask, r_mask;  // m
  int label = 0;
  Limits limits;

  size_t n() const { return limits.max_turns; }
  size_t m() const { return limits.max_words; }
  size_t l() const { return limits.max_chars; }
};

namespace detail {
inline void index_tokens(const std::vector<std::string>& toks,
                         const std::vector<uint8_t>& mf_in, const Vocab& vocab,
                         const Limits& lim, int32_t* words, int32_t* chars, uint8_t* mf,
                         uint8_t* mask) {
  size_t m = lim.max_words, l = lim.max_chars;
  for (size_t j = 0; j < m; ++j) {
    if (j < toks.size()) {
      words[j] = vocab.word_id(toks[j]);
      mf[j] = mf_in[j];
      mask[j] = 1;
      const std::string& t = toks[j];
      for (size_t k = 0; k < l; ++k)
        chars[j * l + k] = k < t.size() ? vocab.char_id(t[k]) : kPadId;
    } else {
      words[j] = kPadId;
      mf[j] = 0;
      mask[j] = 0;
      for (size_t k = 0; k < l; ++k) chars[j * l + k] = kPadId;
    }
  }
}
}  // namespace detail

// Keeps the last n utterances (query always survives), the first m tokens
// of each utterance and the first l chars of each token. Short contexts
// are front-padded so the query sits in the last row.
inline IndexedSample index_and_pad(const DialogueSample& s, const Vocab& vocab,
                                   const Limits& lim) {
  check(lim.max_turns > 0 && lim.max_words > 0 && lim.max_chars > 0, "index_and_pad",
        "limits must be positive");
  size_t n = lim.max_turns, m = lim.max_words, l = lim.max_chars;
  IndexedSample out;
  out.limits = lim;
  out.label = s.label;
  out.ctx_word.assign(n * m, kPadId);
  out.ctx_char.assign(n * m * l, kPadId);
  out.ctx_mf.assign(n * m, 0);
  out.ctx_token_mask.assign(n * m, 0);
  out.utt_mask.assign(n, 0);
  out.q_word.assign(m, kPadId);
  out.q_char.assign(m * l, kPadId);
  out.q_mf.assign(m, 0);
  out.q_mask.assign(m, 0);
  out.r_word.assign(m, kPadId);
  out.r_char.assign(m * l, kPadId);
  out.r_mf.assign(m, 0);
  out.r_mask.assign(m, 0);

  MfFlags mf = compute_mf(s);
  size_t total = s.context.size();
  size_t kept = std::min(total, n);
  size_t first = total - kept;      // drop the oldest utterances
  size_t offset = n - kept;         // front padding rows
  for (size_t u = 0; u < kept; ++u) {
    size_t src = first + u, dst = offset + u;
    out.utt_mask[dst] = 1;
    detail::index_tokens(s.context[src], mf.context[src], vocab, lim,
                         &out.ctx_word[dst * m], &out.ctx_char[dst * m * l],
                         &out.ctx_mf[dst * m], &out.ctx_token_mask[dst * m]);
  }
  detail::index_tokens(s.query(), mf.query, vocab, lim, out.q_word.data(), out.q_char.data(),
                       out.q_mf.data(), out.q_mask.data());
  detail::index_tokens(s.response, mf.response, vocab, lim, out.r_word.data(),
                       out.r_char.data(), out.r_mf.data(), out.r_mask.data());
  return out;
}

// ---------- pretrained embeddings ----------

struct EmbeddingTable {
  size_t dim = 0;
  std::vector<float> data;  // vocab-aligned, row-major; PAD row all-zero
  bool trainable = true;
  size_t covered = 0;  // vocab tokens found in the file
  size_t vocab_size = 0;

  double coverage() const {
    return vocab_size <= kReservedIds
               ? 0.0
               : double(covered) / double(vocab_size - kReservedIds);
  }
};

// Text format: one `token v1 v2 ... vd` line per entry. Tokens absent
// from the vocab are skipped; vocab tokens missing from the file are
// initialized uniform in +-0.05. The PAD row stays zero.
inline EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab, Rng& rng,
                                      size_t expected_dim = 0) {
  std::ifstream in(path);
  if (!in) corpus_error("cannot open embeddings file " + path);
  EmbeddingTable table;
  table.vocab_size = vocab.word_count();
  std::string line;
  std::vector<std::pair<int32_t, std::vector<float>>> found;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    is >> tok;
    std::vector<float> vals;
    float x;
    while (is >> x) vals.push_back(x);
    if (table.dim == 0) {
      table.dim = vals.size();
      if (expected_dim && table.dim != expected_dim)
        corpus_error("embedding dim " + std::to_string(table.dim) + " does not match config " +
                     std::to_string(expected_dim));
    } else if (vals.size() != table.dim) {
      corpus_error("embeddings line " + std::to_string(lineno) + ": dimension " +
                   std::to_string(vals.size()) + " differs from " + std::to_string(table.dim));
    }
    auto it = vocab.word_to_id.find(lowercase(tok));
    if (it == vocab.word_to_id.end()) continue;
    found.emplace_back(it->second, std::move(vals));
  }
  if (table.dim == 0) corpus_error("embeddings file " + path + " is empty");
  size_t V = vocab.word_count();
  table.data.assign(V * table.dim, 0.0f);
  std::vector<uint8_t> hit(V, 0);
  for (auto& [id, vals] : found) {
    std::copy(vals.begin(), vals.end(), table.data.begin() + size_t(id) * table.dim);
    hit[size_t(id)] = 1;
  }
  for (size_t i = kReservedIds; i < V; ++i) {
    if (hit[i]) {
      ++table.covered;
      continue;
    }
    for (size_t d = 0; d < table.dim; ++d)
      table.data[i * table.dim + d] = float(rng.uniform(-0.05, 0.05));
  }
  // UNK row gets a random init as well
  for (size_t d = 0; d < table.dim; ++d)
    table.data[size_t(kUnkId) * table.dim + d] = float(rng.uniform(-0.05, 0.05));
  return table;
}

// ---------- synthetic corpus ----------

struct SynthCorpus {
  std::vector<DialogueSample> train, valid, test;
  size_t group_size = 2;
};

namespace detail {

inline std::string random_word(Rng& rng) {
  size_t len = 3 + rng.index(6);
  std::string w;
  for (size_t i = 0; i < len; ++i) w += char('a' + rng.index(26));
  return w;
}

struct SynthVocab {
  std::vector<std::string> keywords, fillers;
};

inline SynthVocab make_synth_vocab(Rng& rng, size_t vocab_size) {
  if (vocab_size < 12)
    corpus_error("synth_corpus: vocab_size " + std::to_string(vocab_size) +
                 " too small to guarantee distinct keywords (need >= 12)");
  std::set<std::string> seen;
  auto fresh = [&]() {
    while (true) {
      std::string w = random_word(rng);
      if (seen.insert(w).second) return w;
    }
  };
  SynthVocab sv;
  size_t keywords = std::max<size_t>(4, vocab_size / 4);
  for (size_t i = 0; i < keywords; ++i) sv.keywords.push_back(fresh());
  for (size_t i = 0; i < vocab_size - keywords; ++i) sv.fillers.push_back(fresh());
  return sv;
}

// One candidate group: the positive response shares a keyword with the
// query while distractor utterances carry a misleading keyword shared
// with the negatives. Keyword occurrence counts over the whole context
// are balanced by construction and the candidates reuse one filler
// multiset, so bag-of-context overlap carries no label signal: only the
// query (the last utterance) disambiguates.
inline void synth_group(Rng& rng, const SynthVocab& sv, size_t k,
                        std::vector<DialogueSample>& out) {
  size_t qi = rng.index(sv.keywords.size());
  size_t di = rng.index(sv.keywords.size() - 1);
  if (di >= qi) ++di;
  const std::string& q_kw = sv.keywords[qi];
  const std::string& d_kw = sv.keywords[di];
  auto make_utt = [&](const std::string& kw) {
    size_t len = 2 + rng.index(3);
    std::vector<std::string> toks;
    for (size_t i = 0; i < len; ++i)
      toks.push_back(sv.fillers[rng.index(sv.fillers.size())]);
    if (!kw.empty()) toks.insert(toks.begin() + rng.index(toks.size() + 1), kw);
    return toks;
  };
  DialogueSample base;
  // echo counts drawn so q_kw (extra echoes + query) and d_kw totals are
  // identically distributed over {1,2,3}
  size_t q_echo = rng.index(3), d_echo = 1 + rng.index(3), plain = rng.index(2);
  std::vector<std::vector<std::string>> turns;
  for (size_t u = 0; u < q_echo; ++u) turns.push_back(make_utt(q_kw));
  for (size_t u = 0; u < d_echo; ++u) turns.push_back(make_utt(d_kw));
  for (size_t u = 0; u < plain; ++u) turns.push_back(make_utt(""));
  std::shuffle(turns.begin(), turns.end(), rng.engine());
  base.context = std::move(turns);
  base.context.push_back(make_utt(q_kw));  // query
  std::vector<std::string> resp_fill = make_utt("");
  auto make_resp = [&](const std::string& kw) {
    std::vector<std::string> toks = resp_fill;
    toks.insert(toks.begin() + rng.index(toks.size() + 1), kw);
    return toks;
  };
  size_t pos_at = rng.index(k);
  for (size_t c = 0; c < k; ++c) {
    DialogueSample s = base;
    if (c == pos_at) {
      s.response = make_resp(q_kw);
      s.label = 1;
    } else {
      s.response = make_resp(d_kw);
      s.label = 0;
    }
    out.push_back(std::move(s));
  }
}

}  // namespace detail

inline std::vector<DialogueSample> synth_groups(Rng& rng, const detail::SynthVocab& sv,
                                                size_t groups, size_t k) {
  std::vector<DialogueSample> out;
  out.reserve(groups * k);
  for (size_t g = 0; g < groups; ++g) detail::synth_group(rng, sv, k, out);
  return out;
}

inline SynthCorpus synth_corpus(uint64_t seed, size_t size, size_t vocab_size,
                                size_t candidates = 2, size_t valid_groups = 0,
                                size_t test_groups = 0) {
  if (size < 10) corpus_error("synth_corpus: size must be >= 10");
  Rng rng(seed);
  auto sv = detail::make_synth_vocab(rng, vocab_size);
  SynthCorpus c;
  c.group_size = candidates;
  c.train = synth_groups(rng, sv, size, candidates);
  c.valid = synth_groups(rng, sv, valid_groups ? valid_groups : std::max<size_t>(10, size / 5),
                         candidates);
  c.test = synth_groups(rng, sv, test_groups ? test_groups : std::max<size_t>(10, size / 5),
                        candidates);
  return c;
}

}  // namespace triplenet
