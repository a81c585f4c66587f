// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Each criterion is self-contained and timed; thresholds
// are fixed, not tuned per run.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

#include "triplenet/gradcheck.hpp"
#include "triplenet/trainer.hpp"

using namespace triplenet;
using D = TensorT<double>;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::vector<double> rand_vec(std::mt19937_64& eng, size_t n) {
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(eng);
  return v;
}

TrainConfig micro_config() {
  TrainConfig c = TrainConfig::tiny();
  c.emb_dim = 4;
  c.char_emb_dim = 3;
  c.conv_filters = 4;
  c.conv_window = 2;
  c.word_hidden = 3;
  c.ctx_hidden = 3;
  c.attn_dim = 4;
  c.fusion_hidden = 3;
  c.max_turns = 2;
  c.max_words = 3;
  c.max_chars = 3;
  c.batch_size = 4;
  return c;
}

struct IndexedData {
  Vocab vocab;
  std::vector<IndexedSample> samples;
};

IndexedData make_data(const TrainConfig& cfg, uint64_t seed, size_t groups) {
  SynthCorpus corpus = synth_corpus(seed, std::max<size_t>(groups, 10), 24);
  corpus.train.resize(2 * groups);
  IndexedData d;
  d.vocab = build_vocab(corpus.train, cfg.min_count);
  for (auto& s : corpus.train) d.samples.push_back(index_and_pad(s, d.vocab, limits_of(cfg)));
  return d;
}

double naive_cos(const std::vector<double>& a, const std::vector<double>& b) {
  double aa = 0, bb = 0, ab = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    aa += a[k] * a[k];
    bb += b[k] * b[k];
    ab += a[k] * b[k];
  }
  double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return 0;
  return ab / (na * nb);
}

// ---------- criterion 1: gradient correctness ----------

std::string criterion_gradients() {
  double start = now_seconds();
  double worst = 0;
  std::string where;
  auto track = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      where = name;
    }
  };
  {
    std::mt19937_64 eng(5);
    D x = D::param({5, 3}, rand_vec(eng, 15));
    D w = D::param({4, 9}, rand_vec(eng, 36));
    D b = D::param({4}, rand_vec(eng, 4));
    auto f = [&]() { return sum(mul(conv_tanh_maxpool(x, w, b, 3, 4),
                                    conv_tanh_maxpool(x, w, b, 3, 4))); };
    track("conv", grad_check<double>(f, {x, w, b}).max_rel_err);
  }
  {
    ParamSet<double> ps;
    Rng rng(7);
    auto layer = BiLstmLayer<double>::init(ps, "lstm", 3, 2, rng);
    D seq = D::param({3, 3}, rand_vec(rng.engine(), 9));
    std::vector<D> params{seq};
    for (auto& [name, t] : ps.items()) params.push_back(t);
    auto f = [&]() {
      D out = layer.run(seq, MaskVec{1, 1, 0});
      return sum(mul(out, out));
    };
    track("bilstm", grad_check<double>(f, params).max_rel_err);
  }
  {
    ParamSet<double> ps;
    auto bn = BatchNormLayer<double>::init(ps, "bn", 2);
    std::mt19937_64 eng(11);
    D x = D::param({6, 2}, rand_vec(eng, 12));
    // linear readout: a squared loss on normalized output has exactly-zero
    // shift gradients, where finite differences see only rounding noise
    D c({6, 2}, rand_vec(eng, 12));
    auto f = [&]() {
      D y = batchnorm_train<double>(x, bn.gamma, bn.beta, MaskVec{1, 1, 1, 1, 1, 0}, 1e-3);
      return sum(mul(y, c));
    };
    track("batchnorm", grad_check<double>(f, {x, bn.gamma, bn.beta}).max_rel_err);
  }
  {
    ParamSet<double> ps;
    Rng rng(13);
    auto head = DenseSigmoidHead<double>::init(ps, "head", 3, rng);
    D v = D::param({3}, rand_vec(rng.engine(), 3));
    auto f = [&]() { return bce(head.apply(v), 1.0); };
    track("head", grad_check<double>(f, {v, head.w, head.b}).max_rel_err);
  }
  {
    std::mt19937_64 eng(17);
    D p = D::param({3, 4}, rand_vec(eng, 12));
    D q = D::param({2, 4}, rand_vec(eng, 8));
    D w = D::param({4, 4}, rand_vec(eng, 16));
    MaskVec pm{1, 0, 1}, qm{1, 1};
    auto f = [&]() {
      auto out = baf(p, q, w, pm, qm);
      return add(sum(mul(out.p_new, out.p_new)), sum(mul(out.att_qp, out.att_qp)));
    };
    track("baf", grad_check<double>(f, {p, q, w}).max_rel_err);
  }
  {
    TrainConfig cfg = micro_config();
    IndexedData data = make_data(cfg, 12, 2);
    TripleNetModel<double> model(cfg, data.vocab.word_count(), data.vocab.char_count());
    std::vector<IndexedSample> batch(data.samples.begin(), data.samples.begin() + 4);
    auto f = [&]() { return model.batch_loss(batch, true); };
    std::vector<D> params;
    for (auto& [name, t] : model.params().items()) params.push_back(t);
    track("full-graph", grad_check<double>(f, params, 1e-4).max_rel_err);
  }
  double elapsed = now_seconds() - start;
  std::ostringstream os;
  os << "max rel err " << worst << " (" << where << "), " << elapsed << " s";
  check(worst <= 1e-4, "criterion-1", os.str());
  check(elapsed < 60, "criterion-1", "too slow: " + os.str());
  return os.str();
}

// ---------- criterion 2: shape/contract sweep ----------

std::string criterion_shapes() {
  std::mt19937_64 eng(23);
  // triple attention on raw random shape tuples
  for (int inst = 0; inst < 100; ++inst) {
    size_t a = 1 + eng() % 6, b = 1 + eng() % 6, d = 1 + eng() % 6;
    D p = D::param({a, d}, rand_vec(eng, a * d));
    D q = D::param({b, d}, rand_vec(eng, b * d));
    D w = D::param({d, d}, rand_vec(eng, d * d));
    MaskVec pm(a), qm(b);
    for (auto& x : pm) x = 1;
    for (auto& x : qm) x = 1;
    if (a > 1) pm[eng() % a] = 0;
    if (b > 1) qm[eng() % b] = 0;
    auto out = baf(p, q, w, pm, qm);
    check(out.p_new.shape() == p.shape() && out.q_new.shape() == q.shape(), "criterion-2",
          "attention output shape differs from input");
    for (size_t i = 0; i < a; ++i) {
      double row = 0;
      for (size_t j = 0; j < b; ++j) {
        row += out.att_pq(i, j);
        if (!qm[j])
          check(out.att_pq(i, j) == 0.0, "criterion-2", "masked attention position not 0");
      }
      check(std::abs(row - 1.0) <= 1e-6, "criterion-2", "attention row sum off");
    }
  }
  // full model: cube shape and value range over random configurations
  for (int inst = 0; inst < 100; ++inst) {
    TrainConfig cfg = micro_config();
    cfg.emb_dim = 1 + eng() % 5;
    cfg.char_emb_dim = 1 + eng() % 4;
    cfg.conv_filters = 1 + eng() % 5;
    cfg.conv_window = 1 + eng() % 3;
    cfg.word_hidden = cfg.ctx_hidden = 1 + eng() % 4;
    cfg.attn_dim = 1 + eng() % 5;
    cfg.fusion_hidden = 1 + eng() % 4;
    cfg.max_turns = 1 + eng() % 4;
    cfg.max_words = 2 + eng() % 5;
    cfg.max_chars = 1 + eng() % 4;
    cfg.seed = uint64_t(inst);
    size_t n = cfg.max_turns, m = cfg.max_words;
    IndexedData data = make_data(cfg, 100 + uint64_t(inst), 2);
    TripleNetModel<float> model(cfg, data.vocab.word_count(), data.vocab.char_count());
    AttentionDump<float> dump;
    std::vector<TensorT<float>> cube;
    auto scores =
        model.forward({data.samples[size_t(inst) % data.samples.size()]}, false, nullptr,
                      &dump, &cube);
    check(scores.size() == 1 && scores[0].item() > 0.0f && scores[0].item() < 1.0f,
          "criterion-2", "score outside (0,1)");
    check(cube.size() == 4, "criterion-2", "cube depth != 4");
    for (auto& ch : cube) {
      check(ch.shape() == Shape{m, n + m}, "criterion-2", "cube channel shape off");
      for (float v : ch.values())
        check(std::abs(v) <= 1.0f + 1e-6f, "criterion-2", "cube entry outside [-1,1]");
    }
    for (size_t i = 0; i < m; ++i) {
      float row = 0;
      for (size_t j = 0; j < m; ++j) row += dump.query_over_response(i, j);
      check(std::abs(row - 1.0f) <= 1e-5f, "criterion-2", "dump row sum off");
    }
  }
  return "100 attention tuples + 100 model configurations";
}

// ---------- criterion 3: matching oracle ----------

std::string criterion_matching() {
  std::mt19937_64 eng(19);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (int inst = 0; inst < 100; ++inst) {
    size_t n = 1 + eng() % 4, m = 1 + eng() % 5, d = 1 + eng() % 6;
    std::vector<double> rv(m * d), cv(n * m * d);
    for (auto& x : rv) x = dist(eng);
    for (auto& x : cv) x = dist(eng);
    MaskVec mask(n * m);
    for (auto& b : mask) b = eng() % 3 > 0;
    for (size_t k = 0; k < n; ++k) mask[k * m] |= 1;
    if (inst % 7 == 0)
      for (size_t j = 0; j < m; ++j) mask[(eng() % n) * m + j] = 0;
    D r({m, d}, rv), c({n * m, d}, cv);
    D out = match_pooled(r, c, mask, n, m);
    check(out.shape() == Shape{m, n}, "criterion-3", "pooled match shape off");
    for (size_t i = 0; i < m; ++i)
      for (size_t k = 0; k < n; ++k) {
        double best = 0;
        bool any = false;
        for (size_t j = 0; j < m; ++j) {
          if (!mask[k * m + j]) continue;
          std::vector<double> a(rv.begin() + long(i * d), rv.begin() + long((i + 1) * d));
          std::vector<double> b(cv.begin() + long((k * m + j) * d),
                                cv.begin() + long((k * m + j + 1) * d));
          double cs = naive_cos(a, b);
          if (!any || cs > best) best = cs;
          any = true;
        }
        check(std::abs(out(i, k) - best) < 1e-6, "criterion-3", "pooled match value off");
      }
  }
  return "100 random instances vs brute-force loop";
}

// ---------- criterion 4: metric oracles ----------

struct NaiveMetrics {
  double r_at_k = 0, map = 0, mrr = 0, p1 = 0;
};

NaiveMetrics naive_metrics(const std::vector<CandidateGroup>& groups, size_t k) {
  NaiveMetrics m;
  size_t scored = 0;
  for (auto& g : groups) {
    std::vector<std::pair<double, int>> order;
    for (auto& c : g.candidates) order.emplace_back(c.score, c.label);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    bool any_pos = false;
    for (auto& [s, l] : order) any_pos |= (l == 1);
    if (!any_pos) continue;
    ++scored;
    size_t pos_seen = 0, total_pos = 0;
    double ap = 0;
    for (auto& [s, l] : order) total_pos += (l == 1);
    bool hit_k = false, first_found = false;
    for (size_t r = 0; r < order.size(); ++r) {
      if (order[r].second == 1) {
        ++pos_seen;
        ap += double(pos_seen) / double(r + 1);
        if (!first_found) {
          m.mrr += 1.0 / double(r + 1);
          first_found = true;
        }
        if (r < k) hit_k = true;
      }
    }
    m.map += ap / double(total_pos);
    m.p1 += (order[0].second == 1) ? 1 : 0;
    m.r_at_k += hit_k ? 1 : 0;
  }
  m.map /= double(scored);
  m.mrr /= double(scored);
  m.p1 /= double(scored);
  m.r_at_k /= double(groups.size());
  return m;
}

std::string criterion_metrics() {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> dist(0, 1);
  std::vector<CandidateGroup> groups;
  for (int gi = 0; gi < 1000; ++gi) {
    CandidateGroup g{std::to_string(gi), {}};
    size_t pos = eng() % 10;
    for (size_t c = 0; c < 10; ++c) g.candidates.push_back({dist(eng), c == pos ? 1 : 0});
    groups.push_back(g);
  }
  NaiveMetrics ref = naive_metrics(groups, 2);
  RankReport rep = map_mrr_p1(groups);
  check(std::abs(recall_at_k(groups, 10, 2) - ref.r_at_k) < 1e-12, "criterion-4", "R_10@2 off");
  check(std::abs(rep.map - ref.map) < 1e-12, "criterion-4", "MAP off");
  check(std::abs(rep.mrr - ref.mrr) < 1e-12, "criterion-4", "MRR off");
  check(std::abs(rep.p1 - ref.p1) < 1e-12, "criterion-4", "P@1 off");

  // hand examples: positives at 1-based ranks {1,3,2,6} among 10
  auto group_with_rank = [](size_t rank, size_t n, const std::string& id) {
    CandidateGroup g{id, {}};
    for (size_t i = 1; i <= n; ++i) g.candidates.push_back({double(n - i), i == rank ? 1 : 0});
    return g;
  };
  std::vector<CandidateGroup> hand{group_with_rank(1, 10, "a"), group_with_rank(3, 10, "b"),
                                   group_with_rank(2, 10, "c"), group_with_rank(6, 10, "d")};
  check(recall_at_k(hand, 10, 1) == 0.25, "criterion-4", "hand R_10@1 != 0.25");
  RankReport hr = map_mrr_p1(hand);
  check(hr.mrr == (1.0 + 1.0 / 3 + 0.5 + 1.0 / 6) / 4, "criterion-4", "hand MRR != 0.5");
  CandidateGroup ap_case{"ap", {{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.6, 0}}};
  double ap = map_mrr_p1({ap_case}).map;
  check(std::abs(ap - (1.0 + 2.0 / 3) / 2) < 1e-12, "criterion-4", "hand AP != 0.8333");
  return "1000 random groups to 1e-12 + exact hand examples";
}

// ---------- criteria 5, 6, 8 share one synthetic corpus ----------

struct SynthSplits {
  Vocab vocab;
  std::vector<IndexedSample> train, test;
};

SynthSplits synth_splits(const TrainConfig& cfg, size_t test_groups) {
  SynthCorpus corpus = synth_corpus(1, 200, 40, 2, 0, test_groups);
  SynthSplits s;
  s.vocab = build_vocab(corpus.train);
  s.train = index_samples(corpus.train, s.vocab, limits_of(cfg));
  s.test = index_samples(corpus.test, s.vocab, limits_of(cfg));
  return s;
}

std::string criterion_learnability() {
  double start = now_seconds();
  TrainConfig cfg = TrainConfig::tiny();
  cfg.max_steps = 500;
  cfg.early_stopping = false;
  SynthSplits data = synth_splits(cfg, 10);
  TripleNetModel<float> model(cfg, data.vocab.word_count(), data.vocab.char_count());
  TrainResult res = train(model, data.train, {});
  double r1 = recall_at_k(score_groups(model, data.train, 2), 2, 1);
  double elapsed = now_seconds() - start;
  std::ostringstream os;
  os << "loss " << res.final_loss << ", train R_2@1 " << r1 << ", " << elapsed << " s";
  check(res.final_loss < 0.1, "criterion-5", "loss >= 0.1: " + os.str());
  check(r1 >= 0.95, "criterion-5", "train R_2@1 < 0.95: " + os.str());
  check(elapsed < 300, "criterion-5", "too slow: " + os.str());
  return os.str();
}

std::string criterion_generalization() {
  double start = now_seconds();
  TrainConfig cfg = TrainConfig::tiny();
  cfg.max_steps = 200;
  cfg.early_stopping = false;
  SynthSplits data = synth_splits(cfg, 1000);
  auto run = [&](bool drop_query) {
    TrainConfig c = cfg;
    c.flags.no_query = drop_query;
    TripleNetModel<float> model(c, data.vocab.word_count(), data.vocab.char_count());
    train(model, data.train, {});
    return recall_at_k(score_groups(model, data.test, 2), 2, 1);
  };
  double full = run(false);
  double no_query = run(true);
  double elapsed = now_seconds() - start;
  std::ostringstream os;
  os << "full " << full << ", -query " << no_query << ", gap " << (full - no_query) << ", "
     << elapsed << " s";
  check(full >= 0.80, "criterion-6", "full model below 0.80: " + os.str());
  check(full - no_query >= 0.05, "criterion-6", "-query gap below 5 points: " + os.str());
  check(elapsed < 1800, "criterion-6", "too slow: " + os.str());
  return os.str();
}

std::string criterion_importance() {
  TrainConfig cfg = TrainConfig::tiny();
  cfg.max_steps = 200;
  cfg.early_stopping = false;
  SynthSplits data = synth_splits(cfg, 300);
  auto rows = utterance_importance<float>(cfg, data.vocab.word_count(), data.vocab.char_count(),
                                          data.train, data.test);
  size_t query_pos = cfg.max_turns - 1;
  std::ostringstream os;
  for (auto& r : rows) os << (r.position ? ", " : "") << "pos" << r.position << " " << r.drop;
  for (auto& r : rows)
    if (r.position != query_pos)
      check(rows[query_pos].drop > r.drop, "criterion-8",
            "query drop not the largest: " + os.str());
  return os.str();
}

// ---------- criterion 7: determinism & persistence ----------

std::string criterion_determinism() {
  TrainConfig cfg = TrainConfig::tiny();
  cfg.max_steps = 60;
  cfg.early_stopping = false;
  SynthCorpus corpus = synth_corpus(3, 40, 40, 2, 10, 10);
  Vocab vocab = build_vocab(corpus.train);
  auto train_set = index_samples(corpus.train, vocab, limits_of(cfg));
  auto valid = index_samples(corpus.valid, vocab, limits_of(cfg));
  auto test_set = index_samples(corpus.test, vocab, limits_of(cfg));

  TripleNetModel<float> a(cfg, vocab.word_count(), vocab.char_count());
  TripleNetModel<float> b(cfg, vocab.word_count(), vocab.char_count());
  TrainResult ra = train(a, train_set, valid);
  TrainResult rb = train(b, train_set, valid);
  check(ra.log == rb.log, "criterion-7", "same-seed training logs differ");

  Checkpoint ck = make_checkpoint(a, static_cast<Adamax<float>*>(nullptr), nullptr, 60);
  std::string p1 = "acceptance_ck1.bin", p2 = "acceptance_ck2.bin";
  ck.save(p1);
  Checkpoint::load(p1).save(p2);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  check(slurp(p1) == slurp(p2), "criterion-7", "checkpoint round trip not byte-identical");

  TripleNetModel<float> restored(cfg, vocab.word_count(), vocab.char_count());
  restore_checkpoint(Checkpoint::load(p2), restored, static_cast<Adamax<float>*>(nullptr),
                     nullptr);
  auto ga = score_groups(a, test_set, 2);
  auto gr = score_groups(restored, test_set, 2);
  for (size_t g = 0; g < ga.size(); ++g)
    for (size_t c = 0; c < ga[g].candidates.size(); ++c)
      check(ga[g].candidates[c].score == gr[g].candidates[c].score, "criterion-7",
            "restored model scores differ");
  std::remove(p1.c_str());
  std::remove(p2.c_str());

  auto winners = ensemble_vote({ga, ga, ga});
  for (size_t g = 0; g < ga.size(); ++g) {
    size_t best = 0;
    for (size_t c = 1; c < ga[g].candidates.size(); ++c)
      if (ga[g].candidates[c].score > ga[g].candidates[best].score) best = c;
    check(winners[g] == best, "criterion-7", "identical-model ensemble differs from single");
  }
  return "logs, checkpoint bytes, restored scores, ensemble of 3";
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    std::string (*run)();
  };
  const Criterion criteria[] = {
      {1, "gradient correctness", criterion_gradients},
      {2, "shape/contract sweep", criterion_shapes},
      {3, "matching oracle", criterion_matching},
      {4, "metric oracles", criterion_metrics},
      {5, "learnability", criterion_learnability},
      {6, "generalization + mechanism directionality", criterion_generalization},
      {7, "determinism & persistence", criterion_determinism},
      {8, "utterance importance", criterion_importance},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
      ++failures;
    }
    std::cout << "criterion " << c.number << " (" << c.name << "): "
              << (ok ? "PASS" : "FAIL") << " — " << detail << std::endl;
  }
  return failures;
}
