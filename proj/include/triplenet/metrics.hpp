#pragma once

// Ranking metrics over candidate groups: R_n@k, MAP, MRR, P@1.
// All metrics are rank-based; ties break by original candidate order
// (stable sort) so results are deterministic.

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "triplenet/tensor.hpp"

namespace triplenet {

struct Candidate {
  double score = 0;
  int label = 0;
};

struct CandidateGroup {
  std::string id;
  std::vector<Candidate> candidates;
};

[[noreturn]] inline void metrics_error(const std::string& what) {
  throw std::runtime_error("metrics: " + what);
}

// Candidate indices ordered by descending score, stable on ties.
inline std::vector<size_t> ranking(const CandidateGroup& g) {
  std::vector<size_t> idx(g.candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return g.candidates[a].score > g.candidates[b].score;
  });
  return idx;
}

// Fraction of groups whose single positive ranks in the top k of n.
inline double recall_at_k(const std::vector<CandidateGroup>& groups, size_t n, size_t k) {
  if (groups.empty()) metrics_error("recall_at_k: empty group set");
  if (k > n) metrics_error("recall_at_k: k exceeds group size n");
  size_t hits = 0;
  for (auto& g : groups) {
    if (g.candidates.size() != n)
      metrics_error("group " + g.id + " has " + std::to_string(g.candidates.size()) +
                    " candidates, expected " + std::to_string(n));
    size_t positives = 0;
    for (auto& c : g.candidates) positives += (c.label == 1);
    if (positives != 1)
      metrics_error("group " + g.id + " has " + std::to_string(positives) +
                    " positives; R_n@k requires exactly 1");
    auto order = ranking(g);
    for (size_t r = 0; r < k; ++r)
      if (g.candidates[order[r]].label == 1) {
        ++hits;
        break;
      }
  }
  return double(hits) / double(groups.size());
}

struct RankReport {
  double map = 0;
  double mrr = 0;
  double p1 = 0;
  size_t groups_scored = 0;
  size_t groups_skipped = 0;  // groups with no positive
};

// AP per group = mean over positives of precision at that positive's
// rank; MRR uses the first positive; groups without positives are
// skipped but counted.
inline RankReport map_mrr_p1(const std::vector<CandidateGroup>& groups) {
  if (groups.empty()) metrics_error("map_mrr_p1: empty group set");
  RankReport rep;
  std::vector<double> aps, rrs;
  double p1_sum = 0;
  for (auto& g : groups) {
    size_t positives = 0;
    for (auto& c : g.candidates) positives += (c.label == 1);
    if (positives == 0) {
      ++rep.groups_skipped;
      continue;
    }
    auto order = ranking(g);
    size_t seen_pos = 0;
    double ap = 0;
    for (size_t r = 0; r < order.size(); ++r) {
      if (g.candidates[order[r]].label == 1) {
        ++seen_pos;
        ap += double(seen_pos) / double(r + 1);
        if (seen_pos == 1) rrs.push_back(1.0 / double(r + 1));
      }
    }
    aps.push_back(ap / double(positives));
    p1_sum += (g.candidates[order[0]].label == 1) ? 1.0 : 0.0;
    ++rep.groups_scored;
  }
  if (rep.groups_scored == 0) metrics_error("map_mrr_p1: no group has a positive");
  // fixed reduction order so the result is invariant to group permutation
  std::sort(aps.begin(), aps.end());
  std::sort(rrs.begin(), rrs.end());
  rep.map = std::accumulate(aps.begin(), aps.end(), 0.0) / double(rep.groups_scored);
  rep.mrr = std::accumulate(rrs.begin(), rrs.end(), 0.0) / double(rep.groups_scored);
  rep.p1 = p1_sum / double(rep.groups_scored);
  return rep;
}

// ---------- scores TSV: group_id<TAB>score<TAB>label ----------

inline void write_scores(const std::vector<CandidateGroup>& groups, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) metrics_error("cannot write " + path);
  out.precision(17);
  for (auto& g : groups)
    for (auto& c : g.candidates) out << g.id << '\t' << c.score << '\t' << c.label << '\n';
}

inline std::vector<CandidateGroup> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) metrics_error("cannot open " + path);
  std::vector<CandidateGroup> groups;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string gid;
    double score;
    int label;
    if (!std::getline(is, gid, '\t') || !(is >> score >> label) ||
        (label != 0 && label != 1))
      metrics_error("scores file " + path + " line " + std::to_string(lineno) + ": malformed");
    if (groups.empty() || groups.back().id != gid) {
      groups.push_back({gid, {}});
    }
    groups.back().candidates.push_back({score, label});
  }
  return groups;
}

}  // namespace triplenet
