#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/tensor.hpp"

namespace lipnet::eval {

/// One row of V scores per evaluated clip.
struct ScoreMatrix {
  std::size_t V = 0;
  std::vector<double> scores;  // row-major [rows, V]
  std::vector<std::uint32_t> labels;
  std::vector<std::string> ids;

  std::size_t rows() const { return labels.size(); }
  const double* row(std::size_t i) const { return scores.data() + i * V; }

  void append(const double* s, std::uint32_t label, std::string id) {
    if (label >= V) throw ContractError("score matrix: label " + std::to_string(label) + " out of range");
    scores.insert(scores.end(), s, s + V);
    labels.push_back(label);
    ids.push_back(std::move(id));
  }
};

/// Log-softmax of each length-V row.
inline void log_softmax_rows(const float* logits, std::size_t rows, std::size_t V, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* z = logits + r * V;
    double m = z[0];
    for (std::size_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(z[v]));
    double s = 0;
    for (std::size_t v = 0; v < V; ++v) s += std::exp(static_cast<double>(z[v]) - m);
    const double lse = m + std::log(s);
    for (std::size_t v = 0; v < V; ++v) out[r * V + v] = static_cast<double>(z[v]) - lse;
  }
}

/// Clip scores from network output. [N, V] logits are used as they are;
/// [T, N, V] per-timestep logits become sum_t log softmax(logits_t).
inline void append_scores(ScoreMatrix& sm, const Tensor<float>& logits, const std::vector<std::uint32_t>& labels,
                          const std::vector<std::string>& ids) {
  const Shape& s = logits.shape();
  const std::size_t N = labels.size();
  if (sm.V == 0) sm.V = s.back();
  if (s.back() != sm.V || ids.size() != N) throw DimensionError("scores: inconsistent logits " + to_string(s));
  std::vector<double> row(sm.V);
  if (s.size() == 2) {
    if (s[0] != N) throw DimensionError("scores: expected [N,V] logits, got " + to_string(s));
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t v = 0; v < sm.V; ++v) row[v] = logits.at(n, v);
      sm.append(row.data(), labels[n], ids[n]);
    }
    return;
  }
  if (s.size() != 3 || s[1] != N) throw DimensionError("scores: expected [T,N,V] logits, got " + to_string(s));
  const std::size_t T = s[0];
  std::vector<double> lp(T * N * sm.V);
  log_softmax_rows(logits.raw(), T * N, sm.V, lp.data());
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double* p = lp.data() + (t * N + n) * sm.V;
      for (std::size_t v = 0; v < sm.V; ++v) row[v] += p[v];
    }
    sm.append(row.data(), labels[n], ids[n]);
  }
}

/// 1-based rank of `label` in a score row. Equal scores rank the lower word
/// index first.
inline std::size_t rank_of(const double* row, std::size_t V, std::size_t label) {
  std::size_t better = 0;
  const double s = row[label];
  for (std::size_t v = 0; v < V; ++v) {
    if (row[v] > s || (row[v] == s && v < label)) ++better;
  }
  return better + 1;
}

/// Highest-scoring word, lower index on ties.
inline std::size_t decision(const double* row, std::size_t V) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < V; ++v) {
    if (row[v] > row[best]) best = v;
  }
  return best;
}

/// Fraction of rows whose label ranks within the n best scores.
inline double topn(const ScoreMatrix& sm, std::size_t n) {
  if (n < 1 || n > sm.V) throw ContractError("topn: n must lie in [1, " + std::to_string(sm.V) + "]");
  if (sm.rows() == 0) throw ContractError("topn: no scored clips");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sm.rows(); ++i) hits += rank_of(sm.row(i), sm.V, sm.labels[i]) <= n;
  return static_cast<double>(hits) / static_cast<double>(sm.rows());
}

/// top-n clamped to the vocabulary size (top-10 on a 5-word task is top-5).
inline double topn_clamped(const ScoreMatrix& sm, std::size_t n) { return topn(sm, std::min(n, sm.V)); }

struct Confusion {
  std::size_t target = 0;
  std::size_t decision = 0;
  std::size_t count = 0;
  std::size_t clips = 0;
  double rate() const { return static_cast<double>(count) / static_cast<double>(clips); }
};

/// Per target word, its most frequent wrong decision and that decision's
/// share of the word's clips. Sorted by rate (descending), then target
/// index; the first k are returned.
inline std::vector<Confusion> confusion_pairs(const ScoreMatrix& sm, std::size_t k) {
  if (k < 1) throw ContractError("confusion_pairs: k must be at least 1");
  std::vector<std::vector<std::size_t>> counts(sm.V, std::vector<std::size_t>(sm.V, 0));
  std::vector<std::size_t> clips(sm.V, 0);
  for (std::size_t i = 0; i < sm.rows(); ++i) {
    ++clips[sm.labels[i]];
    ++counts[sm.labels[i]][decision(sm.row(i), sm.V)];
  }
  std::vector<Confusion> out;
  for (std::size_t w = 0; w < sm.V; ++w) {
    Confusion best{w, 0, 0, clips[w]};
    for (std::size_t d = 0; d < sm.V; ++d) {
      if (d != w && counts[w][d] > best.count) {
        best.decision = d;
        best.count = counts[w][d];
      }
    }
    if (best.count > 0) out.push_back(best);
  }
  std::stable_sort(out.begin(), out.end(), [](const Confusion& a, const Confusion& b) {
    // Compare count/clips exactly via cross-multiplication.
    const auto l = a.count * b.clips, r = b.count * a.clips;
    return l != r ? l > r : a.target < b.target;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

struct WordAccuracy {
  std::size_t word = 0;
  std::size_t clips = 0;
  std::size_t correct = 0;
  double accuracy() const { return static_cast<double>(correct) / static_cast<double>(clips); }
};

struct PerWordTable {
  std::vector<WordAccuracy> rows;   // best first; ties by word index
  std::vector<std::size_t> absent;  // words without evaluation clips

  /// sum_w n_w acc_w / sum_w n_w, evaluated on the exact counts.
  double weighted_mean() const {
    std::size_t c = 0, n = 0;
    for (const auto& r : rows) {
      c += r.correct;
      n += r.clips;
    }
    if (n == 0) throw ContractError("per-word table is empty");
    return static_cast<double>(c) / static_cast<double>(n);
  }

  double unweighted_mean() const {
    double s = 0;
    for (const auto& r : rows) s += r.accuracy();
    return s / static_cast<double>(rows.size());
  }
};

inline PerWordTable per_word_table(const ScoreMatrix& sm) {
  std::vector<WordAccuracy> acc(sm.V);
  for (std::size_t w = 0; w < sm.V; ++w) acc[w].word = w;
  for (std::size_t i = 0; i < sm.rows(); ++i) {
    WordAccuracy& a = acc[sm.labels[i]];
    ++a.clips;
    a.correct += decision(sm.row(i), sm.V) == sm.labels[i];
  }
  PerWordTable t;
  for (const auto& a : acc) {
    if (a.clips == 0) {
      t.absent.push_back(a.word);
    } else {
      t.rows.push_back(a);
    }
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const WordAccuracy& a, const WordAccuracy& b) {
    const auto l = a.correct * b.clips, r = b.correct * a.clips;
    return l != r ? l > r : a.word < b.word;
  });
  return t;
}

}  // namespace lipnet::eval
