#pragma once

#include <json.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "lipnet/eval/metrics.hpp"

namespace lipnet::eval {

struct ReportMeta {
  std::string variant, checkpoint, split;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> top;
  std::vector<Confusion> confusions;
  PerWordTable per_word;
  ReportMeta meta;
};

inline EvalReport make_report(const ScoreMatrix& sm, std::vector<std::size_t> ks, std::size_t confusion_k,
                              ReportMeta meta) {
  EvalReport r;
  r.ks = std::move(ks);
  for (std::size_t k : r.ks) r.top.push_back(topn_clamped(sm, k));
  r.confusions = confusion_pairs(sm, confusion_k);
  r.per_word = per_word_table(sm);
  r.meta = std::move(meta);
  return r;
}

inline std::string word_name(const std::vector<std::string>& vocab, std::size_t w) {
  return w < vocab.size() ? vocab[w] : std::to_string(w);
}

/// {top: {"1":..}, confusions: [...], per_word: [...], meta: {...}}
inline nlohmann::json to_json(const EvalReport& r, const std::vector<std::string>& vocab) {
  nlohmann::json top = nlohmann::json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i) top[std::to_string(r.ks[i])] = r.top[i];
  nlohmann::json conf = nlohmann::json::array();
  for (const auto& c : r.confusions) {
    conf.push_back({{"target", word_name(vocab, c.target)},
                    {"decision", word_name(vocab, c.decision)},
                    {"target_index", c.target},
                    {"decision_index", c.decision},
                    {"count", c.count},
                    {"clips", c.clips},
                    {"rate", c.rate()}});
  }
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : r.per_word.rows) {
    words.push_back({{"word", word_name(vocab, w.word)},
                     {"index", w.word},
                     {"clips", w.clips},
                     {"correct", w.correct},
                     {"accuracy", w.accuracy()}});
  }
  nlohmann::json absent = nlohmann::json::array();
  for (std::size_t w : r.per_word.absent) absent.push_back(word_name(vocab, w));
  return {{"top", top},
          {"confusions", conf},
          {"per_word", words},
          {"absent_words", absent},
          {"meta",
           {{"variant", r.meta.variant},
            {"checkpoint", r.meta.checkpoint},
            {"split", r.meta.split},
            {"seed", r.meta.seed}}}};
}

/// Plain-text tables: top-N, most frequent errors, best and worst words.
inline std::string to_text(const EvalReport& r, const std::vector<std::string>& vocab, std::size_t rows = 10) {
  std::string out;
  char buf[256];
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    std::snprintf(buf, sizeof buf, "top-%-3zu %6.2f%%\n", r.ks[i], 100.0 * r.top[i]);
    out += buf;
  }
  out += "\nmost frequent errors\n";
  std::snprintf(buf, sizeof buf, "%-16s %-16s %7s\n", "target", "decision", "rate");
  out += buf;
  for (const auto& c : r.confusions) {
    std::snprintf(buf, sizeof buf, "%-16s %-16s %6.1f%%\n", word_name(vocab, c.target).c_str(),
                  word_name(vocab, c.decision).c_str(), 100.0 * c.rate());
    out += buf;
  }
  const auto& w = r.per_word.rows;
  const std::size_t n = std::min(rows, w.size());
  out += "\nhighest accuracy                 lowest accuracy\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& hi = w[i];
    const auto& lo = w[w.size() - 1 - i];
    std::snprintf(buf, sizeof buf, "%-16s %6.1f%%         %-16s %6.1f%%\n", word_name(vocab, hi.word).c_str(),
                  100.0 * hi.accuracy(), word_name(vocab, lo.word).c_str(), 100.0 * lo.accuracy());
    out += buf;
  }
  return out;
}

}  // namespace lipnet::eval
