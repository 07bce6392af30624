#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lipnet/data/clip.hpp"
#include "lipnet/data/preprocess.hpp"
#include "lipnet/error.hpp"
#include "lipnet/nn/module.hpp"

namespace lipnet::data {

/// Parameters of the synthetic word-in-utterance corpus.
///
/// Every word is a fixed sequence of 8-16 glyph frames (an oriented bar and
/// a dark blob, both drifting). A clip hides one word at a random temporal
/// offset among out-of-vocabulary glyph sequences and adds pixel noise.
/// Word 1 repeats word 0 and adds one trailing suffix glyph of its own, a
/// planted near duplicate.
struct SyntheticSpec {
  std::size_t vocab = 10;
  std::size_t clips_per_word = 60;
  std::size_t T = 31;
  std::size_t size = 122;  // stored frame extent
  std::uint64_t seed = 0;
  double noise = 12.0;           // pixel noise standard deviation
  std::size_t distractors = 0;   // out-of-vocabulary pool size; 0 picks max(8, 2 * vocab)

  void validate() const {
    if (vocab < 2) throw ConfigError("synthetic corpus: vocab_size must be at least 2");
    if (clips_per_word < 2) throw ConfigError("synthetic corpus: clips_per_word must be at least 2");
    if (T < 4) throw ConfigError("synthetic corpus: clips need at least 4 frames");
    if (size <= 10) throw ConfigError("synthetic corpus: frame size must exceed the 10-pixel jitter margin");
    if (!(noise >= 0)) throw ConfigError("synthetic corpus: noise must be non-negative");
  }
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

/// Per-word split sizes: val = max(1, n/12), test = min(val, n - val - 1),
/// train gets the rest (60 -> 50/5/5).
inline SplitCounts split_counts(std::size_t clips_per_word) {
  if (clips_per_word < 2) throw ConfigError("split: need at least 2 clips per word");
  SplitCounts c;
  c.val = std::max<std::size_t>(1, clips_per_word / 12);
  c.test = std::min(c.val, clips_per_word - c.val - 1);
  c.train = clips_per_word - c.val - c.test;
  return c;
}

/// One rendered glyph frame; positions and sizes are fractions of the crop.
struct Glyph {
  double angle = 0, cx = 0, cy = 0, length = 0, thick = 0;
  double bx = 0, by = 0, br = 0;
  friend bool operator==(const Glyph&, const Glyph&) = default;
};

using GlyphSeq = std::vector<Glyph>;

namespace detail {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double reflect(double v, double lim) {
  while (v > lim || v < -lim) v = v > lim ? 2 * lim - v : -2 * lim - v;
  return v;
}

inline Glyph next_glyph(const Glyph& g, const Glyph& vel) {
  Glyph n = g;
  n.angle = g.angle + vel.angle;
  n.cx = reflect(g.cx + vel.cx, 0.25);
  n.cy = reflect(g.cy + vel.cy, 0.25);
  n.bx = reflect(g.bx + vel.bx, 0.28);
  n.by = reflect(g.by + vel.by, 0.28);
  return n;
}

}  // namespace detail

/// Initial glyph state plus per-frame drift; frames(n) is a prefix of frames(n + 1).
class GlyphMotion {
 public:
  explicit GlyphMotion(nn::Rng& rng) {
    auto u = [&](double lo, double hi) { return nn::uniform(rng, lo, hi); };
    start_ = {u(0, 3.14159265358979), u(-0.2, 0.2), u(-0.2, 0.2), u(0.35, 0.6), u(0.07, 0.12),
              u(-0.25, 0.25), u(-0.25, 0.25), u(0.08, 0.14)};
    vel_ = {u(-0.35, 0.35), u(-0.04, 0.04), u(-0.04, 0.04), 0, 0, u(-0.05, 0.05), u(-0.05, 0.05), 0};
  }

  GlyphSeq frames(std::size_t n) const {
    GlyphSeq out;
    Glyph g = start_;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(g);
      g = detail::next_glyph(g, vel_);
    }
    return out;
  }

 private:
  Glyph start_, vel_;
};

/// Renders one glyph frame into size x size bytes, centred in the frame.
inline void render_glyph(const Glyph& g, std::size_t size, double noise, nn::Rng& rng, std::uint8_t* out) {
  const double crop = static_cast<double>(size > 10 ? size - 10 : size);
  const double c0 = 0.5 * static_cast<double>(size);
  const double cx = c0 + g.cx * crop, cy = c0 + g.cy * crop;
  const double hx = 0.5 * g.length * crop * std::cos(g.angle), hy = 0.5 * g.length * crop * std::sin(g.angle);
  const double half_thick = 0.5 * g.thick * crop;
  const double bx = c0 + g.bx * crop, by = c0 + g.by * crop, br = g.br * crop;
  const double seg2 = 4 * (hx * hx + hy * hy);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      // Distance to the bar's centre segment.
      const double ax = px - (cx - hx), ay = py - (cy - hy);
      const double s = std::clamp((ax * 2 * hx + ay * 2 * hy) / seg2, 0.0, 1.0);
      const double dx = ax - s * 2 * hx, dy = ay - s * 2 * hy;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double bar = std::clamp(half_thick + 0.5 - d, 0.0, 1.0);
      const double r2 = (px - bx) * (px - bx) + (py - by) * (py - by);
      const double blob = std::exp(-r2 / (2 * br * br));
      double v = 110.0 + 100.0 * bar - 70.0 * blob;
      if (noise > 0) v += noise * gauss(rng);
      out[y * size + x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
}

inline std::string synthetic_word_name(std::size_t w) {
  if (w == 1) return "w00s";
  std::string s = std::to_string(w);
  return "w" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

/// Deterministic generator: the same spec always yields the same bytes.
class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(SyntheticSpec spec) : spec_(spec) {
    spec_.validate();
    const std::size_t hi = std::min<std::size_t>(16, spec_.T), lo = std::min<std::size_t>(8, hi - 1);
    nn::Rng rng(detail::mix(spec_.seed, 0x5eed));
    for (std::size_t w = 0; w < spec_.vocab; ++w) {
      if (w == 1) {
        // Minimal pair: word 0 plus one suffix frame, a fresh glyph with an
        // oversized blob so the single frame is visible at desk scale.
        Glyph suffix = GlyphMotion(rng).frames(1)[0];
        suffix.br = 0.24;
        words_.push_back(words_[0]);
        words_.back().push_back(suffix);
        continue;
      }
      const GlyphMotion motion(rng);
      const std::size_t top = w == 0 ? hi - 1 : hi;
      words_.push_back(motion.frames(static_cast<std::size_t>(nn::uniform_int(
          rng, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(std::max(lo, top))))));
    }
    const std::size_t pool = spec_.distractors ? spec_.distractors : std::max<std::size_t>(8, 2 * spec_.vocab);
    for (std::size_t i = 0; i < pool; ++i) {
      GlyphMotion m(rng);
      pool_.push_back(m.frames(static_cast<std::size_t>(nn::uniform_int(rng, 4, 12))));
    }
  }

  const SyntheticSpec& spec() const { return spec_; }
  const GlyphSeq& word_glyphs(std::size_t w) const { return words_.at(w); }

  /// Glyph timeline of one clip of word `w`, and the target's offset.
  std::pair<GlyphSeq, std::size_t> timeline(std::size_t w, nn::Rng& rng) const {
    const GlyphSeq& target = words_.at(w);
    const std::size_t L = target.size();
    const std::size_t offset = static_cast<std::size_t>(nn::uniform_int(rng, 0, static_cast<std::int64_t>(spec_.T - L)));
    GlyphSeq before = fill(offset, rng), after = fill(spec_.T - offset - L, rng);
    GlyphSeq seq;
    // `before` ends where the target begins, so take its tail.
    seq.insert(seq.end(), before.end() - static_cast<std::ptrdiff_t>(offset), before.end());
    seq.insert(seq.end(), target.begin(), target.end());
    seq.insert(seq.end(), after.begin(), after.begin() + static_cast<std::ptrdiff_t>(spec_.T - offset - L));
    return {seq, offset};
  }

  Clip make_clip(std::size_t w, std::size_t index) const {
    nn::Rng rng(detail::mix(detail::mix(spec_.seed, w + 1), index + 1));
    const GlyphSeq seq = timeline(w, rng).first;
    Clip c;
    c.id = synthetic_word_name(w) + "_" + std::to_string(index);
    c.label = static_cast<std::uint32_t>(w);
    c.frames = Frames(spec_.T, spec_.size, spec_.size);
    for (std::size_t t = 0; t < spec_.T; ++t) {
      render_glyph(seq[t], spec_.size, spec_.noise, rng, c.frames.px.data() + t * c.frames.frame_size());
    }
    return c;
  }

  /// Writes every clip plus the manifest into dir; returns the manifest.
  Manifest write(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    Manifest m;
    m.T = spec_.T;
    m.H = m.W = spec_.size;
    for (std::size_t w = 0; w < spec_.vocab; ++w) m.vocab.push_back(synthetic_word_name(w));
    const SplitCounts counts = split_counts(spec_.clips_per_word);
    PixelStats stats;
    for (std::size_t w = 0; w < spec_.vocab; ++w) {
      for (std::size_t i = 0; i < spec_.clips_per_word; ++i) {
        const Clip c = make_clip(w, i);
        write_clip(dir / (c.id + ".clip"), c);
        const SplitEntry e{c.id, c.label};
        if (i < counts.train) {
          m.train.push_back(e);
          stats.add(c.frames);
        } else if (i < counts.train + counts.val) {
          m.val.push_back(e);
        } else {
          m.test.push_back(e);
        }
      }
    }
    std::tie(m.global_mean, m.global_std) = stats.result();
    write_manifest(dir, m);
    return m;
  }

 private:
  // At least n frames made of whole distractor sequences.
  GlyphSeq fill(std::size_t n, nn::Rng& rng) const {
    GlyphSeq out;
    while (out.size() < n) {
      const auto& d = pool_[static_cast<std::size_t>(nn::uniform_int(rng, 0, static_cast<std::int64_t>(pool_.size()) - 1))];
      out.insert(out.end(), d.begin(), d.end());
    }
    return out;
  }

  SyntheticSpec spec_;
  std::vector<GlyphSeq> words_;
  std::vector<GlyphSeq> pool_;
};

inline Manifest gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  return SyntheticCorpus(spec).write(dir);
}

}  // namespace lipnet::data
