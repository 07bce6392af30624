#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lipnet/error.hpp"

namespace lipnet::data {

/// T frames of H x W 8-bit grayscale, row-major.
struct Frames {
  std::size_t T = 0, H = 0, W = 0;
  std::vector<std::uint8_t> px;

  Frames() = default;
  Frames(std::size_t t, std::size_t h, std::size_t w, std::uint8_t fill = 0) : T(t), H(h), W(w), px(t * h * w, fill) {}

  std::uint8_t& at(std::size_t t, std::size_t y, std::size_t x) { return px[(t * H + y) * W + x]; }
  std::uint8_t at(std::size_t t, std::size_t y, std::size_t x) const { return px[(t * H + y) * W + x]; }
  std::size_t frame_size() const { return H * W; }
  friend bool operator==(const Frames&, const Frames&) = default;
};

struct Clip {
  std::string id;
  std::uint32_t label = 0;
  Frames frames;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(what + ": truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace detail

/// Clip file: "CLIP", u32 T, H, W, label (little-endian), then T*H*W bytes.
/// Nothing else is stored; in particular no word-boundary information.
inline void write_clip(const std::filesystem::path& path, const Clip& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write clip " + path.string());
  out.write("CLIP", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(c.frames.T));
  detail::put_u32(out, static_cast<std::uint32_t>(c.frames.H));
  detail::put_u32(out, static_cast<std::uint32_t>(c.frames.W));
  detail::put_u32(out, c.label);
  out.write(reinterpret_cast<const char*>(c.frames.px.data()), static_cast<std::streamsize>(c.frames.px.size()));
  if (!out) throw DataError("failed writing clip " + path.string());
}

inline Clip read_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open clip " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "CLIP") throw DataError(path.string() + ": not a clip file");
  Clip c;
  c.id = path.stem().string();
  const std::size_t T = detail::get_u32(in, path.string());
  const std::size_t H = detail::get_u32(in, path.string());
  const std::size_t W = detail::get_u32(in, path.string());
  c.label = detail::get_u32(in, path.string());
  if (T == 0 || H == 0 || W == 0) throw DataError(path.string() + ": empty clip");
  c.frames = Frames(T, H, W);
  if (!in.read(reinterpret_cast<char*>(c.frames.px.data()), static_cast<std::streamsize>(c.frames.px.size()))) {
    throw DataError(path.string() + ": truncated frames");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  return c;
}

struct SplitEntry {
  std::string id;
  std::uint32_t label = 0;
  friend bool operator==(const SplitEntry&, const SplitEntry&) = default;
};

/// Dataset description. Stored as a line-oriented text file:
///
///   lipnet-manifest 1
///   frames T
///   size H W
///   mean M
///   std S
///   word <name>            (one per vocabulary entry, in index order)
///   clip <split> <id> <label>
struct Manifest {
  std::vector<std::string> vocab;
  std::vector<SplitEntry> train, val, test;
  double global_mean = 0.0;
  double global_std = 1.0;
  std::size_t T = 0, H = 0, W = 0;

  const std::vector<SplitEntry>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw DataError("unknown split '" + name + "' (expected train, val or test)");
  }

  void validate() const {
    if (vocab.empty()) throw DataError("manifest: empty vocabulary");
    if (T == 0 || H == 0 || W == 0) throw DataError("manifest: frame geometry must be positive");
    if (!(global_std > 0.0) || !std::isfinite(global_std) || !std::isfinite(global_mean)) {
      throw DataError("manifest: global_std must be positive and finite");
    }
    std::set<std::string> ids;
    for (const auto* s : {&train, &val, &test}) {
      for (const auto& e : *s) {
        if (!ids.insert(e.id).second) throw DataError("manifest: clip id '" + e.id + "' listed twice");
        if (e.label >= vocab.size()) throw DataError("manifest: label of '" + e.id + "' out of range");
      }
    }
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr const char* kManifestName = "manifest.txt";

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  m.validate();
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << "lipnet-manifest 1\n";
  out << "frames " << m.T << "\n";
  out << "size " << m.H << " " << m.W << "\n";
  out << std::setprecision(17) << "mean " << m.global_mean << "\nstd " << m.global_std << "\n";
  for (const auto& w : m.vocab) out << "word " << w << "\n";
  const std::pair<const char*, const std::vector<SplitEntry>*> splits[] = {
      {"train", &m.train}, {"val", &m.val}, {"test", &m.test}};
  for (const auto& [name, list] : splits) {
    for (const auto& e : *list) out << "clip " << name << " " << e.id << " " << e.label << "\n";
  }
  if (!out) throw DataError("failed writing manifest in " + dir.string());
}

inline Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    return DataError(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (lineno == 1) {
      int version = 0;
      if (key != "lipnet-manifest" || !(ls >> version) || version != 1) throw fail("not a version-1 manifest");
      continue;
    }
    bool ok = true;
    if (key == "frames") {
      ok = static_cast<bool>(ls >> m.T);
    } else if (key == "size") {
      ok = static_cast<bool>(ls >> m.H >> m.W);
    } else if (key == "mean") {
      ok = static_cast<bool>(ls >> m.global_mean);
    } else if (key == "std") {
      ok = static_cast<bool>(ls >> m.global_std);
    } else if (key == "word") {
      std::string w;
      ok = static_cast<bool>(ls >> w);
      m.vocab.push_back(w);
    } else if (key == "clip") {
      std::string split;
      SplitEntry e;
      ok = static_cast<bool>(ls >> split >> e.id >> e.label);
      if (ok) {
        if (split == "train") {
          m.train.push_back(e);
        } else if (split == "val") {
          m.val.push_back(e);
        } else if (split == "test") {
          m.test.push_back(e);
        } else {
          throw fail("unknown split '" + split + "'");
        }
      }
    } else {
      throw fail("unknown key '" + key + "'");
    }
    if (!ok) throw fail("malformed '" + key + "' line");
  }
  if (lineno == 0) throw DataError(path.string() + ": empty manifest");
  m.validate();
  return m;
}

}  // namespace lipnet::data
