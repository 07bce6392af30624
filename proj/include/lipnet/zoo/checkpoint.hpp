#pragma once

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lipnet/zoo/network.hpp"

namespace lipnet::zoo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
  std::size_t epoch = 0;
  std::string stage;
  double best_val_top1 = 0.0;
  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct BlobRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// In-memory image of a checkpoint file.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string variant;
  ModelConfig config;
  TrainingMeta meta;
  std::vector<BlobRecord> blobs;

  const BlobRecord* find(const std::string& name) const {
    for (const auto& b : blobs) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }
  BlobRecord* find(const std::string& name) {
    return const_cast<BlobRecord*>(static_cast<const Checkpoint&>(*this).find(name));
  }
};

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : buf_(std::move(bytes)), path_(std::move(path)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::string str() {
    const std::size_t n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void expect(const char* magic, std::size_t n) {
    need(n);
    if (std::memcmp(buf_.data() + pos_, magic, n) != 0) throw FormatError(path_ + ": not a checkpoint (bad magic)");
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError(path_ + ": truncated checkpoint");
  }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Layout: "LIPW", u32 version, variant string, JSON config block (config
/// and training metadata), u64 blob count, then per blob: name, u32 rank,
/// u64 extents, raw f32 values. Strings are u32 length + bytes; all
/// integers and floats little-endian.
inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::Writer w;
  w.raw("LIPW", 4);
  w.u32(ck.version);
  w.str(ck.variant);
  const nlohmann::json block{
      {"config", ck.config},
      {"meta", {{"epoch", ck.meta.epoch}, {"stage", ck.meta.stage}, {"best_val_top1", ck.meta.best_val_top1}}}};
  w.str(block.dump());
  w.u64(ck.blobs.size());
  std::set<std::string> seen;
  for (const auto& b : ck.blobs) {
    if (!seen.insert(b.name).second) throw FormatError("checkpoint: duplicate blob name '" + b.name + "'");
    if (numel(b.shape) != b.data.size()) throw FormatError("checkpoint: blob '" + b.name + "' size mismatch");
    w.str(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (std::size_t e : b.shape) w.u64(e);
    for (float v : b.data) w.f32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::Reader r(std::move(bytes), path.string());
  r.expect("LIPW", 4);
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.variant = r.str();
  try {
    (void)parse_variant(ck.variant);
    const nlohmann::json block = nlohmann::json::parse(r.str());
    ck.config = block.at("config").get<ModelConfig>();
    const auto& m = block.at("meta");
    ck.meta.epoch = m.at("epoch").get<std::size_t>();
    ck.meta.stage = m.at("stage").get<std::string>();
    ck.meta.best_val_top1 = m.at("best_val_top1").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad config block: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const std::uint64_t count = r.u64();
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    BlobRecord b;
    b.name = r.str();
    if (!seen.insert(b.name).second) throw FormatError(path.string() + ": duplicate blob '" + b.name + "'");
    const std::uint32_t rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) b.shape.push_back(r.u64());
    const std::size_t n = numel(b.shape);
    r.need(n * 4);
    b.data.resize(n);
    for (auto& v : b.data) v = r.f32();
    ck.blobs.push_back(std::move(b));
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after last blob");
  return ck;
}

/// Copies every blob (parameters and BN running statistics) of `net`.
template <std::floating_point T>
Checkpoint snapshot(Network<T>& net, const TrainingMeta& meta = {}) {
  Checkpoint ck;
  ck.variant = variant_name(net.variant());
  ck.config = net.config();
  ck.meta = meta;
  for (const auto& b : net.blobs()) {
    BlobRecord r{b.name, b.value->shape(), {}};
    r.data.reserve(b.value->size());
    for (T v : b.value->data()) r.data.push_back(static_cast<float>(v));
    ck.blobs.push_back(std::move(r));
  }
  return ck;
}

enum class LoadMode {
  strict,   // every blob present on both sides, same topology and config
  partial,  // copy blobs matched by name; report the rest
};

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> fresh;    // target blobs left at their initialization
  std::vector<std::string> ignored;  // checkpoint blobs with no target
};

inline bool same_topology(Variant a, Variant b) {
  const VariantTraits x = traits(a), y = traits(b);
  return x.frontend == y.frontend && x.trunk == y.trunk && x.backend == y.backend &&
         x.lstm_layers == y.lstm_layers && x.final_merge == y.final_merge;
}

/// Copies checkpoint blobs into `net` by name. Matched blobs must agree in
/// shape. Strict mode also requires identical topology (variants that differ
/// only in training regime, such as N5 and N6, qualify) and config.
template <std::floating_point T>
LoadReport load_into(Network<T>& net, const Checkpoint& ck, LoadMode mode) {
  if (mode == LoadMode::strict) {
    if (!same_topology(parse_variant(ck.variant), net.variant())) {
      throw FormatError("checkpoint variant " + ck.variant + " does not match network " +
                        variant_name(net.variant()));
    }
    if (!(ck.config == net.config())) throw FormatError("checkpoint config does not match network config");
  }
  LoadReport rep;
  BlobList<T> targets = net.blobs();
  std::set<std::string> used;
  for (auto& t : targets) {
    const BlobRecord* src = ck.find(t.name);
    if (!src) {
      if (mode == LoadMode::strict) throw FormatError("checkpoint lacks blob '" + t.name + "'");
      rep.fresh.push_back(t.name);
      continue;
    }
    if (src->shape != t.value->shape()) {
      throw FormatError("blob '" + t.name + "' has shape " + to_string(src->shape) + " in checkpoint, " +
                        to_string(t.value->shape()) + " in network");
    }
    auto dst = t.value->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src->data[i]);
    used.insert(t.name);
    rep.loaded.push_back(t.name);
  }
  for (const auto& b : ck.blobs) {
    if (used.count(b.name)) continue;
    if (mode == LoadMode::strict) throw FormatError("unknown blob '" + b.name + "' in checkpoint");
    rep.ignored.push_back(b.name);
  }
  return rep;
}

template <std::floating_point T>
void save_checkpoint(Network<T>& net, const std::filesystem::path& path, const TrainingMeta& meta = {}) {
  write_checkpoint(snapshot(net, meta), path);
}

/// Rebuilds the stored variant and restores all blobs.
template <std::floating_point T = float>
Network<T> load_checkpoint(const std::filesystem::path& path, TrainingMeta* meta = nullptr) {
  const Checkpoint ck = read_checkpoint(path);
  Network<T> net(parse_variant(ck.variant), ck.config);
  load_into(net, ck, LoadMode::strict);
  if (meta) *meta = ck.meta;
  return net;
}

/// Rewrites an add-merge Bi-LSTM classifier [V, h] as the equivalent
/// concat-merge classifier [V, 2h] = [W | W], so that the N5/N6 to N7
/// hand-off starts from the same function.
inline void widen_classifier_for_concat(Checkpoint& ck) {
  BlobRecord* w = ck.find("lstm.fc.weight");
  if (!w || w->shape.size() != 2) throw FormatError("checkpoint has no Bi-LSTM classifier to widen");
  const std::size_t V = w->shape[0], h = w->shape[1];
  std::vector<float> out(V * 2 * h);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t j = 0; j < h; ++j) {
      out[v * 2 * h + j] = w->data[v * h + j];
      out[v * 2 * h + h + j] = w->data[v * h + j];
    }
  }
  w->shape = {V, 2 * h};
  w->data = std::move(out);
}

}  // namespace lipnet::zoo
