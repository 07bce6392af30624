#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lipnet/data/clip.hpp"
#include "lipnet/data/preprocess.hpp"
#include "lipnet/tensor.hpp"

namespace lipnet::data {

struct Batch {
  Tensor<float> clips;  // [N, 1, T, crop, crop], normalized
  std::vector<std::uint32_t> labels;
  std::vector<std::string> ids;
  std::size_t size() const { return labels.size(); }
};

/// A dataset directory (manifest plus one clip file per id) with an
/// in-memory clip cache.
class Dataset {
 public:
  explicit Dataset(std::filesystem::path dir, AugmentSpec aug = {})
      : dir_(std::move(dir)), manifest_(read_manifest(dir_)), aug_(aug), crop_(crop_extent(manifest_.H, aug)) {
    if (manifest_.H != manifest_.W) throw DataError("dataset: frames must be square");
  }

  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  const AugmentSpec& augment_spec() const { return aug_; }
  std::size_t crop() const { return crop_; }
  std::size_t frames() const { return manifest_.T; }
  std::size_t vocab_size() const { return manifest_.vocab.size(); }
  std::size_t size(const std::string& split) const { return manifest_.split(split).size(); }

  const Clip& clip(const std::string& split, std::size_t i) {
    const SplitEntry& e = manifest_.split(split).at(i);
    auto it = cache_.find(e.id);
    if (it != cache_.end()) return it->second;
    Clip c = read_clip(dir_ / (e.id + ".clip"));
    if (c.frames.T != manifest_.T || c.frames.H != manifest_.H || c.frames.W != manifest_.W) {
      throw DataError("clip " + e.id + " geometry differs from the manifest");
    }
    if (c.label != e.label) throw DataError("clip " + e.id + " label differs from the manifest");
    return cache_.emplace(e.id, std::move(c)).first->second;
  }

  /// Batches of clip indices for one pass over a split. With an rng the
  /// order is shuffled and a trailing batch of one is dropped (train-mode
  /// BN needs two samples); without one the order is fixed and every clip
  /// is emitted.
  std::vector<std::vector<std::size_t>> plan(const std::string& split, std::size_t batch, nn::Rng* shuffle) const {
    if (batch == 0) throw ConfigError("batch size must be positive");
    const std::size_t n = size(split);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
      for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(nn::uniform_int(*shuffle, 0, static_cast<std::int64_t>(i) - 1))]);
      }
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch) {
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch)));
    }
    if (shuffle && !out.empty() && out.back().size() == 1) out.pop_back();
    return out;
  }

  /// Assembles a batch. With an rng each clip gets its own random view;
  /// otherwise the centre crop without flip.
  Batch make_batch(const std::string& split, const std::vector<std::size_t>& indices, nn::Rng* augment) {
    const std::size_t T = manifest_.T, per = T * crop_ * crop_;
    Batch b{Tensor<float>(Shape{indices.size(), 1, T, crop_, crop_}), {}, {}};
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const Clip& c = clip(split, indices[k]);
      const View v = augment ? draw_view(*augment, aug_) : View{};
      extract_view(c.frames, v, crop_, manifest_.global_mean, manifest_.global_std, b.clips.raw() + k * per);
      b.labels.push_back(c.label);
      b.ids.push_back(c.id);
    }
    return b;
  }

 private:
  std::filesystem::path dir_;
  Manifest manifest_;
  AugmentSpec aug_;
  std::size_t crop_;
  std::map<std::string, Clip> cache_;
};

}  // namespace lipnet::data
