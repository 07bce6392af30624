#pragma once

#include <concepts>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/nn/batchnorm.hpp"
#include "lipnet/nn/conv.hpp"
#include "lipnet/nn/linear.hpp"
#include "lipnet/nn/lstm.hpp"
#include "lipnet/nn/pool.hpp"
#include "lipnet/ops.hpp"
#include "lipnet/zoo/config.hpp"

namespace lipnet::zoo {

using nn::Mode;
using nn::Rng;
using nn::join_name;

template <std::floating_point T>
using BlobList = nn::BlobList<T>;

/// Per-frame geometry after the front-end: {channels, height, width}.
struct FrameGeom {
  std::size_t channels, height, width;
  std::size_t flat() const { return channels * height * width; }
};

inline FrameGeom frontend_geometry(const ModelConfig& cfg) {
  auto half = [](std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
    return nn::window_output_extent(in, k, s, p);
  };
  const std::size_t h = half(half(cfg.H, 7, 2, 3), 3, 2, 1);
  const std::size_t w = half(half(cfg.W, 7, 2, 3), 3, 2, 1);
  return {cfg.frontend_channels, h, w};
}

/// Conv + BN + ReLU + max-pool on [N, 1, T, H, W] -> [N, C, T, H/4, W/4].
///
/// 3D mode uses a 5x7x7 kernel over (time, height, width). 2D mode applies a
/// 7x7 kernel to each frame separately with the same spatial stride, padding
/// and pooling, so frames never mix.
template <std::floating_point T>
class Frontend {
 public:
  Frontend() = default;
  Frontend(const ModelConfig& cfg, FrontendMode mode) : mode_(mode), cfg_(cfg) {
    const std::size_t C = cfg.frontend_channels;
    if (mode == FrontendMode::conv3d) {
      conv_ = nn::Conv<T>({1, C, {5, 7, 7}, {1, 2, 2}, {2, 3, 3}, true});
      pool_ = {{1, 3, 3}, {1, 2, 2}, {0, 1, 1}};
    } else {
      conv_ = nn::Conv<T>({1, C, {7, 7}, {2, 2}, {3, 3}, true});
      pool_ = {{3, 3}, {2, 2}, {1, 1}};
    }
    bn_ = nn::BatchNorm<T>(C);
  }

  void init(Rng& rng) { conv_.init(rng); }

  Var<T> forward(const Var<T>& x, Mode mode) {
    const Shape& s = x.shape();
    if (s.size() != 5 || s[1] != 1 || s[3] != cfg_.H || s[4] != cfg_.W) {
      throw DimensionError("frontend: expected [N,1,T," + std::to_string(cfg_.H) + "," + std::to_string(cfg_.W) +
                           "], got " + to_string(s));
    }
    if (mode_ == FrontendMode::conv3d) return block(x, mode);
    const std::size_t N = s[0], Tn = s[2];
    // [N,1,T,H,W] -> [N*T,1,H,W], run per frame, then back to [N,C,T,h,w].
    const Var<T> frames = ops::reshape(ops::permute(x, {0, 2, 1, 3, 4}), Shape{N * Tn, 1, s[3], s[4]});
    const Var<T> y = block(frames, mode);
    const Shape& ys = y.shape();
    return ops::permute(ops::reshape(y, Shape{N, Tn, ys[1], ys[2], ys[3]}), {0, 2, 1, 3, 4});
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    conv_.collect(out, join_name(prefix, "conv"));
    bn_.collect(out, join_name(prefix, "bn"));
  }

  FrontendMode mode() const { return mode_; }
  nn::Conv<T>& conv() { return conv_; }
  nn::BatchNorm<T>& bn() { return bn_; }

 private:
  Var<T> block(const Var<T>& x, Mode mode) {
    return nn::maxpool(ops::relu(bn_.forward(conv_.forward(x), mode)), pool_);
  }

  FrontendMode mode_ = FrontendMode::conv3d;
  ModelConfig cfg_;
  nn::Conv<T> conv_;
  nn::BatchNorm<T> bn_;
  nn::PoolSpec pool_;
};

/// Pre-activation residual block: out = F(relu(bn1(x))) + shortcut.
/// The shortcut is the identity when shape is preserved, otherwise a 1x1
/// projection (with the block's stride) of the pre-activated input.
template <std::floating_point T>
class PreActBlock {
 public:
  PreActBlock() = default;
  PreActBlock(std::size_t in, std::size_t out, std::size_t stride)
      : bn1_(in),
        conv1_({in, out, {3, 3}, {stride, stride}, {1, 1}, false}),
        bn2_(out),
        conv2_({out, out, {3, 3}, {1, 1}, {1, 1}, false}),
        projected_(stride != 1 || in != out) {
    if (projected_) shortcut_ = nn::Conv<T>({in, out, {1, 1}, {stride, stride}, {0, 0}, false});
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (projected_) shortcut_.init(rng);
  }

  Var<T> forward(const Var<T>& x, Mode mode) {
    const Var<T> a = ops::relu(bn1_.forward(x, mode));
    const Var<T> r = conv2_.forward(ops::relu(bn2_.forward(conv1_.forward(a), mode)));
    return ops::add(r, projected_ ? shortcut_.forward(a) : x);
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    bn1_.collect(out, join_name(prefix, "bn1"));
    conv1_.collect(out, join_name(prefix, "conv1"));
    bn2_.collect(out, join_name(prefix, "bn2"));
    conv2_.collect(out, join_name(prefix, "conv2"));
    if (projected_) shortcut_.collect(out, join_name(prefix, "shortcut"));
  }

  bool projected() const { return projected_; }
  nn::Conv<T>& conv1() { return conv1_; }
  nn::Conv<T>& conv2() { return conv2_; }

 private:
  nn::BatchNorm<T> bn1_;
  nn::Conv<T> conv1_;
  nn::BatchNorm<T> bn2_;
  nn::Conv<T> conv2_;
  nn::Conv<T> shortcut_;
  bool projected_ = false;
};

/// Identity-mapping ResNet applied to each frame: [B, C, h, w] -> [B, feat_dim].
/// Stages after the first downsample by 2. The trunk ends with BN + ReLU,
/// global average pooling, then a BN + linear bridge to feat_dim.
template <std::floating_point T>
class ResNet {
 public:
  ResNet() = default;
  explicit ResNet(const ModelConfig& cfg) : in_(frontend_geometry(cfg)) {
    std::size_t ch = in_.channels, h = in_.height, w = in_.width;
    for (std::size_t s = 0; s < cfg.resnet_blocks.size(); ++s) {
      const std::size_t stride = s == 0 ? 1 : 2;
      if (stride == 2 && (h < 2 || w < 2)) {
        throw ConfigError("resnet: " + std::to_string(h) + "x" + std::to_string(w) + " input to stage " +
                          std::to_string(s) + " is too small to downsample; frames must be larger");
      }
      std::vector<PreActBlock<T>> stage;
      for (std::size_t b = 0; b < cfg.resnet_blocks[s]; ++b) {
        stage.emplace_back(ch, cfg.resnet_widths[s], b == 0 ? stride : 1);
        ch = cfg.resnet_widths[s];
      }
      if (stride == 2) {
        h = nn::window_output_extent(h, 3, 2, 1);
        w = nn::window_output_extent(w, 3, 2, 1);
      }
      stages_.push_back(std::move(stage));
    }
    final_bn_ = nn::BatchNorm<T>(ch);
    bridge_bn_ = nn::BatchNorm<T>(ch);
    bridge_ = nn::Linear<T>(ch, cfg.feat_dim);
  }

  void init(Rng& rng) {
    for (auto& stage : stages_) {
      for (auto& b : stage) b.init(rng);
    }
    bridge_.init(rng);
  }

  Var<T> forward(const Var<T>& x, Mode mode) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != in_.channels || s[2] != in_.height || s[3] != in_.width) {
      throw DimensionError("resnet: expected [B," + std::to_string(in_.channels) + "," + std::to_string(in_.height) +
                           "," + std::to_string(in_.width) + "], got " + to_string(s));
    }
    Var<T> cur = x;
    for (auto& stage : stages_) {
      for (auto& b : stage) cur = b.forward(cur, mode);
    }
    const Var<T> pooled = ops::mean_pool(ops::relu(final_bn_.forward(cur, mode)));
    return bridge_.forward(bridge_bn_.forward(pooled, mode));
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b) {
        stages_[s][b].collect(out, join_name(prefix, "s" + std::to_string(s) + ".b" + std::to_string(b)));
      }
    }
    final_bn_.collect(out, join_name(prefix, "final_bn"));
    bridge_bn_.collect(out, join_name(prefix, "bridge_bn"));
    bridge_.collect(out, join_name(prefix, "bridge"));
  }

  std::vector<std::vector<PreActBlock<T>>>& stages() { return stages_; }
  const FrameGeom& input_geometry() const { return in_; }

 private:
  FrameGeom in_{};
  std::vector<std::vector<PreActBlock<T>>> stages_;
  nn::BatchNorm<T> final_bn_;
  nn::BatchNorm<T> bridge_bn_;
  nn::Linear<T> bridge_;
};

/// Fully connected comparator for the ResNet: flattened frame -> hidden
/// layers -> feat_dim, each layer followed by BN and ReLU.
template <std::floating_point T>
class Dnn {
 public:
  Dnn() = default;
  explicit Dnn(const ModelConfig& cfg) {
    std::size_t width = frontend_geometry(cfg).flat();
    std::vector<std::size_t> outs = cfg.dnn_hidden;
    outs.push_back(cfg.feat_dim);
    for (std::size_t o : outs) {
      fc_.emplace_back(width, o);
      bn_.emplace_back(o);
      width = o;
    }
  }

  void init(Rng& rng) {
    for (auto& l : fc_) l.init(rng);
  }

  Var<T> forward(const Var<T>& x, Mode mode) {
    const Shape& s = x.shape();
    if (s.size() != 2 || s[1] != in_features()) {
      throw ConfigError("dnn: input width " + (s.size() == 2 ? std::to_string(s[1]) : to_string(s)) +
                        " does not match the configured " + std::to_string(in_features()));
    }
    Var<T> cur = x;
    for (std::size_t i = 0; i < fc_.size(); ++i) cur = ops::relu(bn_[i].forward(fc_[i].forward(cur), mode));
    return cur;
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < fc_.size(); ++i) {
      fc_[i].collect(out, join_name(prefix, "fc" + std::to_string(i)));
      bn_[i].collect(out, join_name(prefix, "bn" + std::to_string(i)));
    }
  }

  std::size_t in_features() const { return fc_.front().in_features(); }
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{in_features()};
    for (const auto& l : fc_) w.push_back(l.out_features());
    return w;
  }

 private:
  std::vector<nn::Linear<T>> fc_;
  std::vector<nn::BatchNorm<T>> bn_;
};

/// Two (conv1d + BN + ReLU + max-pool/2) blocks, mean over time, linear.
/// [T, N, F] -> [N, V].
template <std::floating_point T>
class TconvBackend {
 public:
  TconvBackend() = default;
  explicit TconvBackend(const ModelConfig& cfg) {
    const std::size_t k = cfg.tconv_kernel, p = k / 2;
    conv0_ = nn::Conv<T>({cfg.feat_dim, cfg.tconv_channels[0], {k}, {1}, {p}, true});
    conv1_ = nn::Conv<T>({cfg.tconv_channels[0], cfg.tconv_channels[1], {k}, {1}, {p}, true});
    bn0_ = nn::BatchNorm<T>(cfg.tconv_channels[0]);
    bn1_ = nn::BatchNorm<T>(cfg.tconv_channels[1]);
    fc_ = nn::Linear<T>(cfg.tconv_channels[1], cfg.V);
    check_length(cfg.T);
  }

  static void check_length(std::size_t steps) {
    if (steps / 2 / 2 < 1) {
      throw ConfigError("tconv back-end: " + std::to_string(steps) + " timesteps cannot be halved twice");
    }
  }

  void init(Rng& rng) {
    conv0_.init(rng);
    conv1_.init(rng);
    fc_.init(rng);
  }

  Var<T> forward(const Var<T>& seq, Mode mode) {
    if (seq.shape().size() != 3) throw DimensionError("tconv back-end: expected [T,N,F], got " + to_string(seq.shape()));
    check_length(seq.shape()[0]);
    const nn::PoolSpec pool{{2}, {2}, {0}};
    Var<T> x = ops::permute(seq, {1, 2, 0});
    x = nn::maxpool(ops::relu(bn0_.forward(conv0_.forward(x), mode)), pool);
    x = nn::maxpool(ops::relu(bn1_.forward(conv1_.forward(x), mode)), pool);
    return fc_.forward(ops::mean_pool(x));
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    conv0_.collect(out, join_name(prefix, "conv0"));
    bn0_.collect(out, join_name(prefix, "bn0"));
    conv1_.collect(out, join_name(prefix, "conv1"));
    bn1_.collect(out, join_name(prefix, "bn1"));
    fc_.collect(out, join_name(prefix, "fc"));
  }

 private:
  nn::Conv<T> conv0_, conv1_;
  nn::BatchNorm<T> bn0_, bn1_;
  nn::Linear<T> fc_;
};

/// Bidirectional LSTM stack followed by a per-timestep classifier.
/// [T, N, F] -> [T, N, V]. Directions are added between layers; the last
/// layer uses the variant's merge mode.
template <std::floating_point T>
class BiLstmBackend {
 public:
  BiLstmBackend() = default;
  BiLstmBackend(const ModelConfig& cfg, std::size_t layers, nn::MergeMode final_merge)
      : lstm_(cfg.feat_dim, cfg.lstm_hidden, layers, nn::MergeMode::add, final_merge),
        fc_(lstm_.output_width(), cfg.V) {}

  void init(Rng& rng) {
    lstm_.init(rng);
    fc_.init(rng);
  }

  Var<T> forward(const Var<T>& seq, Mode) {
    const Var<T> y = lstm_.forward(seq);
    const Shape& s = y.shape();
    const Var<T> logits = fc_.forward(ops::reshape(y, Shape{s[0] * s[1], s[2]}));
    return ops::reshape(logits, Shape{s[0], s[1], fc_.out_features()});
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    lstm_.collect(out, prefix);
    fc_.collect(out, join_name(prefix, "fc"));
  }

  nn::BiLstm<T>& lstm() { return lstm_; }
  nn::Linear<T>& classifier() { return fc_; }

 private:
  nn::BiLstm<T> lstm_;
  nn::Linear<T> fc_;
};

}  // namespace lipnet::zoo
