#pragma once

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/nn/lstm.hpp"

namespace lipnet::zoo {

/// Sizes of every sub-network. Defaults reproduce the full-scale model:
/// 31 frames of 112x112, 500 words, 64-channel 3D front-end, ResNet-34 with
/// stages {3,4,6,3} x {64,128,256,512}, 256-wide features, LSTM hidden 256.
struct ModelConfig {
  std::size_t T = 31;
  std::size_t H = 112;
  std::size_t W = 112;
  std::size_t V = 500;
  std::size_t feat_dim = 256;
  std::size_t lstm_hidden = 256;
  std::size_t frontend_channels = 64;
  std::vector<std::size_t> resnet_blocks{3, 4, 6, 3};
  std::vector<std::size_t> resnet_widths{64, 128, 256, 512};
  std::vector<std::size_t> tconv_channels{512, 1024};
  std::size_t tconv_kernel = 5;
  std::vector<std::size_t> dnn_hidden{384, 384};

  void validate() const {
    for (std::size_t v : {T, H, W, V, feat_dim, lstm_hidden, frontend_channels, tconv_kernel}) {
      if (v == 0) throw ConfigError("model config: all sizes must be positive");
    }
    if (resnet_blocks.empty() || resnet_blocks.size() != resnet_widths.size()) {
      throw ConfigError("model config: resnet_blocks and resnet_widths must be non-empty and equally long");
    }
    for (std::size_t v : resnet_blocks) {
      if (v == 0) throw ConfigError("model config: every ResNet stage needs at least one block");
    }
    for (std::size_t v : resnet_widths) {
      if (v == 0) throw ConfigError("model config: ResNet widths must be positive");
    }
    if (tconv_channels.size() != 2 || tconv_channels[0] == 0 || tconv_channels[1] == 0) {
      throw ConfigError("model config: temporal-conv back-end needs two positive channel widths");
    }
    if (tconv_kernel % 2 == 0) throw ConfigError("model config: tconv_kernel must be odd");
    if (dnn_hidden.empty()) throw ConfigError("model config: DNN needs hidden layers");
    for (std::size_t v : dnn_hidden) {
      if (v == 0) throw ConfigError("model config: DNN widths must be positive");
    }
  }

  /// Reduced configuration for single-core runs on synthetic data: same
  /// layer types and front-end kernel geometry, narrower and shallower.
  static ModelConfig desk(std::size_t frames, std::size_t crop, std::size_t vocab) {
    ModelConfig c;
    c.T = frames;
    c.H = crop;
    c.W = crop;
    c.V = vocab;
    c.feat_dim = 32;
    c.lstm_hidden = 32;
    c.frontend_channels = 16;
    c.resnet_blocks = {1, 1};
    c.resnet_widths = {16, 32};
    c.tconv_channels = {32, 64};
    c.dnn_hidden = {64, 64};
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"T", c.T},
                     {"H", c.H},
                     {"W", c.W},
                     {"V", c.V},
                     {"feat_dim", c.feat_dim},
                     {"lstm_hidden", c.lstm_hidden},
                     {"frontend_channels", c.frontend_channels},
                     {"resnet_blocks", c.resnet_blocks},
                     {"resnet_widths", c.resnet_widths},
                     {"tconv_channels", c.tconv_channels},
                     {"tconv_kernel", c.tconv_kernel},
                     {"dnn_hidden", c.dnn_hidden}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("T").get_to(c.T);
  j.at("H").get_to(c.H);
  j.at("W").get_to(c.W);
  j.at("V").get_to(c.V);
  j.at("feat_dim").get_to(c.feat_dim);
  j.at("lstm_hidden").get_to(c.lstm_hidden);
  j.at("frontend_channels").get_to(c.frontend_channels);
  j.at("resnet_blocks").get_to(c.resnet_blocks);
  j.at("resnet_widths").get_to(c.resnet_widths);
  j.at("tconv_channels").get_to(c.tconv_channels);
  j.at("tconv_kernel").get_to(c.tconv_kernel);
  j.at("dnn_hidden").get_to(c.dnn_hidden);
}

enum class Variant { N1, N2, N3, N4, N5, N6, N7 };

enum class FrontendMode { conv2d, conv3d };
enum class TrunkKind { resnet, dnn };
enum class BackendKind { tconv, bilstm };

/// Topology and training regime of each variant.
struct VariantTraits {
  FrontendMode frontend = FrontendMode::conv3d;
  TrunkKind trunk = TrunkKind::resnet;
  BackendKind backend = BackendKind::tconv;
  std::size_t lstm_layers = 0;
  nn::MergeMode final_merge = nn::MergeMode::add;
  // Front-end and trunk weights held fixed (back-end-only training).
  bool frozen_front = false;
};

inline VariantTraits traits(Variant v) {
  using nn::MergeMode;
  switch (v) {
    case Variant::N1: return {FrontendMode::conv2d, TrunkKind::resnet, BackendKind::tconv, 0, MergeMode::add, false};
    case Variant::N2: return {FrontendMode::conv3d, TrunkKind::resnet, BackendKind::tconv, 0, MergeMode::add, false};
    case Variant::N3: return {FrontendMode::conv3d, TrunkKind::dnn, BackendKind::tconv, 0, MergeMode::add, false};
    case Variant::N4: return {FrontendMode::conv3d, TrunkKind::resnet, BackendKind::bilstm, 1, MergeMode::add, true};
    case Variant::N5: return {FrontendMode::conv3d, TrunkKind::resnet, BackendKind::bilstm, 2, MergeMode::add, true};
    case Variant::N6: return {FrontendMode::conv3d, TrunkKind::resnet, BackendKind::bilstm, 2, MergeMode::add, false};
    case Variant::N7: return {FrontendMode::conv3d, TrunkKind::resnet, BackendKind::bilstm, 2, MergeMode::concat, false};
  }
  throw ConfigError("unknown variant");
}

inline std::string variant_name(Variant v) { return "N" + std::to_string(static_cast<int>(v) + 1); }

inline Variant parse_variant(const std::string& s) {
  if (s.size() == 2 && s[0] == 'N' && s[1] >= '1' && s[1] <= '7') return static_cast<Variant>(s[1] - '1');
  if (s == "Baseline-doc" || s == "baseline") {
    throw ConfigError("the VGG-M baseline is documented for reference only and cannot be built");
  }
  throw ConfigError("unknown variant '" + s + "' (expected N1..N7)");
}

}  // namespace lipnet::zoo
