#pragma once

#include <concepts>
#include <optional>
#include <string>

#include "lipnet/zoo/subnets.hpp"

namespace lipnet::zoo {

/// Trainable parameter counts per sub-network.
struct ParamCounts {
  std::size_t frontend = 0;
  std::size_t trunk = 0;
  std::size_t backend = 0;
  std::size_t total() const { return frontend + trunk + backend; }
};

/// A composed lipreading network: front-end, per-frame trunk (ResNet or
/// DNN), and a temporal back-end.
///
/// Input is [N, 1, T, H, W]. Output is [N, V] for the temporal-conv back-end
/// and [T, N, V] for the Bi-LSTM back-end. Blob names are prefixed by
/// "frontend.", "resnet."/"dnn." and "tconv."/"lstm.".
template <std::floating_point T>
class Network {
 public:
  Network(Variant id, const ModelConfig& cfg, std::uint64_t seed = 0)
      : id_(id), traits_(traits(id)), cfg_(cfg) {
    cfg_.validate();
    frontend_ = Frontend<T>(cfg_, traits_.frontend);
    if (traits_.trunk == TrunkKind::resnet) {
      resnet_.emplace(cfg_);
    } else {
      dnn_.emplace(cfg_);
    }
    if (traits_.backend == BackendKind::tconv) {
      tconv_.emplace(cfg_);
    } else {
      lstm_.emplace(cfg_, traits_.lstm_layers, traits_.final_merge);
    }
    Rng rng(seed);
    frontend_.init(rng);
    if (resnet_) resnet_->init(rng);
    if (dnn_) dnn_->init(rng);
    if (tconv_) tconv_->init(rng);
    if (lstm_) lstm_->init(rng);
    set_front_frozen(traits_.frozen_front);
  }

  Var<T> forward(const Var<T>& clips, Mode mode) {
    // Frozen sub-networks also keep their BN statistics fixed.
    const Mode fmode = front_frozen_ ? Mode::eval : mode;
    const Var<T> front = frontend_.forward(clips, fmode);
    const Shape& s = front.shape();  // [N, C, T, h, w]
    const std::size_t N = s[0], Tn = s[2];
    const Var<T> frames = ops::reshape(ops::permute(front, {2, 0, 1, 3, 4}), Shape{Tn * N, s[1], s[3], s[4]});
    Var<T> feats = resnet_ ? resnet_->forward(frames, fmode)
                           : dnn_->forward(ops::reshape(frames, Shape{Tn * N, s[1] * s[3] * s[4]}), fmode);
    const Var<T> seq = ops::reshape(feats, Shape{Tn, N, feats.shape()[1]});
    return tconv_ ? tconv_->forward(seq, mode) : lstm_->forward(seq, mode);
  }

  /// Convenience: a fresh tape, eval mode, returns the logits tensor.
  Tensor<T> infer(const Tensor<T>& clips) {
    Tape<T> tape;
    return forward(tape.constant(clips), Mode::eval).value();
  }

  BlobList<T> blobs() {
    BlobList<T> out;
    frontend_blobs(out);
    trunk_blobs(out);
    backend_blobs(out);
    return out;
  }

  /// Blobs of the front-end and trunk only.
  BlobList<T> front_blobs() {
    BlobList<T> out;
    frontend_blobs(out);
    trunk_blobs(out);
    return out;
  }

  ParamCounts param_counts() {
    ParamCounts c;
    BlobList<T> f, t, b;
    frontend_blobs(f);
    trunk_blobs(t);
    backend_blobs(b);
    c.frontend = nn::count_trainable(f);
    c.trunk = nn::count_trainable(t);
    c.backend = nn::count_trainable(b);
    return c;
  }

  /// Trainable parameters that currently receive updates.
  std::size_t trainable_count() {
    std::size_t n = 0;
    for (const auto& b : blobs()) {
      if (b.param && !b.param->frozen) n += b.value->size();
    }
    return n;
  }

  void set_front_frozen(bool frozen) {
    front_frozen_ = frozen;
    BlobList<T> fb = front_blobs();
    nn::set_frozen(fb, frozen);
  }

  bool front_frozen() const { return front_frozen_; }
  Variant variant() const { return id_; }
  const VariantTraits& variant_traits() const { return traits_; }
  const ModelConfig& config() const { return cfg_; }
  bool sequence_output() const { return lstm_.has_value(); }

  Frontend<T>& frontend() { return frontend_; }
  ResNet<T>* resnet() { return resnet_ ? &*resnet_ : nullptr; }
  Dnn<T>* dnn() { return dnn_ ? &*dnn_ : nullptr; }
  TconvBackend<T>* tconv() { return tconv_ ? &*tconv_ : nullptr; }
  BiLstmBackend<T>* bilstm() { return lstm_ ? &*lstm_ : nullptr; }

 private:
  void frontend_blobs(BlobList<T>& out) { frontend_.collect(out, "frontend"); }
  void trunk_blobs(BlobList<T>& out) {
    if (resnet_) resnet_->collect(out, "resnet");
    if (dnn_) dnn_->collect(out, "dnn");
  }
  void backend_blobs(BlobList<T>& out) {
    if (tconv_) tconv_->collect(out, "tconv");
    if (lstm_) lstm_->collect(out, "lstm");
  }

  Variant id_;
  VariantTraits traits_;
  ModelConfig cfg_;
  bool front_frozen_ = false;
  Frontend<T> frontend_;
  std::optional<ResNet<T>> resnet_;
  std::optional<Dnn<T>> dnn_;
  std::optional<TconvBackend<T>> tconv_;
  std::optional<BiLstmBackend<T>> lstm_;
};

template <std::floating_point T = float>
Network<T> build_variant(Variant id, const ModelConfig& cfg, std::uint64_t seed = 0) {
  return Network<T>(id, cfg, seed);
}

template <std::floating_point T = float>
Network<T> build_variant(const std::string& id, const ModelConfig& cfg, std::uint64_t seed = 0) {
  return Network<T>(parse_variant(id), cfg, seed);
}

}  // namespace lipnet::zoo
