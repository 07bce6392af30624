#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <string>

#include "lipnet/nn/module.hpp"
#include "lipnet/ops.hpp"

namespace lipnet::nn {

/// Fully connected layer y = x W^T + b on [N, in].
template <std::floating_point T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias = true)
      : weight_(Tensor<T>(Shape{out, in})), has_bias_(bias) {
    if (bias) bias_ = Parameter<T>(Tensor<T>(Shape{out}));
  }

  void init(Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in_features()));
    init_uniform(weight_.value, bound, rng);
    if (has_bias_) init_uniform(bias_.value, bound, rng);
  }

  Var<T> forward(const Var<T>& x) {
    Tape<T>& tape = x.tape();
    std::optional<Var<T>> b;
    if (has_bias_) b = tape.param(bias_);
    return ops::linear(x, tape.param(weight_), b);
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    add_param(out, prefix, "weight", weight_);
    if (has_bias_) add_param(out, prefix, "bias", bias_);
  }

  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  bool has_bias_ = true;
};

}  // namespace lipnet::nn
