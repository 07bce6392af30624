#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/nn/module.hpp"
#include "lipnet/ops.hpp"

namespace lipnet::nn {

/// How the forward and backward direction outputs are combined per timestep.
enum class MergeMode { add, concat };

inline const char* merge_name(MergeMode m) { return m == MergeMode::add ? "add" : "concat"; }

/// Weights of one unidirectional LSTM layer.
///
/// Gate blocks are stacked in the fixed order (input, forget, cell, output)
/// along the first axis of W [4h, d_in], U [4h, h] and b [4h].
template <std::floating_point T>
struct LstmParams {
  Parameter<T> W;
  Parameter<T> U;
  Parameter<T> b;

  LstmParams() = default;
  LstmParams(std::size_t input, std::size_t hidden)
      : W(Tensor<T>(Shape{4 * hidden, input})),
        U(Tensor<T>(Shape{4 * hidden, hidden})),
        b(Tensor<T>(Shape{4 * hidden})) {}

  std::size_t hidden() const { return U.value.dim(1); }
  std::size_t input() const { return W.value.dim(1); }

  // Uniform in +-sqrt(1/h); forget-gate bias shifted by +1.
  void init(Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(hidden()));
    init_uniform(W.value, bound, rng);
    init_uniform(U.value, bound, rng);
    init_uniform(b.value, bound, rng);
    const std::size_t h = hidden();
    for (std::size_t j = h; j < 2 * h; ++j) b.value[j] += T{1};
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    add_param(out, prefix, "W", W);
    add_param(out, prefix, "U", U);
    add_param(out, prefix, "b", b);
  }

  std::size_t count() const { return W.value.size() + U.value.size() + b.value.size(); }
};

template <std::floating_point T>
struct LstmVars {
  Var<T> W, U, b;
  std::size_t hidden() const { return U.shape()[1]; }
  std::size_t input() const { return W.shape()[1]; }
};

template <std::floating_point T>
LstmVars<T> on_tape(Tape<T>& tape, LstmParams<T>& p) {
  return {tape.param(p.W), tape.param(p.U), tape.param(p.b)};
}

template <std::floating_point T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

namespace detail {

// gates [N, 4h] in (i, f, g, o) order.
template <std::floating_point T>
LstmState<T> lstm_cell(const Var<T>& gates, const Var<T>& c, std::size_t h) {
  const Var<T> i = ops::sigmoid(ops::slice(gates, 1, 0, h));
  const Var<T> f = ops::sigmoid(ops::slice(gates, 1, h, 2 * h));
  const Var<T> g = ops::tanh(ops::slice(gates, 1, 2 * h, 3 * h));
  const Var<T> o = ops::sigmoid(ops::slice(gates, 1, 3 * h, 4 * h));
  const Var<T> c_next = ops::add(ops::mul(f, c), ops::mul(i, g));
  const Var<T> h_next = ops::mul(o, ops::tanh(c_next));
  return {h_next, c_next};
}

}  // namespace detail

/// One LSTM step: i,f,o = sigma(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
template <std::floating_point T>
LstmState<T> lstm_step(const Var<T>& x, const LstmState<T>& state, const LstmVars<T>& p) {
  const std::size_t h = p.hidden();
  const Shape& xs = x.shape();
  if (xs.size() != 2 || xs[1] != p.input() || state.h.shape() != Shape{xs[0], h} ||
      state.c.shape() != Shape{xs[0], h}) {
    throw DimensionError("lstm_step: x " + to_string(xs) + ", h " + to_string(state.h.shape()) + ", c " +
                         to_string(state.c.shape()) + " for input width " + std::to_string(p.input()) +
                         " and hidden " + std::to_string(h));
  }
  const Var<T> gates = ops::add(ops::linear(x, p.W, p.b), ops::linear(state.h, p.U));
  return detail::lstm_cell(gates, state.c, h);
}

/// Runs one direction over seq [T, N, d] from zero state; returns [T, N, h]
/// where row t holds the hidden state after consuming timestep t.
template <std::floating_point T>
Var<T> lstm_sequence(const Var<T>& seq, const LstmVars<T>& p, bool reverse) {
  const Shape& s = seq.shape();
  const std::size_t steps = s[0], N = s[1], d = s[2], h = p.hidden();
  Tape<T>& tape = seq.tape();
  // Input projections for every timestep in one product.
  const Var<T> xproj = ops::linear(ops::reshape(seq, Shape{steps * N, d}), p.W, p.b);
  LstmState<T> state{tape.constant(Tensor<T>(Shape{N, h})), tape.constant(Tensor<T>(Shape{N, h}))};
  std::vector<Var<T>> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    const Var<T> gates = ops::add(ops::slice(xproj, 0, t * N, (t + 1) * N), ops::linear(state.h, p.U));
    state = detail::lstm_cell(gates, state.c, h);
    outputs[t] = ops::reshape(state.h, Shape{1, N, h});
  }
  return ops::concat<T>(std::span<const Var<T>>(outputs), 0);
}

template <std::floating_point T>
Var<T> merge(const Var<T>& fwd, const Var<T>& bwd, MergeMode mode) {
  return mode == MergeMode::add ? ops::add(fwd, bwd) : ops::concat({fwd, bwd}, 2);
}

template <std::floating_point T>
struct BiLstmLayerVars {
  LstmVars<T> fwd;
  LstmVars<T> bwd;
};

/// Stacked bidirectional LSTM over seq [T, N, d_in].
///
/// The forward direction consumes t = 1..T and the backward direction
/// t = T..1. Intermediate layers are combined with `inner` before feeding the
/// next layer; the last layer is combined with `final_merge`.
template <std::floating_point T>
Var<T> bilstm(const Var<T>& seq, std::span<const BiLstmLayerVars<T>> layers, MergeMode inner,
              MergeMode final_merge) {
  if (seq.shape().size() != 3) throw DimensionError("bilstm: expected [T, N, d], got " + to_string(seq.shape()));
  if (layers.empty()) throw ConfigError("bilstm: no layers");
  Var<T> cur = seq;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::size_t width = cur.shape()[2];
    if (layer.fwd.input() != width || layer.bwd.input() != width || layer.fwd.hidden() != layer.bwd.hidden()) {
      throw ConfigError("bilstm: layer " + std::to_string(l) + " expects input width " +
                        std::to_string(layer.fwd.input()) + ", got " + std::to_string(width));
    }
    const Var<T> f = lstm_sequence(cur, layer.fwd, false);
    const Var<T> b = lstm_sequence(cur, layer.bwd, true);
    cur = merge(f, b, l + 1 == layers.size() ? final_merge : inner);
  }
  return cur;
}

/// Bidirectional LSTM stack owning its parameters.
template <std::floating_point T>
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(std::size_t input, std::size_t hidden, std::size_t num_layers, MergeMode inner, MergeMode final_merge)
      : hidden_(hidden), inner_(inner), final_(final_merge) {
    if (num_layers == 0 || hidden == 0 || input == 0) throw ConfigError("bilstm: sizes must be positive");
    std::size_t width = input;
    for (std::size_t l = 0; l < num_layers; ++l) {
      layers_.push_back({LstmParams<T>(width, hidden), LstmParams<T>(width, hidden)});
      width = inner == MergeMode::add ? hidden : 2 * hidden;
    }
  }

  void init(Rng& rng) {
    for (auto& l : layers_) {
      l.first.init(rng);
      l.second.init(rng);
    }
  }

  Var<T> forward(const Var<T>& seq) {
    std::vector<BiLstmLayerVars<T>> vars;
    for (auto& l : layers_) vars.push_back({on_tape(seq.tape(), l.first), on_tape(seq.tape(), l.second)});
    return bilstm<T>(seq, vars, inner_, final_);
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].first.collect(out, join_name(prefix, "l" + std::to_string(l) + ".fwd"));
      layers_[l].second.collect(out, join_name(prefix, "l" + std::to_string(l) + ".bwd"));
    }
  }

  std::size_t output_width() const { return final_ == MergeMode::add ? hidden_ : 2 * hidden_; }
  std::size_t num_layers() const { return layers_.size(); }
  MergeMode final_merge() const { return final_; }
  std::vector<std::pair<LstmParams<T>, LstmParams<T>>>& layers() { return layers_; }

 private:
  std::size_t hidden_ = 0;
  MergeMode inner_ = MergeMode::add;
  MergeMode final_ = MergeMode::add;
  std::vector<std::pair<LstmParams<T>, LstmParams<T>>> layers_;
};

}  // namespace lipnet::nn
