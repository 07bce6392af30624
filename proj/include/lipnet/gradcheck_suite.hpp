#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lipnet/gradcheck.hpp"
#include "lipnet/nn/batchnorm.hpp"
#include "lipnet/nn/conv.hpp"
#include "lipnet/nn/lstm.hpp"
#include "lipnet/nn/pool.hpp"
#include "lipnet/ops.hpp"
#include "lipnet/train/loss.hpp"

namespace lipnet::gradsuite {

/// 64-bit finite-difference check of every differentiable layer.
inline constexpr double kTolerance = 1e-4;

inline const std::vector<std::string>& layers() {
  static const std::vector<std::string> names{"conv1d", "conv2d", "conv3d", "batchnorm", "maxpool", "meanpool",
                                              "linear", "lstm",   "bilstm", "loss"};
  return names;
}

namespace detail {

inline Tensor<double> rand(Shape s, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = nn::uniform(rng, lo, hi);
  return t;
}

// Contracts y with fixed random weights so every output coordinate matters.
inline Var<double> contract(const Var<double>& y, std::uint64_t seed) {
  nn::Rng rng(seed ^ 0xabcdefULL);
  return ops::sum(ops::mul(y, y.tape().constant(rand(y.shape(), rng))));
}

inline Shape weight_shape(const nn::ConvSpec& s) {
  Shape w{s.out_channels, s.in_channels};
  w.insert(w.end(), s.kernel.begin(), s.kernel.end());
  return w;
}

inline double conv_case(const nn::ConvSpec& s, const Shape& in, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<Tensor<double>> x{rand(in, rng), rand(weight_shape(s), rng)};
  if (s.bias) x.push_back(rand({s.out_channels}, rng));
  return gradcheck_inputs(
      [&](Tape<double>&, std::span<const Var<double>> v) {
        std::optional<Var<double>> b;
        if (s.bias) b = v[2];
        return contract(nn::conv<double>(v[0], v[1], b, s), seed);
      },
      x);
}

}  // namespace detail

/// Worst relative error of one seeded case of `layer`.
inline double check(const std::string& layer, std::uint64_t seed) {
  using detail::rand;
  nn::Rng rng(seed * 7919 + 11);
  if (layer == "conv1d") return detail::conv_case({3, 2, {5}, {1}, {2}, true}, {2, 3, 7}, seed);
  if (layer == "conv2d") return detail::conv_case({2, 3, {3, 3}, {2, 2}, {1, 1}, true}, {2, 2, 5, 5}, seed);
  if (layer == "conv3d") {
    return std::max(detail::conv_case({2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, true}, {1, 2, 4, 6, 6}, seed),
                    detail::conv_case({1, 2, {5, 3, 3}, {1, 2, 2}, {2, 1, 1}, false}, {2, 1, 4, 6, 6}, seed + 1));
  }
  if (layer == "batchnorm") {
    double worst = 0;
    for (nn::Mode mode : {nn::Mode::train, nn::Mode::eval}) {
      const Tensor<double> rm = rand({3}, rng), rv = rand({3}, rng, 0.5, 2.0);
      worst = std::max(worst, gradcheck_inputs(
                                  [&](Tape<double>&, std::span<const Var<double>> v) {
                                    Tensor<double> m = rm, var = rv;
                                    return detail::contract(
                                        nn::batchnorm<double>(v[0], v[1], v[2], {&m, &var, 0.1, 1e-5}, mode), seed);
                                  },
                                  {rand({4, 3, 2, 2}, rng), rand({3}, rng), rand({3}, rng)}));
    }
    return worst;
  }
  if (layer == "maxpool") {
    const double a = gradcheck_inputs(
        [&](Tape<double>&, std::span<const Var<double>> v) {
          return detail::contract(nn::maxpool(v[0], nn::PoolSpec{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}}), seed);
        },
        {rand({2, 2, 3, 6, 6}, rng)});
    const double b = gradcheck_inputs(
        [&](Tape<double>&, std::span<const Var<double>> v) {
          return detail::contract(nn::maxpool(v[0], nn::PoolSpec{{2}, {2}, {0}}), seed);
        },
        {rand({2, 3, 9}, rng)});
    return std::max(a, b);
  }
  if (layer == "meanpool") {
    return gradcheck_inputs(
        [&](Tape<double>&, std::span<const Var<double>> v) { return detail::contract(ops::mean_pool(v[0]), seed); },
        {rand({2, 3, 4, 5}, rng)});
  }
  if (layer == "linear") {
    return gradcheck_inputs(
        [&](Tape<double>&, std::span<const Var<double>> v) {
          return detail::contract(ops::linear(v[0], v[1], v[2]), seed);
        },
        {rand({3, 5}, rng), rand({4, 5}, rng), rand({4}, rng)});
  }
  if (layer == "lstm") {
    // Three unrolled steps from zero state, input width 3, hidden 4.
    const std::size_t h = 4, d = 3, N = 2;
    return gradcheck_inputs(
        [&](Tape<double>& tape, std::span<const Var<double>> v) {
          const nn::LstmVars<double> p{v[1], v[2], v[3]};
          nn::LstmState<double> s{tape.constant(Tensor<double>(Shape{N, h})), tape.constant(Tensor<double>(Shape{N, h}))};
          Var<double> acc;
          for (std::size_t t = 0; t < 3; ++t) {
            s = nn::lstm_step(ops::reshape(ops::slice(v[0], 0, t, t + 1), Shape{N, d}), s, p);
            const Var<double> term = detail::contract(s.h, seed + t);
            acc = t == 0 ? term : ops::add(acc, term);
          }
          return acc;
        },
        {rand({3, N, d}, rng), rand({4 * h, d}, rng), rand({4 * h, h}, rng), rand({4 * h}, rng)});
  }
  if (layer == "bilstm") {
    const std::size_t h = 3, d = 2;
    std::vector<Tensor<double>> in{rand({4, 2, d}, rng)};
    for (std::size_t l = 0; l < 2; ++l) {
      const std::size_t din = l == 0 ? d : h;
      for (int dir = 0; dir < 2; ++dir) {
        in.push_back(rand({4 * h, din}, rng));
        in.push_back(rand({4 * h, h}, rng));
        in.push_back(rand({4 * h}, rng));
      }
    }
    return gradcheck_inputs(
        [&](Tape<double>&, std::span<const Var<double>> v) {
          std::vector<nn::BiLstmLayerVars<double>> ls;
          for (std::size_t l = 0; l < 2; ++l) {
            const std::size_t o = 1 + 6 * l;
            ls.push_back({{v[o], v[o + 1], v[o + 2]}, {v[o + 3], v[o + 4], v[o + 5]}});
          }
          return detail::contract(nn::bilstm<double>(v[0], ls, nn::MergeMode::add, nn::MergeMode::concat), seed);
        },
        in);
  }
  if (layer == "loss") {
    std::vector<std::uint32_t> labels{static_cast<std::uint32_t>(seed % 5), static_cast<std::uint32_t>((seed + 2) % 5)};
    const Tensor<double> seq = rand({3, 2, 5}, rng, -2, 2), single = rand({2, 5}, rng, -2, 2);
    double worst = 0;
    for (auto mode : {train::LossMode::every_step, train::LossMode::last_step}) {
      worst = std::max(worst, gradcheck_inputs(
                                  [&](Tape<double>&, std::span<const Var<double>> v) {
                                    return train::aggregated_loss<double>(v[0], labels, mode);
                                  },
                                  {seq}));
    }
    return std::max(worst, gradcheck_inputs(
                               [&](Tape<double>&, std::span<const Var<double>> v) {
                                 return train::aggregated_loss<double>(v[0], labels, train::LossMode::every_step);
                               },
                               {single}));
  }
  throw ConfigError("gradcheck: unknown layer '" + layer + "'");
}

struct LayerResult {
  std::string layer;
  std::size_t cases = 0;
  double max_error = 0;
  bool passed() const { return max_error < kTolerance; }
};

/// Runs `cases` seeded cases (seed, seed+1, ...) of each named layer, or of
/// all layers for "all".
inline std::vector<LayerResult> run(const std::string& which, std::uint64_t seed, std::size_t cases = 10) {
  std::vector<std::string> names = which == "all" ? layers() : std::vector<std::string>{which};
  std::vector<LayerResult> out;
  for (const auto& n : names) {
    LayerResult r{n, cases, 0.0};
    for (std::size_t c = 0; c < cases; ++c) r.max_error = std::max(r.max_error, check(n, seed + c));
    out.push_back(r);
  }
  return out;
}

}  // namespace lipnet::gradsuite
