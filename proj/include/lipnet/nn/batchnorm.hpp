#pragma once

#include <cmath>
#include <concepts>
#include <memory>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/nn/module.hpp"
#include "lipnet/tape.hpp"

namespace lipnet::nn {

/// Running statistics and hyper-parameters of a batch-normalization layer.
template <std::floating_point T>
struct BatchNormStats {
  Tensor<T>* running_mean = nullptr;
  Tensor<T>* running_var = nullptr;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

/// Per-channel normalization of [N, C, ...].
///
/// Train mode normalizes with the biased batch variance, differentiates
/// through the batch statistics and folds (mean, unbiased variance) into the
/// running buffers with `momentum`. Eval mode uses the running buffers only.
template <std::floating_point T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T> stats,
                 Mode mode) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("batchnorm: expected [N, C, ...], got " + to_string(s));
  const std::size_t N = s[0], C = s[1];
  std::size_t S = 1;
  for (std::size_t i = 2; i < s.size(); ++i) S *= s[i];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} || stats.running_mean->shape() != Shape{C} ||
      stats.running_var->shape() != Shape{C}) {
    throw DimensionError("batchnorm: per-channel vectors do not match " + std::to_string(C) + " channels");
  }
  const std::size_t count = N * S;
  if (mode == Mode::train && count < 2) {
    throw ContractError("batchnorm: train mode needs at least 2 values per channel, got " +
                        std::to_string(count));
  }

  const T* xv = x.value().raw();
  const T* gv = gamma.value().raw();
  const T* bv = beta.value().raw();
  Tensor<T> out(s);
  // Saved for backward: normalized input and 1/sqrt(var + eps).
  auto xhat = std::make_shared<std::vector<T>>(x.value().size());
  auto inv_std = std::make_shared<std::vector<T>>(C);

  for (std::size_t c = 0; c < C; ++c) {
    T mean, var;
    if (mode == Mode::train) {
      T acc = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = xv + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) acc += p[i];
      }
      mean = acc / static_cast<T>(count);
      T sq = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = xv + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<T>(count);
      const T unbiased = sq / static_cast<T>(count - 1);
      T& rm = (*stats.running_mean)[c];
      T& rv = (*stats.running_var)[c];
      rm = (T{1} - stats.momentum) * rm + stats.momentum * mean;
      rv = (T{1} - stats.momentum) * rv + stats.momentum * unbiased;
    } else {
      mean = (*stats.running_mean)[c];
      var = (*stats.running_var)[c];
    }
    const T is = T{1} / std::sqrt(var + stats.eps);
    (*inv_std)[c] = is;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const T h = (xv[base + i] - mean) * is;
        (*xhat)[base + i] = h;
        out[base + i] = gv[c] * h + bv[c];
      }
    }
  }

  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return x.tape().record(
      "batchnorm", std::move(out), rg, [x, gamma, beta, xhat, inv_std, N, C, S, mode](Tape<T>& tape, const Tensor<T>& g) {
        Tensor<T>* gx = tape.grad_sink(x);
        Tensor<T>* gg = tape.grad_sink(gamma);
        Tensor<T>* gb = tape.grad_sink(beta);
        const T* gam = gamma.value().raw();
        const T count = static_cast<T>(N * S);
        for (std::size_t c = 0; c < C; ++c) {
          T sum_g = 0, sum_gh = 0;
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
              sum_g += g[base + i];
              sum_gh += g[base + i] * (*xhat)[base + i];
            }
          }
          if (gg) (*gg)[c] += sum_gh;
          if (gb) (*gb)[c] += sum_g;
          if (!gx) continue;
          const T k = gam[c] * (*inv_std)[c];
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) {
              if (mode == Mode::train) {
                (*gx)[base + i] += k * (g[base + i] - sum_g / count - (*xhat)[base + i] * sum_gh / count);
              } else {
                (*gx)[base + i] += k * g[base + i];
              }
            }
          }
        }
      });
}

/// Batch-normalization layer: learnable gamma/beta plus running statistics.
template <std::floating_point T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, T momentum = T(0.1), T eps = T(1e-5))
      : gamma_(Tensor<T>(Shape{channels}, T{1})),
        beta_(Tensor<T>(Shape{channels}, T{0})),
        running_mean_(Shape{channels}, T{0}),
        running_var_(Shape{channels}, T{1}),
        momentum_(momentum),
        eps_(eps) {
    if (!(eps > T{0})) throw ConfigError("batchnorm: eps must be positive");
  }

  Var<T> forward(const Var<T>& x, Mode mode) {
    Tape<T>& tape = x.tape();
    return batchnorm(x, tape.param(gamma_), tape.param(beta_),
                     BatchNormStats<T>{&running_mean_, &running_var_, momentum_, eps_}, mode);
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    add_param(out, prefix, "gamma", gamma_);
    add_param(out, prefix, "beta", beta_);
    add_buffer(out, prefix, "running_mean", running_mean_);
    add_buffer(out, prefix, "running_var", running_var_);
  }

  std::size_t channels() const { return gamma_.value.size(); }
  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  T momentum_ = T(0.1);
  T eps_ = T(1e-5);
};

}  // namespace lipnet::nn
