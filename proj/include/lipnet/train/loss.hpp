#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/tape.hpp"

namespace lipnet::train {

enum class LossMode { every_step, last_step };

inline const char* loss_mode_name(LossMode m) { return m == LossMode::every_step ? "every" : "last"; }

/// Negative log-likelihood of the word label under softmax(logits).
///
/// [N, V] logits (temporal-conv back-end) give the batch mean of one term
/// per clip. [T, N, V] logits repeat the label at every timestep:
/// every_step sums the per-timestep batch means over t, last_step keeps
/// only t = T-1.
template <std::floating_point T>
Var<T> aggregated_loss(const Var<T>& logits, std::span<const std::uint32_t> labels, LossMode mode) {
  const Shape& s = logits.shape();
  if (s.size() != 2 && s.size() != 3) throw DimensionError("loss: expected [N,V] or [T,N,V], got " + to_string(s));
  const std::size_t steps = s.size() == 3 ? s[0] : 1;
  const std::size_t N = s[s.size() - 2], V = s.back();
  if (labels.size() != N) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(N));
  }
  for (std::uint32_t l : labels) {
    if (l >= V) throw ContractError("loss: label " + std::to_string(l) + " outside [0, " + std::to_string(V) + ")");
  }
  const std::size_t first = mode == LossMode::last_step ? steps - 1 : 0;
  const T* z = logits.value().raw();
  double total = 0.0;
  for (std::size_t t = first; t < steps; ++t) {
    double step = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* row = z + (t * N + n) * V;
      double m = row[0];
      for (std::size_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(row[v]));
      double sum = 0.0;
      for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row[v]) - m);
      step += m + std::log(sum) - static_cast<double>(row[labels[n]]);
    }
    total += step / static_cast<double>(N);
  }
  std::vector<std::uint32_t> lab(labels.begin(), labels.end());
  return logits.tape().record(
      "aggregated_loss", Tensor<T>(Shape{1}, static_cast<T>(total)), logits.requires_grad(),
      [logits, lab = std::move(lab), first, steps, N, V](Tape<T>& tape, const Tensor<T>& g) {
        Tensor<T>* gx = tape.grad_sink(logits);
        const T* zv = logits.value().raw();
        const double scale = static_cast<double>(g[0]) / static_cast<double>(N);
        for (std::size_t t = first; t < steps; ++t) {
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t off = (t * N + n) * V;
            double m = zv[off];
            for (std::size_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(zv[off + v]));
            double sum = 0.0;
            for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(zv[off + v]) - m);
            for (std::size_t v = 0; v < V; ++v) {
              const double p = std::exp(static_cast<double>(zv[off + v]) - m) / sum;
              (*gx)[off + v] += static_cast<T>(scale * (p - (v == lab[n] ? 1.0 : 0.0)));
            }
          }
        }
      });
}

}  // namespace lipnet::train
