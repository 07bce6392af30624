#pragma once

#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/nn/conv.hpp"
#include "lipnet/tape.hpp"

namespace lipnet::nn {

struct PoolSpec {
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;
};

inline Shape pool_output_shape(const Shape& x, const PoolSpec& spec) {
  const std::size_t r = spec.kernel.size();
  if (r < 1 || r > 3 || spec.stride.size() != r || spec.padding.size() != r) {
    throw ConfigError("maxpool: kernel/stride/padding must share a rank of 1..3");
  }
  if (x.size() != 2 + r) {
    throw DimensionError("maxpool: input " + to_string(x) + " does not have " + std::to_string(r) +
                         " spatial axes");
  }
  Shape out{x[0], x[1]};
  for (std::size_t i = 0; i < r; ++i) {
    if (spec.kernel[i] == 0 || spec.stride[i] == 0) throw ConfigError("maxpool: kernel and stride must be >= 1");
    out.push_back(window_output_extent(x[2 + i], spec.kernel[i], spec.stride[i], spec.padding[i]));
  }
  return out;
}

/// Windowed maximum over the trailing 1..3 axes of [N, C, ...].
///
/// Padding cells never win. Ties resolve to the lowest flat input index, and
/// backward routes each output gradient to that single winner.
template <std::floating_point T>
Var<T> maxpool(const Var<T>& x, const PoolSpec& spec) {
  const Shape out_shape = pool_output_shape(x.shape(), spec);
  const detail::Geom3 g = detail::make_geom(x.shape(), spec.kernel, spec.stride, spec.padding);
  const std::size_t planes = x.shape()[0] * x.shape()[1];
  const std::size_t in_plane = g.in_size();
  const std::size_t out_plane = g.out_size();
  Tensor<T> out(out_shape);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(planes * out_plane);
  const T* xv = x.value().raw();

  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = xv + pl * in_plane;
    std::size_t o = 0;
    for (std::size_t od = 0; od < g.out[0]; ++od) {
      for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
        for (std::size_t ow = 0; ow < g.out[2]; ++ow, ++o) {
          bool found = false;
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          // Window visited in increasing flat index order; strict > keeps the first maximum.
          for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
            const auto id = static_cast<std::ptrdiff_t>(od * g.s[0] + kd) - static_cast<std::ptrdiff_t>(g.p[0]);
            if (id < 0 || id >= static_cast<std::ptrdiff_t>(g.in[0])) continue;
            for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.s[1] + kh) - static_cast<std::ptrdiff_t>(g.p[1]);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in[1])) continue;
              for (std::size_t kw = 0; kw < g.k[2]; ++kw) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.s[2] + kw) - static_cast<std::ptrdiff_t>(g.p[2]);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in[2])) continue;
                const std::size_t idx =
                    (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2] +
                    static_cast<std::size_t>(iw);
                if (!found || src[idx] > best) {
                  best = src[idx];
                  best_idx = idx;
                  found = true;
                }
              }
            }
          }
          if (!found) throw ContractError("maxpool: window lies entirely in padding");
          out[pl * out_plane + o] = best;
          (*argmax)[pl * out_plane + o] = static_cast<std::uint32_t>(best_idx);
        }
      }
    }
  }

  return x.tape().record("maxpool", std::move(out), x.requires_grad(),
                         [x, argmax, planes, in_plane, out_plane](Tape<T>& tape, const Tensor<T>& gout) {
                           Tensor<T>* gx = tape.grad_sink(x);
                           for (std::size_t pl = 0; pl < planes; ++pl) {
                             for (std::size_t o = 0; o < out_plane; ++o) {
                               (*gx)[pl * in_plane + (*argmax)[pl * out_plane + o]] += gout[pl * out_plane + o];
                             }
                           }
                         });
}

}  // namespace lipnet::nn
