#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/gemm.hpp"
#include "lipnet/nn/module.hpp"
#include "lipnet/tape.hpp"

namespace lipnet::nn {

/// Convolution geometry for 1, 2 or 3 spatial/temporal axes.
///
/// The operation is cross-correlation (no kernel flip) with zero padding.
/// Weights are laid out [out_channels, in_channels, kernel...].
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;
  bool bias = true;

  std::size_t axes() const { return kernel.size(); }

  void validate() const {
    const std::size_t r = kernel.size();
    if (r < 1 || r > 3) throw ConfigError("conv: kernel must have 1, 2 or 3 axes");
    if (stride.size() != r || padding.size() != r) {
      throw ConfigError("conv: kernel/stride/padding ranks differ");
    }
    if (in_channels == 0 || out_channels == 0) throw ConfigError("conv: channel counts must be >= 1");
    for (std::size_t i = 0; i < r; ++i) {
      if (kernel[i] == 0 || stride[i] == 0) throw ConfigError("conv: kernel and stride must be >= 1");
    }
  }

  std::size_t weight_count() const {
    std::size_t n = in_channels * out_channels;
    for (std::size_t k : kernel) n *= k;
    return n + (bias ? out_channels : 0);
  }
};

/// floor((in + 2 pad - kernel) / stride) + 1, rejecting extents below 1.
inline std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                        std::size_t pad) {
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) {
    throw DimensionError("window of " + std::to_string(kernel) + " does not fit input extent " +
                         std::to_string(in) + " with padding " + std::to_string(pad));
  }
  return (padded - kernel) / stride + 1;
}

namespace detail {

// Geometry promoted to exactly three axes (leading axes of extent 1).
struct Geom3 {
  std::array<std::size_t, 3> in{1, 1, 1}, out{1, 1, 1}, k{1, 1, 1}, s{1, 1, 1}, p{0, 0, 0};
  std::size_t in_size() const { return in[0] * in[1] * in[2]; }
  std::size_t out_size() const { return out[0] * out[1] * out[2]; }
  std::size_t k_size() const { return k[0] * k[1] * k[2]; }
};

inline Geom3 make_geom(const Shape& x, const std::vector<std::size_t>& kernel,
                       const std::vector<std::size_t>& stride, const std::vector<std::size_t>& pad) {
  const std::size_t r = kernel.size();
  Geom3 g;
  const std::size_t lead = 3 - r;
  for (std::size_t i = 0; i < r; ++i) {
    g.in[lead + i] = x[2 + i];
    g.k[lead + i] = kernel[i];
    g.s[lead + i] = stride[i];
    g.p[lead + i] = pad[i];
    g.out[lead + i] = window_output_extent(x[2 + i], kernel[i], stride[i], pad[i]);
  }
  return g;
}

// Unfolds images [first, first+count) of x (layout [N, C, D, H, W]) into
// col[C*kD*kH*kW, count*P].
template <std::floating_point T>
void im2col(const T* x, std::size_t channels, const Geom3& g, std::size_t first, std::size_t count,
            T* col) {
  const std::size_t P = g.out_size();
  const std::size_t width = count * P;
  const std::size_t img_stride = channels * g.in_size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
      for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          T* dst_row = col + row * width;
          for (std::size_t im = 0; im < count; ++im) {
            const T* src = x + (first + im) * img_stride + c * g.in_size();
            T* dst = dst_row + im * P;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const auto id = static_cast<std::ptrdiff_t>(od * g.s[0] + kd) - static_cast<std::ptrdiff_t>(g.p[0]);
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.s[1] + kh) - static_cast<std::ptrdiff_t>(g.p[1]);
                T* d = dst + (od * g.out[1] + oh) * g.out[2];
                if (id < 0 || id >= static_cast<std::ptrdiff_t>(g.in[0]) || ih < 0 ||
                    ih >= static_cast<std::ptrdiff_t>(g.in[1])) {
                  std::fill(d, d + g.out[2], T{0});
                  continue;
                }
                const T* srow = src + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
                for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * g.s[2] + kw) - static_cast<std::ptrdiff_t>(g.p[2]);
                  d[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in[2])) ? T{0} : srow[iw];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back onto dx with accumulation.
template <std::floating_point T>
void col2im(const T* col, std::size_t channels, const Geom3& g, std::size_t first, std::size_t count,
            T* dx) {
  const std::size_t P = g.out_size();
  const std::size_t width = count * P;
  const std::size_t img_stride = channels * g.in_size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
      for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          const T* src_row = col + row * width;
          for (std::size_t im = 0; im < count; ++im) {
            T* dst = dx + (first + im) * img_stride + c * g.in_size();
            const T* s = src_row + im * P;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const auto id = static_cast<std::ptrdiff_t>(od * g.s[0] + kd) - static_cast<std::ptrdiff_t>(g.p[0]);
              if (id < 0 || id >= static_cast<std::ptrdiff_t>(g.in[0])) continue;
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.s[1] + kh) - static_cast<std::ptrdiff_t>(g.p[1]);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in[1])) continue;
                T* drow = dst + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
                const T* srow = s + (od * g.out[1] + oh) * g.out[2];
                for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * g.s[2] + kw) - static_cast<std::ptrdiff_t>(g.p[2]);
                  if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in[2])) drow[iw] += srow[ow];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Images per im2col chunk, bounding the column buffer to ~4M elements.
inline std::size_t chunk_images(std::size_t k_rows, std::size_t positions, std::size_t n) {
  const std::size_t per_image = std::max<std::size_t>(1, k_rows * positions);
  return std::clamp<std::size_t>((std::size_t{1} << 22) / per_image, 1, n);
}

}  // namespace detail

/// Output shape of conv(x, spec) for input shape x = [N, C_in, spatial...].
inline Shape conv_output_shape(const Shape& x, const ConvSpec& spec) {
  spec.validate();
  if (x.size() != 2 + spec.axes()) {
    throw DimensionError("conv: input " + to_string(x) + " does not have " +
                         std::to_string(spec.axes()) + " spatial axes");
  }
  if (x[1] != spec.in_channels) {
    throw DimensionError("conv: input " + to_string(x) + " has " + std::to_string(x[1]) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
  }
  Shape out{x[0], spec.out_channels};
  for (std::size_t i = 0; i < spec.axes(); ++i) {
    out.push_back(window_output_extent(x[2 + i], spec.kernel[i], spec.stride[i], spec.padding[i]));
  }
  return out;
}

/// Convolution primitive; differentiable w.r.t. input, weight and bias.
template <std::floating_point T>
Var<T> conv(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
            const ConvSpec& spec) {
  const Shape out_shape = conv_output_shape(x.shape(), spec);
  Shape wshape{spec.out_channels, spec.in_channels};
  wshape.insert(wshape.end(), spec.kernel.begin(), spec.kernel.end());
  if (weight.shape() != wshape) {
    throw DimensionError("conv: weight " + to_string(weight.shape()) + ", expected " + to_string(wshape));
  }
  if (spec.bias != bias.has_value()) throw ContractError("conv: bias presence does not match spec");
  if (bias && bias->shape() != Shape{spec.out_channels}) {
    throw DimensionError("conv: bias " + to_string(bias->shape()));
  }

  const detail::Geom3 g = detail::make_geom(x.shape(), spec.kernel, spec.stride, spec.padding);
  const std::size_t N = x.shape()[0];
  const std::size_t Cin = spec.in_channels;
  const std::size_t Cout = spec.out_channels;
  const std::size_t K = Cin * g.k_size();
  const std::size_t P = g.out_size();
  const std::size_t chunk = detail::chunk_images(K, P, N);

  Tensor<T> out(out_shape);
  {
    std::vector<T> col(K * chunk * P);
    std::vector<T> ycol(Cout * chunk * P);
    const T* xv = x.value().raw();
    const T* wv = weight.value().raw();
    for (std::size_t first = 0; first < N; first += chunk) {
      const std::size_t cnt = std::min(chunk, N - first);
      const std::size_t width = cnt * P;
      detail::im2col(xv, Cin, g, first, cnt, col.data());
      blas::gemm(blas::Trans::no, blas::Trans::no, Cout, width, K, T{1}, wv, K, col.data(), width, T{0},
                 ycol.data(), width);
      for (std::size_t im = 0; im < cnt; ++im) {
        for (std::size_t co = 0; co < Cout; ++co) {
          const T b = bias ? bias->value()[co] : T{0};
          const T* src = ycol.data() + co * width + im * P;
          T* dst = out.raw() + ((first + im) * Cout + co) * P;
          for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
        }
      }
    }
  }

  const bool rg = x.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
  return x.tape().record(
      "conv", std::move(out), rg, [x, weight, bias, g, N, Cin, Cout, K, P, chunk](Tape<T>& tape, const Tensor<T>& gout) {
        Tensor<T>* gx = tape.grad_sink(x);
        Tensor<T>* gw = tape.grad_sink(weight);
        if (bias) {
          if (auto* gb = tape.grad_sink(*bias)) {
            for (std::size_t n = 0; n < N; ++n) {
              for (std::size_t co = 0; co < Cout; ++co) {
                const T* src = gout.raw() + (n * Cout + co) * P;
                T acc = 0;
                for (std::size_t p = 0; p < P; ++p) acc += src[p];
                (*gb)[co] += acc;
              }
            }
          }
        }
        if (!gx && !gw) return;
        std::vector<T> col(K * chunk * P);
        std::vector<T> gcol(Cout * chunk * P);
        const T* xv = x.value().raw();
        const T* wv = weight.value().raw();
        for (std::size_t first = 0; first < N; first += chunk) {
          const std::size_t cnt = std::min(chunk, N - first);
          const std::size_t width = cnt * P;
          for (std::size_t im = 0; im < cnt; ++im) {
            for (std::size_t co = 0; co < Cout; ++co) {
              const T* src = gout.raw() + ((first + im) * Cout + co) * P;
              std::copy(src, src + P, gcol.data() + co * width + im * P);
            }
          }
          if (gw) {
            detail::im2col(xv, Cin, g, first, cnt, col.data());
            blas::gemm(blas::Trans::no, blas::Trans::yes, Cout, K, width, T{1}, gcol.data(), width,
                       col.data(), width, T{1}, gw->raw(), K);
          }
          if (gx) {
            blas::gemm(blas::Trans::yes, blas::Trans::no, K, width, Cout, T{1}, wv, K, gcol.data(), width,
                       T{0}, col.data(), width);
            detail::col2im(col.data(), Cin, g, first, cnt, gx->raw());
          }
        }
      });
}

/// Convolution layer owning its weight and optional bias.
template <std::floating_point T>
class Conv {
 public:
  Conv() = default;
  explicit Conv(ConvSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Shape w{spec_.out_channels, spec_.in_channels};
    w.insert(w.end(), spec_.kernel.begin(), spec_.kernel.end());
    weight_ = Parameter<T>(Tensor<T>(w));
    if (spec_.bias) bias_ = Parameter<T>(Tensor<T>(Shape{spec_.out_channels}));
  }

  // Uniform in +-sqrt(1/fan_in) for weights and bias.
  void init(Rng& rng) {
    std::size_t fan_in = spec_.in_channels;
    for (std::size_t k : spec_.kernel) fan_in *= k;
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    init_uniform(weight_.value, bound, rng);
    if (spec_.bias) init_uniform(bias_.value, bound, rng);
  }

  Var<T> forward(const Var<T>& x) {
    Tape<T>& tape = x.tape();
    const Var<T> w = tape.param(weight_);
    std::optional<Var<T>> b;
    if (spec_.bias) b = tape.param(bias_);
    return conv(x, w, b, spec_);
  }

  void collect(BlobList<T>& out, const std::string& prefix) {
    add_param(out, prefix, "weight", weight_);
    if (spec_.bias) add_param(out, prefix, "bias", bias_);
  }

  const ConvSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  ConvSpec spec_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

}  // namespace lipnet::nn
