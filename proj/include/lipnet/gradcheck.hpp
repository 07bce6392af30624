#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "lipnet/error.hpp"
#include "lipnet/tape.hpp"
#include "lipnet/tensor.hpp"

namespace lipnet {

/// Central-difference gradient (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) of a
/// scalar function, one coordinate at a time. f must be deterministic.
template <class F>
Tensor<double> finite_diff_grad(F&& f, Tensor<double> x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_grad: eps must be positive");
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(static_cast<const Tensor<double>&>(x));
    x[i] = orig - eps;
    const double fm = f(static_cast<const Tensor<double>&>(x));
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1, |a_i| + |b_i|).
inline double grad_rel_error(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("grad_rel_error: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(1.0, std::abs(a[i]) + std::abs(b[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// Reverse-mode gradient of build(tape, x) with respect to x.
template <class Build>
Tensor<double> autodiff_grad(Build&& build, const Tensor<double>& x) {
  Tape<double> tape;
  const Var<double> xv = tape.leaf(x);
  const Var<double> loss = build(tape, xv);
  tape.backward(loss);
  return tape.grad(xv);
}

/// Value of build(tape, x) evaluated on a fresh tape.
template <class Build>
double evaluate_scalar(Build&& build, const Tensor<double>& x) {
  Tape<double> tape;
  const Var<double> xv = tape.constant(x);
  return build(tape, xv).value().item();
}

using GradBuild = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Worst relative error between reverse-mode and central-difference gradients
/// of build() with respect to every input tensor.
inline double gradcheck_inputs(const GradBuild& build, const std::vector<Tensor<double>>& inputs, double eps = 1e-5) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x));
  const Var<double> loss = build(tape, vars);
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor<double>& xk) {
      Tape<double> t2;
      std::vector<Var<double>> v2;
      for (std::size_t j = 0; j < inputs.size(); ++j) v2.push_back(t2.constant(j == k ? xk : inputs[j]));
      return build(t2, v2).value().item();
    };
    const Tensor<double> fd = finite_diff_grad(f, inputs[k], eps);
    worst = std::max(worst, grad_rel_error(tape.grad(vars[k]), fd));
  }
  return worst;
}

}  // namespace lipnet
