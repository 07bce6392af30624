#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lipnet/gradcheck.hpp"
#include "lipnet/nn/module.hpp"
#include "lipnet/ops.hpp"
#include "lipnet/tape.hpp"

namespace lipnet::testing {

inline Tensor<double> random_tensor(Shape shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = nn::uniform(rng, lo, hi);
  return t;
}

using MultiBuild = GradBuild;
using lipnet::gradcheck_inputs;

/// Contracts an arbitrary output against fixed random weights so that every
/// output coordinate contributes to the scalar being differentiated.
inline Var<double> weighted_sum(const Var<double>& y, std::uint64_t seed) {
  nn::Rng rng(seed);
  Tensor<double> w(y.shape());
  for (auto& v : w.data()) v = nn::uniform(rng, -1.0, 1.0);
  return ops::sum(ops::mul(y, y.tape().constant(std::move(w))));
}

}  // namespace lipnet::testing
