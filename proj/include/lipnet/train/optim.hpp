#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <string>

#include "lipnet/error.hpp"
#include "lipnet/nn/module.hpp"

namespace lipnet::train {

/// Classical momentum SGD: v <- mu v + g; p <- p - lr v.
/// Velocities are keyed by blob name; frozen parameters are skipped.
template <std::floating_point T>
class Sgd {
 public:
  explicit Sgd(double momentum = 0.9) : momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
  }

  void step(const nn::BlobList<T>& blobs, double lr) {
    if (!(lr > 0.0)) throw ContractError("sgd: learning rate must be positive");
    for (const auto& b : blobs) {
      if (!b.param || b.param->frozen) continue;
      Parameter<T>& p = *b.param;
      if (p.grad.shape() != p.value.shape()) {
        throw DimensionError("sgd: gradient of '" + b.name + "' is " + to_string(p.grad.shape()) +
                             ", parameter is " + to_string(p.value.shape()));
      }
      auto it = velocity_.find(b.name);
      if (it == velocity_.end()) it = velocity_.emplace(b.name, Tensor<T>(p.value.shape())).first;
      Tensor<T>& v = it->second;
      if (v.shape() != p.value.shape()) {
        throw DimensionError("sgd: velocity of '" + b.name + "' does not match its parameter");
      }
      const T mu = static_cast<T>(momentum_), rate = static_cast<T>(lr);
      T* vv = v.raw();
      T* pv = p.value.raw();
      const T* gv = p.grad.raw();
      for (std::size_t i = 0; i < v.size(); ++i) {
        vv[i] = mu * vv[i] + gv[i];
        pv[i] -= rate * vv[i];
      }
    }
  }

  static void zero_grad(const nn::BlobList<T>& blobs) {
    for (const auto& b : blobs) {
      if (b.param) b.param->zero_grad();
    }
  }

  const Tensor<T>* velocity(const std::string& name) const {
    auto it = velocity_.find(name);
    return it == velocity_.end() ? nullptr : &it->second;
  }
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::map<std::string, Tensor<T>> velocity_;
};

/// Learning rate decaying geometrically from `initial` (epoch 0) to `final`
/// (epoch E-1).
struct LrSchedule {
  double initial = 5e-3;
  double final = 5e-5;
  std::size_t epochs = 20;

  void validate() const {
    if (!(final > 0.0) || !(initial >= final)) throw ConfigError("lr schedule: need lr_initial >= lr_final > 0");
    if (epochs == 0) throw ConfigError("lr schedule: epoch budget must be positive");
    if (epochs < 2 && initial != final) throw ConfigError("lr schedule: a decaying schedule needs at least 2 epochs");
  }
};

inline double lr_at(const LrSchedule& s, std::size_t epoch) {
  s.validate();
  if (epoch >= s.epochs) {
    throw ContractError("lr schedule: epoch " + std::to_string(epoch) + " outside budget " + std::to_string(s.epochs));
  }
  if (s.epochs == 1) return s.initial;
  const double frac = static_cast<double>(epoch) / static_cast<double>(s.epochs - 1);
  return s.initial * std::pow(s.final / s.initial, frac);
}

/// Validation-driven stopping: improvement is strictly greater than the best
/// so far; stop once more than `patience` epochs pass without one.
struct EarlyStop {
  std::size_t patience = 3;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since = 0;

  /// Returns true when training should stop.
  bool update(double val_top1) {
    if (val_top1 > best) {
      best = val_top1;
      since = 0;
    } else {
      ++since;
    }
    return since > patience;
  }
};

}  // namespace lipnet::train
