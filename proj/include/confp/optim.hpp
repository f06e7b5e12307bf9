// confp/optim.hpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "confp/common.hpp"
#include "confp/tensor.hpp"

namespace confp {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: applied to weights, not gradients
};

template <typename Real>
struct AdamState {
  ad::Tensor<Real> m;
  ad::Tensor<Real> v;
  std::int64_t step = 0;

  void Reset(const std::vector<int>& shape) {
    m = ad::Tensor<Real>::Zeros(shape);
    v = ad::Tensor<Real>::Zeros(shape);
    step = 0;
  }
};

/// One Adam update with bias correction and decoupled weight decay.
/// Throws on a non-finite gradient, naming the parameter.
template <typename Real>
void AdamStep(ad::Tensor<Real>& param, const ad::Tensor<Real>& grad, AdamState<Real>& state,
              const AdamConfig& cfg, const std::string& param_name) {
  if (!param.same_shape(grad))
    throw ShapeError("adam: gradient shape mismatch for " + param_name);
  if (!grad.AllFinite())
    throw DomainError("adam: non-finite gradient for parameter " + param_name);
  if (state.m.data.empty()) state.Reset(param.shape);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i];
    const double m = cfg.beta1 * state.m.data[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v.data[i] + (1.0 - cfg.beta2) * g * g;
    state.m.data[i] = static_cast<Real>(m);
    state.v.data[i] = static_cast<Real>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    double p = param.data[i];
    p -= cfg.lr * cfg.weight_decay * p;
    p -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    param.data[i] = static_cast<Real>(p);
  }
}

}  // namespace confp
