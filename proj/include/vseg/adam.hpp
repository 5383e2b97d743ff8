// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "vseg/error.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

struct AdamHyper {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ContractError("adam: learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ContractError("adam: beta1 and beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ContractError("adam: epsilon must be positive");
  }
};

template <class T>
struct AdamMoments {
  Tensor5<T> m;
  Tensor5<T> v;
};

template <class T>
struct AdamState {
  std::map<std::string, AdamMoments<T>> moments;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of every parameter; the step counter
/// advances once per call.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamHyper& hyper) {
  hyper.validate();
  for (const Parameter<T>* p : params)
    if (!p->has_grad) throw ContractError("adam: missing gradient for parameter '" + p->name + "'");
  if (state.step > 0 && state.moments.size() != params.size())
    throw ContractError("adam: state tracks " + std::to_string(state.moments.size()) + " parameters, got " +
                        std::to_string(params.size()));

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  const T one_b1 = static_cast<T>(1.0 - hyper.beta1), one_b2 = static_cast<T>(1.0 - hyper.beta2);
  const T lr = static_cast<T>(hyper.lr), eps = static_cast<T>(hyper.epsilon);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);

  for (Parameter<T>* p : params) {
    auto [it, fresh] = state.moments.try_emplace(p->name);
    AdamMoments<T>& mom = it->second;
    if (fresh) {
      if (state.step > 1) throw ContractError("adam: parameter '" + p->name + "' was not registered at step 1");
      mom.m = Tensor5<T>(p->value.shape());
      mom.v = Tensor5<T>(p->value.shape());
    }
    if (mom.m.shape() != p->value.shape())
      throw ContractError("adam: moment shape mismatch for '" + p->name + "'");
    T* w = p->value.data();
    const T* g = p->grad.data();
    T* m = mom.m.data();
    T* v = mom.v.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + one_b1 * g[i];
      v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
      const T mhat = m[i] * inv_c1;
      const T vhat = v[i] * inv_c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace vseg
