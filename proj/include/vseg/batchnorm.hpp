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
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/reducer.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

/// Per-channel batch normalization parameters and running statistics.
template <class T>
struct BatchNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;
  double epsilon = 1e-5;
  double momentum = 0.99;

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels, double eps = 1e-5, double mom = 0.99)
      : gamma(name + ".gamma", Tensor5<T>(Shape5{1, channels, 1, 1, 1}, T{1})),
        beta(name + ".beta", Tensor5<T>(Shape5{1, channels, 1, 1, 1}, T{0})),
        running_mean(channels, T{0}),
        running_var(channels, T{1}),
        epsilon(eps),
        momentum(mom) {}

  std::size_t channels() const noexcept { return running_mean.size(); }

  /// Marks externally supplied statistics as usable for inference.
  void set_running(std::vector<T> mean, std::vector<T> var) {
    require(mean.size() == channels() && var.size() == channels(), "batchnorm: running statistics size mismatch");
    running_mean = std::move(mean);
    running_var = std::move(var);
    initialized = true;
  }

  /// The first update adopts the batch statistics; later ones blend with
  /// running = momentum * running + (1 - momentum) * batch.
  void update_running(const std::vector<double>& mean, const std::vector<double>& var) {
    for (std::size_t c = 0; c < channels(); ++c) {
      if (!initialized) {
        running_mean[c] = static_cast<T>(mean[c]);
        running_var[c] = static_cast<T>(var[c]);
      } else {
        running_mean[c] = static_cast<T>(momentum * static_cast<double>(running_mean[c]) + (1.0 - momentum) * mean[c]);
        running_var[c] = static_cast<T>(momentum * static_cast<double>(running_var[c]) + (1.0 - momentum) * var[c]);
      }
    }
    initialized = true;
  }
};

template <class T>
struct BnTrainResult {
  Tensor5<T> out;
  Tensor5<T> normalized;
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
  double count = 0.0;
};

/// Training-mode normalization over (n, d, h, w) of every channel. Batch
/// statistics are reduced across all contexts sharing the mini-batch; each
/// channel sum is accumulated sample by sample.
template <class T>
BnTrainResult<T> batchnorm_train_forward(const Tensor5<T>& x, const BatchNorm<T>& bn, Reducer& reducer) {
  const Shape5 s = x.shape();
  require(s.c == bn.channels(), "batchnorm: input has " + std::to_string(s.c) + " channels, layer expects " +
                                    std::to_string(bn.channels()));
  const std::size_t C = s.c;
  const std::size_t V = s.voxels();

  std::vector<double> stats(C + 1, 0.0);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double partial = 0.0;
      for (T v : x.channel(n, c)) partial += static_cast<double>(v);
      stats[c] += partial;
    }
  stats[C] = static_cast<double>(s.n * V);
  reducer.allreduce(stats);
  const double count = stats[C];
  if (count < 2.0)
    throw ContractError("batchnorm: training mode needs at least 2 values per channel, got " +
                        std::to_string(static_cast<long long>(count)));

  BnTrainResult<T> r{Tensor5<T>(s), Tensor5<T>(s), std::vector<double>(C), std::vector<double>(C, 0.0),
                     std::vector<double>(C), count};
  for (std::size_t c = 0; c < C; ++c) r.mean[c] = stats[c] / count;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double partial = 0.0;
      for (T v : x.channel(n, c)) {
        const double dv = static_cast<double>(v) - r.mean[c];
        partial += dv * dv;
      }
      r.var[c] += partial;
    }
  reducer.allreduce(r.var);
  for (std::size_t c = 0; c < C; ++c) {
    r.var[c] /= count;
    r.inv_std[c] = 1.0 / std::sqrt(r.var[c] + bn.epsilon);
  }
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double g = static_cast<double>(bn.gamma.value[c]);
      const double b = static_cast<double>(bn.beta.value[c]);
      auto in = x.channel(n, c);
      auto nrm = r.normalized.channel(n, c);
      auto out = r.out.channel(n, c);
      for (std::size_t i = 0; i < V; ++i) {
        const double xh = (static_cast<double>(in[i]) - r.mean[c]) * r.inv_std[c];
        nrm[i] = static_cast<T>(xh);
        out[i] = static_cast<T>(g * xh + b);
      }
    }
  return r;
}

/// Inference-mode normalization with the running statistics.
template <class T>
Tensor5<T> batchnorm_infer(const Tensor5<T>& x, const BatchNorm<T>& bn) {
  const Shape5 s = x.shape();
  require(s.c == bn.channels(), "batchnorm: input has " + std::to_string(s.c) + " channels, layer expects " +
                                    std::to_string(bn.channels()));
  if (!bn.initialized)
    throw ContractError("batchnorm: inference requested before any training update (" + bn.gamma.name + ")");
  Tensor5<T> out(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(bn.running_var[c]) + bn.epsilon);
    const double scale = static_cast<double>(bn.gamma.value[c]) * inv;
    const double shift = static_cast<double>(bn.beta.value[c]) - static_cast<double>(bn.running_mean[c]) * scale;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto in = x.channel(n, c);
      auto o = out.channel(n, c);
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = static_cast<T>(static_cast<double>(in[i]) * scale + shift);
    }
  }
  return out;
}

/// Returns dL/dx and accumulates dL/dgamma, dL/dbeta (local shard only).
template <class T>
Tensor5<T> batchnorm_backward(const Tensor5<T>& dy, const BnTrainResult<T>& fwd, BatchNorm<T>& bn,
                              Reducer& reducer) {
  const Shape5 s = dy.shape();
  const std::size_t C = s.c;
  std::vector<double> sums(2 * C, 0.0);  // [sum dy | sum dy * xhat]
  std::vector<T> dgamma(C), dbeta(C);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      auto g = dy.channel(n, c);
      auto xh = fwd.normalized.channel(n, c);
      double sdy = 0.0, sdyx = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        sdy += static_cast<double>(g[i]);
        sdyx += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
      }
      sums[c] += sdy;
      sums[C + c] += sdyx;
      dbeta[c] = static_cast<T>(sdy);
      dgamma[c] = static_cast<T>(sdyx);
    }
    bn.gamma.accumulate(dgamma);
    bn.beta.accumulate(dbeta);
  }
  reducer.allreduce(sums);

  Tensor5<T> dx(s);
  for (std::size_t c = 0; c < C; ++c) {
    const double scale = static_cast<double>(bn.gamma.value[c]) * fwd.inv_std[c];
    const double mean_dy = sums[c] / fwd.count;
    const double mean_dyx = sums[C + c] / fwd.count;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto g = dy.channel(n, c);
      auto xh = fwd.normalized.channel(n, c);
      auto out = dx.channel(n, c);
      for (std::size_t i = 0; i < g.size(); ++i)
        out[i] = static_cast<T>(scale * (static_cast<double>(g[i]) - mean_dy - static_cast<double>(xh[i]) * mean_dyx));
    }
  }
  return dx;
}

}  // namespace vseg
