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

// Differentiable operators recorded on a Tape.

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>

#include "vseg/batchnorm.hpp"
#include "vseg/conv.hpp"
#include "vseg/pool.hpp"
#include "vseg/tape.hpp"

namespace vseg {

enum class Mode { Train, Infer };

/// Convolution weights (c_out, c_in, k, k, k) and bias (c_out).
template <class T>
struct ConvLayer {
  Parameter<T> weight;
  Parameter<T> bias;

  ConvLayer() = default;
  ConvLayer(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
      : weight(name + ".weight", Tensor5<T>(Shape5{out_channels, in_channels, kernel, kernel, kernel})),
        bias(name + ".bias", Tensor5<T>(Shape5{1, out_channels, 1, 1, 1})) {
    if (kernel % 2 == 0)
      throw ContractError("conv layer '" + name + "': same padding needs an odd kernel, got " + std::to_string(kernel));
  }

  std::size_t in_channels() const noexcept { return weight.value.shape().c; }
  std::size_t out_channels() const noexcept { return weight.value.shape().n; }
  std::size_t kernel() const noexcept { return weight.value.shape().d; }
  std::size_t fan_in() const noexcept { return in_channels() * kernel() * kernel() * kernel(); }

  /// He initialization: N(0, 2 / fan_in) weights, zero bias.
  template <class Gen>
  void init(Gen& gen) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in())));
    for (T& v : weight.value.values()) v = static_cast<T>(dist(gen));
    bias.value.fill(T{});
  }
};

template <class T>
Var conv3d(Tape<T>& tape, Var x, ConvLayer<T>& layer, ConvAlgo algo = ConvAlgo::Fast) {
  Tensor5<T> out = conv3d_forward(tape.value(x), layer.weight.value, layer.bias.value, algo);
  ConvLayer<T>* l = &layer;
  return tape.record("conv3d", {x}, std::move(out), true, [x, l](Tape<T>& t, std::size_t self) {
    const Tensor5<T>& g = t.grad(Var{self});
    conv3d_backward_params(t.value(x), g, l->weight, l->bias);
    if (t.requires_grad(x)) t.accumulate_grad(x, conv3d_backward_input(g, l->weight.value));
  });
}

template <class T>
Var maxpool3d(Tape<T>& tape, Var x) {
  auto r = std::make_shared<PoolResult<T>>(maxpool3d_forward(tape.value(x)));
  Tensor5<T> out = r->out;
  const Shape5 in_shape = tape.value(x).shape();
  r->out = Tensor5<T>();
  return tape.record("maxpool3d", {x}, std::move(out), tape.requires_grad(x),
                     [x, r, in_shape](Tape<T>& t, std::size_t self) {
                       t.accumulate_grad(x, maxpool3d_backward(t.grad(Var{self}), r->argmax, in_shape));
                     });
}

template <class T>
Var upsample_nearest2x(Tape<T>& tape, Var x) {
  return tape.record("upsample2x", {x}, upsample_nearest2x_forward(tape.value(x)), tape.requires_grad(x),
                     [x](Tape<T>& t, std::size_t self) {
                       t.accumulate_grad(x, upsample_nearest2x_backward(t.grad(Var{self})));
                     });
}

template <class T>
Var batchnorm(Tape<T>& tape, Var x, BatchNorm<T>& bn, Mode mode) {
  BatchNorm<T>* b = &bn;
  if (mode == Mode::Infer) {
    // Running statistics are constants; gradients still reach x, gamma, beta.
    Tensor5<T> out = batchnorm_infer(tape.value(x), bn);
    return tape.record("batchnorm_infer", {x}, std::move(out), true, [x, b](Tape<T>& t, std::size_t self) {
      const Tensor5<T>& g = t.grad(Var{self});
      const Tensor5<T>& in = t.value(x);
      const Shape5 s = g.shape();
      Tensor5<T> dx(s);
      std::vector<T> dgamma(s.c), dbeta(s.c);
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const double inv = 1.0 / std::sqrt(static_cast<double>(b->running_var[c]) + b->epsilon);
          const double scale = static_cast<double>(b->gamma.value[c]) * inv;
          auto gc = g.channel(n, c);
          auto xc = in.channel(n, c);
          auto dc = dx.channel(n, c);
          double sg = 0.0, sgx = 0.0;
          for (std::size_t i = 0; i < gc.size(); ++i) {
            dc[i] = static_cast<T>(static_cast<double>(gc[i]) * scale);
            sg += static_cast<double>(gc[i]);
            sgx += static_cast<double>(gc[i]) * (static_cast<double>(xc[i]) - static_cast<double>(b->running_mean[c])) * inv;
          }
          dgamma[c] = static_cast<T>(sgx);
          dbeta[c] = static_cast<T>(sg);
        }
        b->gamma.accumulate(dgamma);
        b->beta.accumulate(dbeta);
      }
      if (t.requires_grad(x)) t.accumulate_grad(x, dx);
    });
  }
  auto fwd = std::make_shared<BnTrainResult<T>>(batchnorm_train_forward(tape.value(x), bn, tape.reducer()));
  bn.update_running(fwd->mean, fwd->var);
  Tensor5<T> out = std::move(fwd->out);
  fwd->out = Tensor5<T>();
  return tape.record("batchnorm", {x}, std::move(out), true, [x, b, fwd](Tape<T>& t, std::size_t self) {
    Tensor5<T> dx = batchnorm_backward(t.grad(Var{self}), *fwd, *b, t.reducer());
    if (t.requires_grad(x)) t.accumulate_grad(x, dx);
  });
}

template <class T>
Tensor5<T> relu_forward(const Tensor5<T>& x) {
  Tensor5<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{} ? x[i] : T{};
  return out;
}

/// Logistic function clamped to the open interval (0, 1).
template <class T>
Tensor5<T> sigmoid_forward(const Tensor5<T>& x) {
  constexpr T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T{1}, T{0});
  Tensor5<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    T s;
    if (v >= T{}) {
      s = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      s = e / (T{1} + e);
    }
    out[i] = std::clamp(s, lo, hi);
  }
  return out;
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  return tape.record("relu", {x}, relu_forward(tape.value(x)), tape.requires_grad(x),
                     [x](Tape<T>& t, std::size_t self) {
                       const Tensor5<T>& g = t.grad(Var{self});
                       const Tensor5<T>& in = t.value(x);
                       Tensor5<T> dx(g.shape());
                       for (std::size_t i = 0; i < g.size(); ++i) dx[i] = in[i] > T{} ? g[i] : T{};
                       t.accumulate_grad(x, dx);
                     });
}

template <class T>
Var sigmoid(Tape<T>& tape, Var x) {
  return tape.record("sigmoid", {x}, sigmoid_forward(tape.value(x)), tape.requires_grad(x),
                     [x](Tape<T>& t, std::size_t self) {
                       const Tensor5<T>& g = t.grad(Var{self});
                       const Tensor5<T>& y = t.value(Var{self});
                       Tensor5<T> dx(g.shape());
                       for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * y[i] * (T{1} - y[i]);
                       t.accumulate_grad(x, dx);
                     });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor5<T>& va = tape.value(a);
  const Tensor5<T>& vb = tape.value(b);
  if (va.shape() != vb.shape())
    throw ContractError("add: shape mismatch " + va.shape().str() + " vs " + vb.shape().str());
  Tensor5<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return tape.record("add", {a, b}, std::move(out), tape.requires_grad(a) || tape.requires_grad(b),
                     [a, b](Tape<T>& t, std::size_t self) {
                       const Tensor5<T>& g = t.grad(Var{self});
                       if (t.requires_grad(a)) t.accumulate_grad(a, g);
                       if (t.requires_grad(b)) t.accumulate_grad(b, g);
                     });
}

template <class T>
Tensor5<T> concat_channels_forward(const Tensor5<T>& a, const Tensor5<T>& b) {
  const Shape5 sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || !sa.same_spatial(sb))
    throw ContractError("concat_channels: shape mismatch " + sa.str() + " vs " + sb.str());
  Tensor5<T> out(Shape5{sa.n, sa.c + sb.c, sa.d, sa.h, sa.w});
  for (std::size_t n = 0; n < sa.n; ++n) {
    auto sa_n = a.sample(n);
    auto sb_n = b.sample(n);
    T* dst = out.data() + n * (sa.c + sb.c) * sa.voxels();
    std::copy(sa_n.begin(), sa_n.end(), dst);
    std::copy(sb_n.begin(), sb_n.end(), dst + sa_n.size());
  }
  return out;
}

/// Channel concatenation; a's channels come first.
template <class T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Shape5 sa = tape.value(a).shape();
  const Shape5 sb = tape.value(b).shape();
  return tape.record("concat", {a, b}, concat_channels_forward(tape.value(a), tape.value(b)),
                     tape.requires_grad(a) || tape.requires_grad(b), [a, b, sa, sb](Tape<T>& t, std::size_t self) {
                       const Tensor5<T>& g = t.grad(Var{self});
                       const std::size_t va = sa.c * sa.voxels(), vb = sb.c * sb.voxels();
                       Tensor5<T> ga(sa), gb(sb);
                       for (std::size_t n = 0; n < sa.n; ++n) {
                         const T* src = g.data() + n * (va + vb);
                         std::copy(src, src + va, ga.data() + n * va);
                         std::copy(src + va, src + va + vb, gb.data() + n * vb);
                       }
                       if (t.requires_grad(a)) t.accumulate_grad(a, ga);
                       if (t.requires_grad(b)) t.accumulate_grad(b, gb);
                     });
}

/// Sum of all elements as a 1x1x1x1x1 tensor.
template <class T>
Var sum(Tape<T>& tape, Var x) {
  T acc{};
  for (T v : tape.value(x).values()) acc += v;
  const Shape5 s = tape.value(x).shape();
  return tape.record("sum", {x}, Tensor5<T>::scalar(acc), tape.requires_grad(x), [x, s](Tape<T>& t, std::size_t self) {
    t.accumulate_grad(x, Tensor5<T>(s, t.grad(Var{self})[0]));
  });
}

/// Weighted sum sum_i w_i x_i with constant weights; a scalar probe for
/// gradient checks.
template <class T>
Var dot_const(Tape<T>& tape, Var x, const Tensor5<T>& weights) {
  const Tensor5<T>& v = tape.value(x);
  require(v.shape() == weights.shape(), "dot_const: shape mismatch " + v.shape().str() + " vs " + weights.shape().str());
  T acc{};
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * weights[i];
  return tape.record("dot_const", {x}, Tensor5<T>::scalar(acc), tape.requires_grad(x),
                     [x, weights](Tape<T>& t, std::size_t self) {
                       Tensor5<T> g = weights;
                       const T s = t.grad(Var{self})[0];
                       for (T& e : g.values()) e *= s;
                       t.accumulate_grad(x, g);
                     });
}

}  // namespace vseg
