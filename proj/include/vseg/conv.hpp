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

// Same-padded 3D convolution kernels.
//
// Two forward paths exist. The direct path is a plain loop nest and serves as
// the reference. The fast path zero-pads each input channel once and treats
// the padded volume as a flat array: output voxel (z, y, x) sits at flat
// position z*plane + y*wp + x, and tap (kd, kh, kw) reads the input at that
// position plus a constant offset. A whole channel then becomes a single long
// 1D correlation with k^3 offsets, vectorized across positions and
// register-blocked over output channels. Positions falling in the padding
// are computed and discarded.
//
// Both paths accumulate each output as
//   acc = bias; for ci, kd, kh, kw: acc = fma(w, x, acc)
// with padded taps reading an explicit zero, so they agree bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/simd.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

enum class ConvAlgo { Direct, Fast };

namespace detail {

struct ConvGeometry {
  std::size_t d, h, w, k, pad;
  std::size_t dp, hp, wp;
  std::size_t plane;     // hp * wp
  std::size_t channel;   // dp * plane
  std::size_t span;      // flat positions covering every valid output voxel
  std::vector<std::size_t> offsets;

  ConvGeometry(const Shape5& s, std::size_t kernel)
      : d(s.d), h(s.h), w(s.w), k(kernel), pad((kernel - 1) / 2) {
    dp = d + 2 * pad;
    hp = h + 2 * pad;
    wp = w + 2 * pad;
    plane = hp * wp;
    channel = dp * plane;
    span = (d - 1) * plane + (h - 1) * wp + w;
    offsets.reserve(k * k * k);
    for (std::size_t kd = 0; kd < k; ++kd)
      for (std::size_t kh = 0; kh < k; ++kh)
        for (std::size_t kw = 0; kw < k; ++kw) offsets.push_back(kd * plane + kh * wp + kw);
  }

  std::size_t taps() const noexcept { return offsets.size(); }
  std::size_t flat(std::size_t z, std::size_t y, std::size_t x) const noexcept { return z * plane + y * wp + x; }
};

inline std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

/// Writes channels [0, C) of sample n into `dst` as zero-padded flat volumes.
template <class T>
void pad_sample(const Tensor5<T>& src, std::size_t n, const ConvGeometry& g, T* dst) {
  const Shape5& s = src.shape();
  for (std::size_t c = 0; c < s.c; ++c) {
    T* base = dst + c * g.channel;
    std::fill(base, base + g.channel, T{});
    const T* in = src.channel(n, c).data();
    for (std::size_t z = 0; z < s.d; ++z)
      for (std::size_t y = 0; y < s.h; ++y)
        std::memcpy(base + (z + g.pad) * g.plane + (y + g.pad) * g.wp + g.pad, in + (z * s.h + y) * s.w,
                    s.w * sizeof(T));
  }
}

constexpr std::size_t kChannelBlock = 8;  // output channels held in registers
constexpr std::size_t kVectorBlock = 3;   // vectors per output channel
constexpr std::size_t kInputBlock = 8;    // input channels per pass over a tile

/// out[j][i] = bias[j] + sum_ci sum_t w[ci][t][j] * in[ci][i + off[t]] for the
/// CB output channels of one block, i in [0, out_len).
template <class T, std::size_t CB>
void correlate_block(const T* in, std::size_t in_channels, std::size_t channel_stride,
                     const std::vector<std::size_t>& offsets, const T* packed, const T* bias, T* out,
                     std::size_t out_len) {
  using P = simd::Pack<T>;
  using reg = typename P::reg;
  constexpr std::size_t NV = kVectorBlock;
  constexpr std::size_t step = NV * P::lanes;
  const std::size_t taps = offsets.size();
  const std::size_t* off = offsets.data();

  for (std::size_t c0 = 0; c0 < in_channels; c0 += kInputBlock) {
    const std::size_t c1 = std::min(in_channels, c0 + kInputBlock);
    for (std::size_t i = 0; i < out_len; i += step) {
      reg acc[CB][NV];
      for (std::size_t j = 0; j < CB; ++j)
        for (std::size_t v = 0; v < NV; ++v)
          acc[j][v] = c0 == 0 ? P::set1(bias[j]) : P::load(out + j * out_len + i + v * P::lanes);
      for (std::size_t ci = c0; ci < c1; ++ci) {
        const T* src = in + ci * channel_stride + i;
        const T* wq = packed + ci * taps * CB;
        for (std::size_t t = 0; t < taps; ++t) {
          reg a[NV];
          for (std::size_t v = 0; v < NV; ++v) a[v] = P::load(src + off[t] + v * P::lanes);
          for (std::size_t j = 0; j < CB; ++j) {
            const reg wb = P::set1(wq[t * CB + j]);
            for (std::size_t v = 0; v < NV; ++v) acc[j][v] = P::fma(wb, a[v], acc[j][v]);
          }
        }
      }
      for (std::size_t j = 0; j < CB; ++j)
        for (std::size_t v = 0; v < NV; ++v) P::store(out + j * out_len + i + v * P::lanes, acc[j][v]);
    }
  }
}

template <class T>
void correlate_dispatch(std::size_t cb, const T* in, std::size_t in_channels, std::size_t channel_stride,
                        const std::vector<std::size_t>& offsets, const T* packed, const T* bias, T* out,
                        std::size_t out_len) {
  switch (cb) {
#define VSEG_CORRELATE_CASE(N) \
  case N:                      \
    return correlate_block<T, N>(in, in_channels, channel_stride, offsets, packed, bias, out, out_len);
    VSEG_CORRELATE_CASE(1)
    VSEG_CORRELATE_CASE(2)
    VSEG_CORRELATE_CASE(3)
    VSEG_CORRELATE_CASE(4)
    VSEG_CORRELATE_CASE(5)
    VSEG_CORRELATE_CASE(6)
    VSEG_CORRELATE_CASE(7)
    VSEG_CORRELATE_CASE(8)
#undef VSEG_CORRELATE_CASE
    default:
      throw ContractError("correlate_dispatch: invalid channel block");
  }
}

/// Multi-channel same-padded correlation of every sample in `in`.
/// `weight_at(oc, ic, t)` supplies the coefficient of tap t.
template <class T, class WeightAt>
Tensor5<T> correlate(const Tensor5<T>& in, std::size_t out_channels, std::size_t kernel, WeightAt weight_at,
                     const std::vector<T>& bias) {
  const Shape5 s = in.shape();
  const ConvGeometry g(s, kernel);
  const std::size_t taps = g.taps();
  const std::size_t step = kVectorBlock * simd::Pack<T>::lanes;
  const std::size_t out_len = round_up(g.span, step);

  // Packed coefficients: [block][ic][t][j] with j the channel within the block.
  std::vector<T> packed(out_channels * s.c * taps);
  for (std::size_t co0 = 0; co0 < out_channels; co0 += kChannelBlock) {
    const std::size_t cb = std::min(kChannelBlock, out_channels - co0);
    T* base = packed.data() + co0 * s.c * taps;
    for (std::size_t ic = 0; ic < s.c; ++ic)
      for (std::size_t t = 0; t < taps; ++t)
        for (std::size_t j = 0; j < cb; ++j) base[(ic * taps + t) * cb + j] = weight_at(co0 + j, ic, t);
  }

  Tensor5<T> out(Shape5{s.n, out_channels, s.d, s.h, s.w});
  std::vector<T> padded(s.c * g.channel + step + simd::Pack<T>::lanes);
  std::vector<T> flat(kChannelBlock * out_len);
  for (std::size_t n = 0; n < s.n; ++n) {
    pad_sample(in, n, g, padded.data());
    for (std::size_t co0 = 0; co0 < out_channels; co0 += kChannelBlock) {
      const std::size_t cb = std::min(kChannelBlock, out_channels - co0);
      correlate_dispatch<T>(cb, padded.data(), s.c, g.channel, g.offsets, packed.data() + co0 * s.c * taps,
                            bias.data() + co0, flat.data(), out_len);
      for (std::size_t j = 0; j < cb; ++j) {
        T* dst = out.channel(n, co0 + j).data();
        const T* src = flat.data() + j * out_len;
        for (std::size_t z = 0; z < s.d; ++z)
          for (std::size_t y = 0; y < s.h; ++y)
            std::memcpy(dst + (z * s.h + y) * s.w, src + g.flat(z, y, 0), s.w * sizeof(T));
      }
    }
  }
  return out;
}

/// Weight-gradient micro-kernel for one input channel and one vector of
/// output channels, covering ROWS kernel rows of KW adjacent taps each:
///   acc[r][j][lane] = sum_p g[p][lane] * row_r[p + j],  then out[r * KW + j] += acc.
/// `g` holds the output gradient position-major with stride `g_stride`.
template <class T, std::size_t ROWS, std::size_t KW>
void broadcast_taps(const T* g, std::size_t g_stride, const T* x, const std::size_t* row_off, std::size_t count,
                    T* out, std::size_t out_stride) {
  using P = simd::Pack<T>;
  using reg = typename P::reg;
  const T* row[ROWS];
  reg acc[ROWS][KW];
#pragma GCC unroll 32
  for (std::size_t r = 0; r < ROWS; ++r) {
    row[r] = x + row_off[r];
#pragma GCC unroll 8
    for (std::size_t j = 0; j < KW; ++j) acc[r][j] = P::zero();
  }
  for (std::size_t p = 0; p < count; ++p) {
    const reg gv = P::load(g + p * g_stride);
#pragma GCC unroll 32
    for (std::size_t r = 0; r < ROWS; ++r)
#pragma GCC unroll 8
      for (std::size_t j = 0; j < KW; ++j) acc[r][j] = P::fma(gv, P::set1(row[r][p + j]), acc[r][j]);
  }
#pragma GCC unroll 32
  for (std::size_t r = 0; r < ROWS; ++r)
#pragma GCC unroll 8
    for (std::size_t j = 0; j < KW; ++j) {
      T* o = out + (r * KW + j) * out_stride;
      P::store(o, P::add(P::load(o), acc[r][j]));
    }
}

/// Runs the micro-kernel over every tap of a k^3 kernel; taps are ordered
/// (kd, kh, kw) so kernel row r covers taps [r * k, r * k + k).
template <class T>
void broadcast_all_taps(std::size_t k, const T* g, std::size_t g_stride, const T* x, const std::size_t* row_off,
                        std::size_t count, T* out, std::size_t out_stride) {
  const std::size_t rows = k * k;
  switch (k) {
    case 1:
      return broadcast_taps<T, 1, 1>(g, g_stride, x, row_off, count, out, out_stride);
    case 3:
      return broadcast_taps<T, 9, 3>(g, g_stride, x, row_off, count, out, out_stride);
    case 5:
      for (std::size_t r = 0; r < rows; r += 5)
        broadcast_taps<T, 5, 5>(g, g_stride, x, row_off + r, count, out + r * 5 * out_stride, out_stride);
      return;
    default:
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t off = row_off[r] + j;
          broadcast_taps<T, 1, 1>(g, g_stride, x, &off, count, out + (r * k + j) * out_stride, out_stride);
        }
  }
}

inline void check_conv(const Shape5& in, const Shape5& weight, const Shape5& bias) {
  if (weight.d != weight.h || weight.d != weight.w)
    throw ContractError("conv3d: kernel must be cubic, got " + weight.str());
  if (weight.d % 2 == 0)
    throw ContractError("conv3d: same padding needs an odd kernel, got size " + std::to_string(weight.d));
  if (in.c != weight.c)
    throw ContractError("conv3d: input has " + std::to_string(in.c) + " channels, kernel expects " +
                        std::to_string(weight.c) + " (input " + in.str() + ", kernel " + weight.str() + ")");
  if (bias.size() != weight.n)
    throw ContractError("conv3d: bias length " + std::to_string(bias.size()) + " != output channels " +
                        std::to_string(weight.n));
}

}  // namespace detail

/// Reference loop nest. Slow; used to validate the fast path.
template <class T>
Tensor5<T> conv3d_direct(const Tensor5<T>& input, const Tensor5<T>& weight, const Tensor5<T>& bias) {
  const Shape5 s = input.shape();
  detail::check_conv(s, weight.shape(), bias.shape());
  const std::size_t k = weight.shape().d;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::size_t co_count = weight.shape().n;
  Tensor5<T> out(Shape5{s.n, co_count, s.d, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < co_count; ++co)
      for (std::size_t z = 0; z < s.d; ++z)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) {
            T acc = bias[co];
            for (std::size_t ci = 0; ci < s.c; ++ci)
              for (std::size_t kd = 0; kd < k; ++kd)
                for (std::size_t kh = 0; kh < k; ++kh)
                  for (std::size_t kw = 0; kw < k; ++kw) {
                    const std::ptrdiff_t zz = static_cast<std::ptrdiff_t>(z + kd) - pad;
                    const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + kh) - pad;
                    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + kw) - pad;
                    const bool inside = zz >= 0 && yy >= 0 && xx >= 0 && zz < static_cast<std::ptrdiff_t>(s.d) &&
                                        yy < static_cast<std::ptrdiff_t>(s.h) && xx < static_cast<std::ptrdiff_t>(s.w);
                    const T v = inside ? input.at(n, ci, zz, yy, xx) : T{};
                    acc = std::fma(weight.at(co, ci, kd, kh, kw), v, acc);
                  }
            out.at(n, co, z, y, x) = acc;
          }
  return out;
}

template <class T>
Tensor5<T> conv3d_fast(const Tensor5<T>& input, const Tensor5<T>& weight, const Tensor5<T>& bias) {
  detail::check_conv(input.shape(), weight.shape(), bias.shape());
  const std::size_t k = weight.shape().d;
  const std::size_t taps = k * k * k;
  const std::size_t ci_count = weight.shape().c;
  const T* w = weight.data();
  std::vector<T> b(bias.data(), bias.data() + bias.size());
  return detail::correlate(
      input, weight.shape().n, k, [&](std::size_t oc, std::size_t ic, std::size_t t) { return w[(oc * ci_count + ic) * taps + t]; },
      b);
}

template <class T>
Tensor5<T> conv3d_forward(const Tensor5<T>& input, const Tensor5<T>& weight, const Tensor5<T>& bias,
                          ConvAlgo algo = ConvAlgo::Fast) {
  return algo == ConvAlgo::Direct ? conv3d_direct(input, weight, bias) : conv3d_fast(input, weight, bias);
}

/// Gradient with respect to the input: a correlation of the output gradient
/// with the spatially flipped, channel-transposed kernel.
template <class T>
Tensor5<T> conv3d_backward_input(const Tensor5<T>& grad_out, const Tensor5<T>& weight) {
  const std::size_t k = weight.shape().d;
  const std::size_t taps = k * k * k;
  const std::size_t co_count = weight.shape().n;
  const std::size_t ci_count = weight.shape().c;
  require(grad_out.shape().c == co_count, "conv3d backward: gradient channels do not match kernel outputs");
  const T* w = weight.data();
  std::vector<T> zero(ci_count + detail::kChannelBlock, T{});
  return detail::correlate(
      grad_out, ci_count, k,
      [&](std::size_t ci, std::size_t co, std::size_t t) { return w[(co * ci_count + ci) * taps + (taps - 1 - t)]; },
      zero);
}

/// Accumulates weight and bias gradients one sample at a time, so a batch
/// gradient equals the in-order sum of its per-sample gradients.
template <class T>
void conv3d_backward_params(const Tensor5<T>& input, const Tensor5<T>& grad_out, Parameter<T>& weight,
                            Parameter<T>& bias) {
  using P = simd::Pack<T>;
  const Shape5 s = input.shape();
  const std::size_t k = weight.value.shape().d;
  const detail::ConvGeometry g(s, k);
  const std::size_t taps = g.taps();
  const std::size_t co_count = weight.value.shape().n;
  const std::size_t co_pad = detail::round_up(co_count, P::lanes);
  require(grad_out.shape() == Shape5{s.n, co_count, s.d, s.h, s.w}, "conv3d backward: gradient shape mismatch");

  std::vector<T> padded(s.c * g.channel + P::lanes);
  std::vector<T> rows(s.w * co_pad);          // gradient of one output row, position-major
  std::vector<T> acc(s.c * taps * co_pad);    // [ci][t][co]
  std::vector<T> dw(co_count * s.c * taps);
  std::vector<T> db(co_count);
  std::vector<std::size_t> row_off;
  for (std::size_t t = 0; t < taps; t += k) row_off.push_back(g.offsets[t]);
  for (std::size_t n = 0; n < s.n; ++n) {
    detail::pad_sample(input, n, g, padded.data());
    for (std::size_t co = 0; co < co_count; ++co) {
      double sum = 0.0;
      for (T v : grad_out.channel(n, co)) sum += static_cast<double>(v);
      db[co] = static_cast<T>(sum);
    }
    std::fill(acc.begin(), acc.end(), T{});
    for (std::size_t z = 0; z < s.d; ++z)
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t co = 0; co < co_count; ++co) {
          const T* src = grad_out.channel(n, co).data() + (z * s.h + y) * s.w;
          for (std::size_t x = 0; x < s.w; ++x) rows[x * co_pad + co] = src[x];
        }
        const std::size_t base = g.flat(z, y, 0);
        for (std::size_t ci = 0; ci < s.c; ++ci) {
          const T* xv = padded.data() + ci * g.channel + base;
          for (std::size_t cv = 0; cv < co_pad; cv += P::lanes) {
            T* out = acc.data() + ci * taps * co_pad + cv;
            detail::broadcast_all_taps<T>(k, rows.data() + cv, co_pad, xv, row_off.data(), s.w, out, co_pad);
          }
        }
      }
    for (std::size_t co = 0; co < co_count; ++co)
      for (std::size_t ci = 0; ci < s.c; ++ci)
        for (std::size_t t = 0; t < taps; ++t) dw[(co * s.c + ci) * taps + t] = acc[(ci * taps + t) * co_pad + co];
    weight.accumulate(dw);
    bias.accumulate(db);
  }
}

}  // namespace vseg
