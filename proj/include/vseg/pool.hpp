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

#include <cstddef>
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

template <class T>
struct PoolResult {
  Tensor5<T> out;
  std::vector<std::size_t> argmax;  // flat input index of each output's winner
};

/// 2x2x2 max pooling, stride 2. Ties resolve to the lowest linear index
/// within the block.
template <class T>
PoolResult<T> maxpool3d_forward(const Tensor5<T>& in) {
  const Shape5 s = in.shape();
  const char* axes[] = {"depth", "height", "width"};
  const std::size_t dims[] = {s.d, s.h, s.w};
  for (int a = 0; a < 3; ++a)
    if (dims[a] % 2 != 0)
      throw ContractError(std::string("maxpool3d: ") + axes[a] + " axis has odd size " + std::to_string(dims[a]) +
                          " (input " + s.str() + ")");
  PoolResult<T> r{Tensor5<T>(Shape5{s.n, s.c, s.d / 2, s.h / 2, s.w / 2}), {}};
  r.argmax.resize(r.out.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t z = 0; z < s.d / 2; ++z)
        for (std::size_t y = 0; y < s.h / 2; ++y)
          for (std::size_t x = 0; x < s.w / 2; ++x, ++o) {
            std::size_t best = in.index(n, c, 2 * z, 2 * y, 2 * x);
            for (std::size_t dz = 0; dz < 2; ++dz)
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t i = in.index(n, c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
                  if (in[i] > in[best]) best = i;
                }
            r.out[o] = in[best];
            r.argmax[o] = best;
          }
  return r;
}

template <class T>
Tensor5<T> maxpool3d_backward(const Tensor5<T>& grad_out, const std::vector<std::size_t>& argmax,
                              const Shape5& input_shape) {
  Tensor5<T> g(input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g[argmax[o]] += grad_out[o];
  return g;
}

/// Nearest-neighbour upsampling by 2 on every spatial axis.
template <class T>
Tensor5<T> upsample_nearest2x_forward(const Tensor5<T>& in) {
  const Shape5 s = in.shape();
  Tensor5<T> out(Shape5{s.n, s.c, 2 * s.d, 2 * s.h, 2 * s.w});
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t z = 0; z < 2 * s.d; ++z)
        for (std::size_t y = 0; y < 2 * s.h; ++y) {
          const T* row = &in.at(n, c, z / 2, y / 2, 0);
          for (std::size_t x = 0; x < 2 * s.w; ++x) out[o++] = row[x / 2];
        }
  return out;
}

/// Sums the eight children of each coarse voxel, in linear order.
template <class T>
Tensor5<T> upsample_nearest2x_backward(const Tensor5<T>& grad_out) {
  const Shape5 s = grad_out.shape();
  Tensor5<T> g(Shape5{s.n, s.c, s.d / 2, s.h / 2, s.w / 2});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t z = 0; z < s.d / 2; ++z)
        for (std::size_t y = 0; y < s.h / 2; ++y)
          for (std::size_t x = 0; x < s.w / 2; ++x) {
            T acc{};
            for (std::size_t dz = 0; dz < 2; ++dz)
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) acc += grad_out.at(n, c, 2 * z + dz, 2 * y + dy, 2 * x + dx);
            g.at(n, c, z, y, x) = acc;
          }
  return g;
}

}  // namespace vseg
