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

// Minimal fixed-width vector wrapper used by the convolution kernels. Every
// multiply-add goes through a fused operation so that vector and scalar code
// paths round identically.

#include <cmath>
#include <cstddef>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
#include <immintrin.h>
#endif

namespace vseg::simd {

template <class T>
struct Pack;

#if defined(__AVX512F__)

template <>
struct Pack<float> {
  using reg = __m512;
  static constexpr std::size_t lanes = 16;
  static reg zero() noexcept { return _mm512_setzero_ps(); }
  static reg set1(float v) noexcept { return _mm512_set1_ps(v); }
  static reg load(const float* p) noexcept { return _mm512_loadu_ps(p); }
  static void store(float* p, reg v) noexcept { _mm512_storeu_ps(p, v); }
  static reg fma(reg a, reg b, reg c) noexcept { return _mm512_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) noexcept { return _mm512_add_ps(a, b); }
};

template <>
struct Pack<double> {
  using reg = __m512d;
  static constexpr std::size_t lanes = 8;
  static reg zero() noexcept { return _mm512_setzero_pd(); }
  static reg set1(double v) noexcept { return _mm512_set1_pd(v); }
  static reg load(const double* p) noexcept { return _mm512_loadu_pd(p); }
  static void store(double* p, reg v) noexcept { _mm512_storeu_pd(p, v); }
  static reg fma(reg a, reg b, reg c) noexcept { return _mm512_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) noexcept { return _mm512_add_pd(a, b); }
};

#elif defined(__AVX2__) && defined(__FMA__)

template <>
struct Pack<float> {
  using reg = __m256;
  static constexpr std::size_t lanes = 8;
  static reg zero() noexcept { return _mm256_setzero_ps(); }
  static reg set1(float v) noexcept { return _mm256_set1_ps(v); }
  static reg load(const float* p) noexcept { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) noexcept { _mm256_storeu_ps(p, v); }
  static reg fma(reg a, reg b, reg c) noexcept { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) noexcept { return _mm256_add_ps(a, b); }
};

template <>
struct Pack<double> {
  using reg = __m256d;
  static constexpr std::size_t lanes = 4;
  static reg zero() noexcept { return _mm256_setzero_pd(); }
  static reg set1(double v) noexcept { return _mm256_set1_pd(v); }
  static reg load(const double* p) noexcept { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) noexcept { _mm256_storeu_pd(p, v); }
  static reg fma(reg a, reg b, reg c) noexcept { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) noexcept { return _mm256_add_pd(a, b); }
};

#else

template <class T>
struct Pack {
  using reg = T;
  static constexpr std::size_t lanes = 1;
  static reg zero() noexcept { return T{}; }
  static reg set1(T v) noexcept { return v; }
  static reg load(const T* p) noexcept { return *p; }
  static void store(T* p, reg v) noexcept { *p = v; }
  static reg fma(reg a, reg b, reg c) noexcept { return std::fma(a, b, c); }
  static reg add(reg a, reg b) noexcept { return a + b; }
};

#endif

/// Lane sum in ascending lane order.
template <class T>
T horizontal_sum(typename Pack<T>::reg v) noexcept {
  alignas(64) T lanes[Pack<T>::lanes];
  Pack<T>::store(lanes, v);
  T s{};
  for (std::size_t i = 0; i < Pack<T>::lanes; ++i) s += lanes[i];
  return s;
}

}  // namespace vseg::simd
