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

// Synthetic abdominal-style phantoms: an elongated target blob built from
// overlapping ellipsoids, two distractor blobs of different contrast, and
// Gaussian noise on a flat background.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

using Vec3 = std::array<double, 3>;

struct Ellipsoid {
  Vec3 center{};
  Vec3 radii{1.0, 1.0, 1.0};
  std::array<Vec3, 3> axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};  // orthonormal, one per radius

  /// Voxel (z, y, x) lies inside when sum_k ((axes[k] . (p - c)) / r_k)^2 <= 1.
  bool contains(double z, double y, double x) const noexcept {
    const Vec3 d{z - center[0], y - center[1], x - center[2]};
    double q = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double proj = axes[k][0] * d[0] + axes[k][1] * d[1] + axes[k][2] * d[2];
      q += (proj / radii[k]) * (proj / radii[k]);
    }
    return q <= 1.0;
  }

  /// Half-width of the axis-aligned bounding box along `axis`.
  double half_extent(int axis) const noexcept {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (axes[k][axis] * radii[k]) * (axes[k][axis] * radii[k]);
    return std::sqrt(s);
  }
};

struct PhantomParams {
  double base = 0.3;
  double contrast = 0.3;  // target blob above background
  double noise = 0.1;     // Gaussian sigma
  std::array<double, 2> distractor_contrast{0.6, -0.3};
  double min_fraction = 0.015;
  double max_fraction = 0.04;
  double center_jitter = 0.125;  // fraction of the size
};

struct Phantom {
  ImageVolume image;
  LabelVolume label;
  std::vector<Ellipsoid> target;
  std::vector<Ellipsoid> distractors;
};

namespace detail {

inline Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline bool any_contains(const std::vector<Ellipsoid>& es, double z, double y, double x) {
  for (const Ellipsoid& e : es)
    if (e.contains(z, y, x)) return true;
  return false;
}

inline std::size_t count_inside(const std::vector<Ellipsoid>& es, std::size_t size) {
  std::size_t count = 0;
  for (std::size_t z = 0; z < size; ++z)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) count += any_contains(es, double(z), double(y), double(x));
  return count;
}

}  // namespace detail

/// Fully determined by (seed, size, params). The label is the union of the
/// target ellipsoids evaluated at voxel centres; distractors never enter it.
inline Phantom generate_phantom(std::uint64_t seed, std::size_t size, const PhantomParams& params = {}) {
  if (size < 16) throw ContractError("phantom: size " + std::to_string(size) + " is below the minimum of 16");
  Rng rng = make_rng(seed, {streams::kPhantom});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double S = static_cast<double>(size);

  // Chain of ellipsoids along a random direction.
  const int count = 2 + static_cast<int>(rng() % 3);
  const Vec3 dir = detail::normalized({gauss(rng), gauss(rng), gauss(rng)});
  std::vector<Ellipsoid> shape;
  std::vector<Vec3> offsets;
  for (int k = 0; k < count; ++k) {
    Ellipsoid e;
    e.radii = {std::max(uniform(0.10, 0.16) * S, 2.5), std::max(uniform(0.05, 0.08) * S, 1.5),
               std::max(uniform(0.05, 0.08) * S, 1.5)};
    const Vec3 a0 = detail::normalized(
        {dir[0] + 0.3 * gauss(rng), dir[1] + 0.3 * gauss(rng), dir[2] + 0.3 * gauss(rng)});
    Vec3 helper = std::abs(a0[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 b0 = detail::normalized(detail::cross(a0, helper));
    const Vec3 c0 = detail::cross(a0, b0);
    const double phi = uniform(0.0, 2.0 * 3.14159265358979323846);
    const Vec3 a1{std::cos(phi) * b0[0] + std::sin(phi) * c0[0], std::cos(phi) * b0[1] + std::sin(phi) * c0[1],
                  std::cos(phi) * b0[2] + std::sin(phi) * c0[2]};
    e.axes = {a0, a1, detail::cross(a0, a1)};
    const double along = (k - (count - 1) / 2.0) * uniform(0.6, 0.9) * e.radii[0];
    offsets.push_back({along * dir[0] + 0.02 * S * gauss(rng), along * dir[1] + 0.02 * S * gauss(rng),
                       along * dir[2] + 0.02 * S * gauss(rng)});
    shape.push_back(e);
  }

  // Rescale towards a sampled foreground fraction; evaluated at the centre.
  // Chains too long for the volume are compressed and rescaled.
  const double target_fraction = uniform(params.min_fraction, params.max_fraction);
  const double mid = (S - 1.0) / 2.0;
  auto place = [&](double scale, const Vec3& centre) {
    std::vector<Ellipsoid> out = shape;
    for (std::size_t k = 0; k < out.size(); ++k) {
      for (int a = 0; a < 3; ++a) {
        out[k].radii[a] = shape[k].radii[a] * scale;
        out[k].center[a] = centre[a] + offsets[k][a] * scale;
      }
    }
    return out;
  };
  auto span = [](const std::vector<Ellipsoid>& es, int a) {
    double lo = 1e300, hi = -1e300;
    for (const Ellipsoid& e : es) {
      lo = std::min(lo, e.center[a] - e.half_extent(a));
      hi = std::max(hi, e.center[a] + e.half_extent(a));
    }
    return std::pair{lo, hi};
  };
  double scale = 1.0;
  for (int attempt = 0;; ++attempt) {
    for (int iter = 0; iter < 8; ++iter) {
      const double f = static_cast<double>(detail::count_inside(place(scale, {mid, mid, mid}), size)) / (S * S * S);
      if (f > 0.0 && std::abs(f - target_fraction) < 0.05 * target_fraction) break;
      scale *= f > 0.0 ? std::cbrt(target_fraction / f) : 1.5;
    }
    const auto placed = place(scale, {mid, mid, mid});
    bool fits = true;
    for (int a = 0; a < 3; ++a) {
      const auto [lo, hi] = span(placed, a);
      fits = fits && hi - lo <= S - 5.0;
    }
    if (fits) break;
    if (attempt == 12) throw ContractError("phantom: target blob does not fit in a volume of size " + std::to_string(size));
    for (std::size_t k = 0; k < shape.size(); ++k) {
      for (double& o : offsets[k]) o *= 0.8;
      shape[k].radii[0] = std::max(0.85 * shape[k].radii[0], shape[k].radii[1]);
    }
  }
  for (const Ellipsoid& e : place(scale, {mid, mid, mid}))
    for (double r : e.radii)
      if (r < 1.0) throw ContractError("phantom: size " + std::to_string(size) + " too small for the minimum radius");

  // Jitter the centre, then shift so the blob keeps a 2-voxel border.
  Vec3 centre{mid + uniform(-1.0, 1.0) * params.center_jitter * S, mid + uniform(-1.0, 1.0) * params.center_jitter * S,
              mid + uniform(-1.0, 1.0) * params.center_jitter * S};
  std::vector<Ellipsoid> target = place(scale, centre);
  for (int a = 0; a < 3; ++a) {
    const auto [lo, hi] = span(target, a);
    double shift = 0.0;
    if (lo < 2.0) shift = 2.0 - lo;
    if (hi > S - 3.0) shift = (S - 3.0) - hi;
    for (Ellipsoid& e : target) e.center[a] += shift;
  }

  Phantom ph;
  ph.target = target;
  ph.label = LabelVolume({size, size, size});
  for (std::size_t z = 0; z < size; ++z)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        ph.label.at(z, y, x) = detail::any_contains(target, double(z), double(y), double(x)) ? 1 : 0;

  // Distractors: spheroids at least 2 voxels away from every label voxel and
  // from each other. The radius shrinks if no free spot turns up.
  auto clear_of_label = [&](const Vec3& p, double r) {
    const double reach = r + 2.0;
    const long lo[3] = {long(std::floor(p[0] - reach)), long(std::floor(p[1] - reach)), long(std::floor(p[2] - reach))};
    const long hi[3] = {long(std::ceil(p[0] + reach)), long(std::ceil(p[1] + reach)), long(std::ceil(p[2] + reach))};
    for (long z = std::max(lo[0], 0L); z <= std::min(hi[0], long(size) - 1); ++z)
      for (long y = std::max(lo[1], 0L); y <= std::min(hi[1], long(size) - 1); ++y)
        for (long x = std::max(lo[2], 0L); x <= std::min(hi[2], long(size) - 1); ++x) {
          if (!ph.label.at(z, y, x)) continue;
          const double d2 = (z - p[0]) * (z - p[0]) + (y - p[1]) * (y - p[1]) + (x - p[2]) * (x - p[2]);
          if (d2 <= reach * reach) return false;
        }
    return true;
  };
  for (std::size_t k = 0; k < params.distractor_contrast.size(); ++k) {
    double r = std::max(uniform(0.06, 0.09) * S, 1.5);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 0 && attempt % 100 == 0) r = std::max(0.8 * r, 1.0);
      if (attempt == 1000) throw ContractError("phantom: no room for distractors at size " + std::to_string(size));
      const Vec3 p{uniform(r + 1.0, S - 2.0 - r), uniform(r + 1.0, S - 2.0 - r), uniform(r + 1.0, S - 2.0 - r)};
      bool clear = clear_of_label(p, r);
      for (const Ellipsoid& o : ph.distractors) {
        const double dd = std::sqrt((p[0] - o.center[0]) * (p[0] - o.center[0]) +
                                    (p[1] - o.center[1]) * (p[1] - o.center[1]) +
                                    (p[2] - o.center[2]) * (p[2] - o.center[2]));
        clear = clear && dd > o.radii[0] + r + 1.0;
      }
      if (!clear) continue;
      Ellipsoid e;
      e.center = p;
      e.radii = {r, r * uniform(0.7, 1.0), r * uniform(0.7, 1.0)};
      ph.distractors.push_back(e);
      break;
    }
  }

  ph.image = ImageVolume({size, size, size});
  for (std::size_t z = 0; z < size; ++z)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double v = params.base;
        if (ph.label.at(z, y, x)) {
          v += params.contrast;
        } else {
          for (std::size_t k = 0; k < ph.distractors.size(); ++k)
            if (ph.distractors[k].contains(double(z), double(y), double(x))) v += params.distractor_contrast[k];
        }
        v += params.noise * gauss(rng);
        ph.image.at(z, y, x) = static_cast<float>(v);
      }
  return ph;
}

}  // namespace vseg
