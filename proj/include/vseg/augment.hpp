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

// Random affine + cubic B-spline free-form deformation, applied by backward
// warping. For an output voxel p with centre c the source coordinate is
//
//   s(p) = R (p - c) + c - t + B(p)
//
// where R = Rz Ry Rx (angles about the depth, height and width axes), t is the
// translation and B is the B-spline displacement evaluated on the output grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

using Dims3 = std::array<std::size_t, 3>;

struct AugmentParams {
  double max_displacement = 4.0;  // voxels
  double grid_spacing = 24.0;     // voxels between control points
  double rot_range = 20.0;        // degrees, symmetric
  double trans_range = 20.0;      // voxels, symmetric
  std::optional<float> fill_image;  // unset: per-volume minimum
  std::uint8_t fill_label = 0;

  void validate() const {
    if (!(max_displacement >= 0.0)) throw UsageError("augment.max_displacement must be >= 0");
    if (!(grid_spacing >= 2.0)) throw UsageError("augment.grid_spacing must be >= 2");
    if (!(rot_range >= 0.0)) throw UsageError("augment.rot_range must be >= 0");
    if (!(trans_range >= 0.0)) throw UsageError("augment.trans_range must be >= 0");
  }

  static AugmentParams identity() {
    AugmentParams p;
    p.max_displacement = 0.0;
    p.rot_range = 0.0;
    p.trans_range = 0.0;
    return p;
  }
};

/// Control lattice with pitch `spacing`; control point j sits at (j - 1) * spacing.
struct DeformationSpec {
  Dims3 lattice{4, 4, 4};
  double spacing = 24.0;
  std::vector<std::array<double, 3>> control;  // lattice-major (z, y, x)
  std::array<double, 3> angles{};               // degrees about d, h, w
  std::array<double, 3> translation{};          // voxels
  std::uint64_t stream = 0;

  bool operator==(const DeformationSpec&) const = default;
};

struct DisplacementField {
  Dims3 dims{1, 1, 1};
  std::vector<std::array<double, 3>> offset;  // source = p + offset[p]

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return (z * dims[1] + y) * dims[2] + x;
  }
  double sup_norm() const noexcept {
    double m = 0.0;
    for (const auto& o : offset)
      for (double v : o) m = std::max(m, std::abs(v));
    return m;
  }
};

inline std::size_t lattice_points(std::size_t size, double spacing) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(size - 1) / spacing)) + 4;
}

/// Fully determined by (params, dims, stream). Draw order: control points
/// (z, y, x components each), then angles, then translation.
inline DeformationSpec sample_spec(const AugmentParams& params, const Dims3& dims, std::uint64_t stream) {
  params.validate();
  Rng rng(stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sym = [&](double r) { return -r + 2.0 * r * unit(rng); };

  DeformationSpec spec;
  spec.spacing = params.grid_spacing;
  spec.stream = stream;
  for (int a = 0; a < 3; ++a) spec.lattice[a] = lattice_points(dims[a], params.grid_spacing);
  spec.control.resize(spec.lattice[0] * spec.lattice[1] * spec.lattice[2]);
  for (auto& c : spec.control)
    for (double& v : c) v = sym(params.max_displacement);
  for (double& a : spec.angles) a = sym(params.rot_range);
  for (double& t : spec.translation) t = sym(params.trans_range);
  return spec;
}

namespace detail {

inline std::array<double, 4> cubic_bspline_weights(double t) noexcept {
  const double t2 = t * t, t3 = t2 * t, u = 1.0 - t;
  return {u * u * u / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0, (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
}

struct AxisWeights {
  std::vector<std::size_t> first;  // lattice index of the first of 4 supporting points
  std::vector<std::array<double, 4>> w;
};

inline AxisWeights axis_weights(std::size_t size, double spacing, std::size_t points) {
  AxisWeights aw;
  aw.first.resize(size);
  aw.w.resize(size);
  for (std::size_t p = 0; p < size; ++p) {
    const double u = static_cast<double>(p) / spacing;
    const double cell = std::floor(u);
    aw.first[p] = static_cast<std::size_t>(cell);
    aw.w[p] = cubic_bspline_weights(u - cell);
    if (aw.first[p] + 3 >= points) throw ContractError("deformation lattice too small for the volume");
  }
  return aw;
}

using Rot = std::array<std::array<double, 3>, 3>;

inline Rot matmul(const Rot& a, const Rot& b) {
  Rot r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

/// Rotation in (z, y, x) index space; angle a[i] rotates the plane orthogonal to axis i.
inline Rot rotation(const std::array<double, 3>& degrees) {
  constexpr double kPi = 3.14159265358979323846;
  Rot out{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int axis = 2; axis >= 0; --axis) {  // Rz Ry Rx, with x applied first
    const double r = degrees[axis] * kPi / 180.0;
    if (r == 0.0) continue;
    const double c = std::cos(r), s = std::sin(r);
    const int i = (axis + 1) % 3, j = (axis + 2) % 3;
    Rot m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    m[i][i] = c;
    m[i][j] = -s;
    m[j][i] = s;
    m[j][j] = c;
    out = matmul(out, m);
  }
  return out;
}

}  // namespace detail

/// B-spline displacement only, evaluated separably on the output grid.
inline DisplacementField bspline_field(const DeformationSpec& spec, const Dims3& dims) {
  if (spec.control.size() != spec.lattice[0] * spec.lattice[1] * spec.lattice[2])
    throw ContractError("deformation spec: control count does not match lattice");
  const auto wz = detail::axis_weights(dims[0], spec.spacing, spec.lattice[0]);
  const auto wy = detail::axis_weights(dims[1], spec.spacing, spec.lattice[1]);
  const auto wx = detail::axis_weights(dims[2], spec.spacing, spec.lattice[2]);
  const auto [LZ, LY, LX] = spec.lattice;
  const auto [D, H, W] = dims;
  using V3 = std::array<double, 3>;

  std::vector<V3> t1(LZ * LY * W, V3{});  // contract over lattice x
  for (std::size_t a = 0; a < LZ; ++a)
    for (std::size_t b = 0; b < LY; ++b)
      for (std::size_t x = 0; x < W; ++x) {
        V3 acc{};
        for (int k = 0; k < 4; ++k) {
          const V3& c = spec.control[(a * LY + b) * LX + wx.first[x] + k];
          for (int m = 0; m < 3; ++m) acc[m] += wx.w[x][k] * c[m];
        }
        t1[(a * LY + b) * W + x] = acc;
      }
  std::vector<V3> t2(LZ * H * W, V3{});  // then lattice y
  for (std::size_t a = 0; a < LZ; ++a)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        V3 acc{};
        for (int k = 0; k < 4; ++k) {
          const V3& c = t1[(a * LY + wy.first[y] + k) * W + x];
          for (int m = 0; m < 3; ++m) acc[m] += wy.w[y][k] * c[m];
        }
        t2[(a * H + y) * W + x] = acc;
      }
  DisplacementField f;
  f.dims = dims;
  f.offset.assign(D * H * W, V3{});
  for (std::size_t z = 0; z < D; ++z)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        V3 acc{};
        for (int k = 0; k < 4; ++k) {
          const V3& c = t2[((wz.first[z] + k) * H + y) * W + x];
          for (int m = 0; m < 3; ++m) acc[m] += wz.w[z][k] * c[m];
        }
        f.offset[f.index(z, y, x)] = acc;
      }
  return f;
}

/// Dense backward mapping: affine about the volume centre plus B-spline term.
inline DisplacementField realize_field(const DeformationSpec& spec, const Dims3& dims) {
  DisplacementField f = bspline_field(spec, dims);
  const bool rotate = spec.angles != std::array<double, 3>{};
  const detail::Rot R = detail::rotation(spec.angles);
  const std::array<double, 3> c{(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0};
  for (std::size_t z = 0; z < dims[0]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[2]; ++x) {
        const std::array<double, 3> p{double(z), double(y), double(x)};
        auto& o = f.offset[f.index(z, y, x)];
        for (int i = 0; i < 3; ++i) {
          double affine = -spec.translation[i];
          if (rotate) {
            double r = c[i] - p[i];
            for (int j = 0; j < 3; ++j) r += R[i][j] * (p[j] - c[j]);
            affine += r;
          }
          o[i] += affine;
        }
      }
  return f;
}

enum class Interp { Trilinear, Nearest };

template <class T>
Volume<T> warp(const Volume<T>& in, const DisplacementField& field, Interp interp, T fill) {
  if (field.dims != in.dims)
    throw ContractError("warp: field shape " + dims_str(field.dims) + " does not match volume " + dims_str(in.dims));
  Volume<T> out(in.dims, fill, in.spacing);
  const auto [D, H, W] = in.dims;
  const long dims[3] = {long(D), long(H), long(W)};
  auto inside = [&](long z, long y, long x) {
    return z >= 0 && y >= 0 && x >= 0 && z < dims[0] && y < dims[1] && x < dims[2];
  };
  for (std::size_t z = 0; z < D; ++z)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const auto& o = field.offset[field.index(z, y, x)];
        const double s[3] = {double(z) + o[0], double(y) + o[1], double(x) + o[2]};
        T& dst = out.at(z, y, x);
        if (interp == Interp::Nearest) {
          const long n[3] = {long(std::floor(s[0] + 0.5)), long(std::floor(s[1] + 0.5)), long(std::floor(s[2] + 0.5))};
          dst = inside(n[0], n[1], n[2]) ? in.at(n[0], n[1], n[2]) : fill;
          continue;
        }
        long b[3];
        double f[3];
        for (int a = 0; a < 3; ++a) {
          const double fl = std::floor(s[a]);
          b[a] = long(fl);
          f[a] = s[a] - fl;
        }
        double acc = 0.0;
        for (int k = 0; k < 8; ++k) {
          const int dz = (k >> 2) & 1, dy = (k >> 1) & 1, dx = k & 1;
          const double w = (dz ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dx ? f[2] : 1.0 - f[2]);
          if (w == 0.0) continue;
          const long zz = b[0] + dz, yy = b[1] + dy, xx = b[2] + dx;
          acc += w * static_cast<double>(inside(zz, yy, xx) ? in.at(zz, yy, xx) : fill);
        }
        dst = static_cast<T>(acc);
      }
  return out;
}

struct AugmentedPair {
  ImageVolume image;
  LabelVolume label;
};

inline AugmentedPair augment_pair(const ImageVolume& image, const LabelVolume& label, const AugmentParams& params,
                                  std::uint64_t stream) {
  if (!image.same_shape(label))
    throw ContractError("augment: image " + dims_str(image.dims) + " and label " + dims_str(label.dims) + " differ");
  check_binary(label, "augment");
  const DeformationSpec spec = sample_spec(params, image.dims, stream);
  const DisplacementField field = realize_field(spec, image.dims);
  const float fill = params.fill_image ? *params.fill_image : *std::min_element(image.values.begin(), image.values.end());
  return {warp(image, field, Interp::Trilinear, fill), warp(label, field, Interp::Nearest, params.fill_label)};
}

}  // namespace vseg
