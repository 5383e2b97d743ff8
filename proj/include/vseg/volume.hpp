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

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "vseg/config_text.hpp"
#include "vseg/error.hpp"
#include "vseg/records.hpp"

namespace vseg {

/// Scalar voxel grid (depth, height, width) with physical spacing in mm.
template <class T>
struct Volume {
  std::array<std::size_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<T> values;

  Volume() : values(1) {}
  explicit Volume(std::array<std::size_t, 3> d, T fill = T{}, std::array<double, 3> sp = {1.0, 1.0, 1.0})
      : dims(d), spacing(sp) {
    if (d[0] == 0 || d[1] == 0 || d[2] == 0) throw ContractError("volume dimensions must be >= 1");
    for (double s : sp)
      if (!(s > 0.0)) throw ContractError("volume spacing must be positive");
    values.assign(d[0] * d[1] * d[2], fill);
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const noexcept { return (z * dims[1] + y) * dims[2] + x; }
  T& at(std::size_t z, std::size_t y, std::size_t x) noexcept { return values[index(z, y, x)]; }
  const T& at(std::size_t z, std::size_t y, std::size_t x) const noexcept { return values[index(z, y, x)]; }
  template <class U>
  bool same_shape(const Volume<U>& o) const noexcept {
    return dims == o.dims;
  }

  bool operator==(const Volume&) const = default;
};

using ImageVolume = Volume<float>;
using LabelVolume = Volume<std::uint8_t>;

inline std::string dims_str(const std::array<std::size_t, 3>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

inline void check_binary(const LabelVolume& v, const std::string& what) {
  for (auto x : v.values)
    if (x > 1) throw ContractError(what + ": label volume contains value " + std::to_string(int(x)) + ", expected {0,1}");
}

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else if constexpr (std::is_same_v<T, std::uint8_t>) return "u8";
  else static_assert(sizeof(T) == 0, "unsupported volume dtype");
}

inline std::string sidecar_path(const std::string& path) { return path + "j"; }

/// Writes `path` (raw little-endian payload) and `path + "j"` (text header).
template <class T>
void write_volume(const Volume<T>& v, const std::string& path) {
  std::string header = std::string("dtype: ") + dtype_name<T>() + "\n";
  header += "dims: " + std::to_string(v.dims[0]) + " " + std::to_string(v.dims[1]) + " " + std::to_string(v.dims[2]) + "\n";
  header += "spacing: " + format_double(v.spacing[0]) + " " + format_double(v.spacing[1]) + " " +
            format_double(v.spacing[2]) + "\n";
  header += "byte_order: little\n";

  std::string payload;
  payload.reserve(v.size() * sizeof(T));
  for (T x : v.values) {
    if constexpr (std::is_same_v<T, float>) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
      for (int i = 0; i < 4; ++i) payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    } else {
      payload.push_back(static_cast<char>(x));
    }
  }
  std::ofstream raw(path, std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot open '" + path + "' for writing");
  raw.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw IoError("cannot open '" + sidecar_path(path) + "' for writing");
  side << header;
  if (!raw || !side) throw IoError("failed writing volume '" + path + "'");
}

struct VolumeHeader {
  std::string dtype;
  std::array<std::size_t, 3> dims{};
  std::array<double, 3> spacing{};
};

inline VolumeHeader read_volume_header(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw IoError("missing sidecar '" + sidecar_path(path) + "' for volume '" + path + "'");
  std::stringstream ss;
  ss << side.rdbuf();
  const ConfigText t = ConfigText::parse(ss.str(), sidecar_path(path));
  for (const auto& k : t.keys())
    if (k != "dtype" && k != "dims" && k != "spacing" && k != "byte_order")
      throw IoError(sidecar_path(path) + ": unknown key '" + k + "'");
  VolumeHeader h;
  h.dtype = t.get("dtype");
  if (h.dtype != "f32" && h.dtype != "u8") throw IoError(sidecar_path(path) + ": unknown dtype '" + h.dtype + "'");
  if (t.has("byte_order") && t.get("byte_order") != "little")
    throw IoError(sidecar_path(path) + ": unsupported byte order '" + t.get("byte_order") + "'");
  std::istringstream dims(t.get("dims"));
  std::string tok;
  for (int i = 0; i < 3; ++i) {
    if (!(dims >> tok)) throw IoError(sidecar_path(path) + ": dims needs three values");
    h.dims[i] = parse_number<std::size_t>("dims", tok);
    if (h.dims[i] == 0) throw IoError(sidecar_path(path) + ": dims must be >= 1");
  }
  h.spacing = {1.0, 1.0, 1.0};
  if (t.has("spacing")) {
    std::istringstream sp(t.get("spacing"));
    for (int i = 0; i < 3; ++i) {
      if (!(sp >> tok)) throw IoError(sidecar_path(path) + ": spacing needs three values");
      h.spacing[i] = parse_number<double>("spacing", tok);
      if (!(h.spacing[i] > 0.0)) throw IoError(sidecar_path(path) + ": spacing must be positive");
    }
  }
  return h;
}

template <class T>
Volume<T> read_volume(const std::string& path) {
  const VolumeHeader h = read_volume_header(path);
  if (h.dtype != dtype_name<T>())
    throw IoError("volume '" + path + "' has dtype " + h.dtype + ", expected " + dtype_name<T>());
  const std::string bytes = read_file_bytes(path);
  Volume<T> v(h.dims, T{}, h.spacing);
  const std::size_t expected = v.size() * sizeof(T);
  if (bytes.size() != expected)
    throw IoError("volume '" + path + "': payload has " + std::to_string(bytes.size()) + " bytes, dims " +
                  dims_str(h.dims) + " imply " + std::to_string(expected));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
      v.values[i] = std::bit_cast<float>(bits);
    } else {
      v.values[i] = static_cast<std::uint8_t>(bytes[i]);
    }
  }
  return v;
}

/// Reads an image; 8-bit payloads are widened to float.
inline ImageVolume read_image(const std::string& path) {
  if (read_volume_header(path).dtype == "u8") {
    const LabelVolume l = read_volume<std::uint8_t>(path);
    ImageVolume v(l.dims, 0.0f, l.spacing);
    for (std::size_t i = 0; i < l.size(); ++i) v.values[i] = l.values[i];
    return v;
  }
  return read_volume<float>(path);
}

inline LabelVolume read_label(const std::string& path) {
  LabelVolume v = read_volume<std::uint8_t>(path);
  check_binary(v, path);
  return v;
}

}  // namespace vseg
