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

// Binary portable graymap (P5) slices.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  bool operator==(const GrayImage&) const = default;
};

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline GrayImage decode_pgm(const std::string& bytes, const std::string& origin = "pgm") {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw IoError(origin + ": not a binary graymap");
  GrayImage img;
  img.width = std::stoul(token());
  img.height = std::stoul(token());
  if (token() != "255") throw IoError(origin + ": only 8-bit graymaps are supported");
  ++pos;
  if (bytes.size() - pos != img.width * img.height) throw IoError(origin + ": pixel payload has the wrong length");
  img.pixels.assign(bytes.begin() + long(pos), bytes.end());
  return img;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << encode_pgm(img);
  if (!out) throw IoError("failed writing '" + path + "'");
}

/// Axial slice z, intensities mapped linearly from [lo, hi] to [0, 255].
template <class T>
GrayImage slice_image(const Volume<T>& v, std::size_t z, double lo, double hi) {
  GrayImage img{v.dims[2], v.dims[1], {}};
  img.pixels.reserve(img.width * img.height);
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (std::size_t y = 0; y < v.dims[1]; ++y)
    for (std::size_t x = 0; x < v.dims[2]; ++x) {
      const double g = std::round((double(v.at(z, y, x)) - lo) * scale);
      img.pixels.push_back(static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0)));
    }
  return img;
}

}  // namespace vseg
