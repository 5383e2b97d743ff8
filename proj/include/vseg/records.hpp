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

// Binary record container shared by network checkpoints and forests.
//
//   "VSEG"  u32 version(=1)  u32 config_len  config bytes
//   repeated: u32 name_len  name  u32 rank  u32 dims[rank]  f32 values[prod(dims)]
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

inline constexpr char kRecordMagic[4] = {'V', 'S', 'E', 'G'};
inline constexpr std::uint32_t kRecordVersion = 1;

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

struct RecordFile {
  std::string config_text;
  std::vector<Record> records;

  const Record* find(const std::string& name) const {
    for (const Record& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t len, const std::string& what) {
    need(len, what);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void floats(std::vector<float>& out, std::size_t count, const std::string& what) {
    need(count * 4, what);
    out.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
      out[k] = std::bit_cast<float>(v);
      pos_ += 4;
    }
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n)
      throw IoError(origin_ + ": truncated " + what + ": expected " + std::to_string(n) + " bytes, " +
                    std::to_string(bytes_.size() - pos_) + " remain");
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_records(const RecordFile& file) {
  std::string out(kRecordMagic, 4);
  detail::put_u32(out, kRecordVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(file.config_text.size()));
  out += file.config_text;
  for (const Record& r : file.records) {
    if (r.values.size() != r.element_count())
      throw ContractError("record '" + r.name + "': " + std::to_string(r.values.size()) +
                          " values do not match its dims");
    detail::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    detail::put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) detail::put_u32(out, d);
    for (float v : r.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline RecordFile decode_records(const std::string& bytes, const std::string& origin = "records") {
  detail::ByteReader rd(bytes, origin);
  const std::string magic = rd.str(4, "magic");
  if (magic != std::string(kRecordMagic, 4)) throw IoError(origin + ": bad magic, not a VSEG record file");
  const std::uint32_t version = rd.u32("version");
  if (version != kRecordVersion)
    throw IoError(origin + ": unsupported format version " + std::to_string(version));
  RecordFile file;
  const std::uint32_t cfg_len = rd.u32("config length");
  file.config_text = rd.str(cfg_len, "config text");
  while (!rd.at_end()) {
    Record r;
    const std::uint32_t name_len = rd.u32("record name length");
    r.name = rd.str(name_len, "record name");
    const std::string what = "record '" + r.name + "'";
    const std::uint32_t rank = rd.u32(what + " rank");
    if (rank > 8) throw IoError(origin + ": " + what + " has implausible rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) r.dims.push_back(rd.u32(what + " dims"));
    rd.floats(r.values, r.element_count(), what + " values");
    file.records.push_back(std::move(r));
  }
  return file;
}

inline void write_record_file(const std::string& path, const RecordFile& file) {
  const std::string bytes = encode_records(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline RecordFile read_record_file(const std::string& path) { return decode_records(read_file_bytes(path), path); }

}  // namespace vseg
