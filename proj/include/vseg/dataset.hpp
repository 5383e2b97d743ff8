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

// Case manifests (tab-separated: id, image path, label path, optional box)
// and seeded train/test splits.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vseg/config_text.hpp"
#include "vseg/error.hpp"
#include "vseg/localize.hpp"
#include "vseg/rng.hpp"

namespace vseg {

struct CaseRecord {
  std::string id;
  std::string image;
  std::string label;
  std::optional<BoundingBox> box;

  bool operator==(const CaseRecord&) const = default;
};

/// Box column: "z0 y0 x0 z1 y1 x1" (min inclusive, max exclusive).
inline std::string format_box(const BoundingBox& b) {
  return std::to_string(b.min[0]) + " " + std::to_string(b.min[1]) + " " + std::to_string(b.min[2]) + " " +
         std::to_string(b.max[0]) + " " + std::to_string(b.max[1]) + " " + std::to_string(b.max[2]);
}

inline BoundingBox parse_box(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  BoundingBox b;
  for (long* v : {&b.min[0], &b.min[1], &b.min[2], &b.max[0], &b.max[1], &b.max[2]})
    if (!(in >> *v)) throw UsageError(where + ": box needs six integers, got '" + text + "'");
  std::string rest;
  if (in >> rest) throw UsageError(where + ": trailing text after box '" + text + "'");
  if (!b.valid()) throw UsageError(where + ": degenerate box '" + text + "'");
  return b;
}

/// Relative paths are resolved against the manifest's directory.
inline std::vector<CaseRecord> parse_manifest(const std::string& text, const std::string& origin,
                                              const std::filesystem::path& base = {}) {
  std::vector<CaseRecord> cases;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? p : (base / path).string();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      cols.push_back(line.substr(start, tab - start));
    cols.push_back(line.substr(start));
    const std::string where = origin + ":" + std::to_string(lineno);
    if (cols.size() < 3 || cols.size() > 4)
      throw UsageError(where + ": expected 3 or 4 tab-separated columns, got " + std::to_string(cols.size()));
    CaseRecord c{trim(cols[0]), resolve(trim(cols[1])), resolve(trim(cols[2])), std::nullopt};
    if (c.id.empty()) throw UsageError(where + ": empty case id");
    if (!ids.insert(c.id).second) throw UsageError(where + ": duplicate case id '" + c.id + "'");
    if (cols.size() == 4 && !trim(cols[3]).empty()) c.box = parse_box(trim(cols[3]), where);
    cases.push_back(std::move(c));
  }
  return cases;
}

inline std::vector<CaseRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path, std::filesystem::path(path).parent_path());
}

inline std::string format_manifest(const std::vector<CaseRecord>& cases) {
  std::string out;
  for (const CaseRecord& c : cases) {
    out += c.id + "\t" + c.image + "\t" + c.label;
    if (c.box) out += "\t" + format_box(*c.box);
    out += "\n";
  }
  return out;
}

inline void write_manifest(const std::string& path, const std::vector<CaseRecord>& cases) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest '" + path + "' for writing");
  out << format_manifest(cases);
  if (!out) throw IoError("failed writing manifest '" + path + "'");
}

struct Split {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> test;
};

/// Seeded shuffle of the indices; the first n_train go to train, the next
/// n_test to test. Each subset keeps the manifest order.
inline Split split_dataset(const std::vector<CaseRecord>& cases, std::size_t n_train, std::size_t n_test,
                           std::uint64_t seed) {
  if (n_train + n_test > cases.size())
    throw ContractError("split: requested " + std::to_string(n_train) + " + " + std::to_string(n_test) +
                        " cases but only " + std::to_string(cases.size()) + " available");
  std::vector<std::size_t> idx(cases.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = make_rng(seed, {streams::kSplit});
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + n_train);
  std::vector<std::size_t> te(idx.begin() + n_train, idx.begin() + n_train + n_test);
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  Split s;
  for (std::size_t i : tr) s.train.push_back(cases[i]);
  for (std::size_t i : te) s.test.push_back(cases[i]);
  return s;
}

}  // namespace vseg
