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

// key: value configuration text with [section] headers and # comments.

#include <charconv>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Parsed configuration: "section.key" -> raw value, in file order.
class ConfigText {
 public:
  static ConfigText parse(const std::string& text, const std::string& origin = "config") {
    ConfigText cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw UsageError(where + ": malformed section header '" + line + "'");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw UsageError(where + ": expected 'key: value', got '" + line + "'");
      const std::string key = trim(line.substr(0, colon));
      if (key.empty()) throw UsageError(where + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full)) throw UsageError(where + ": duplicate key '" + full + "'");
      cfg.order_.push_back(full);
      cfg.values_[full] = trim(line.substr(colon + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("missing configuration key '" + key + "'");
    return it->second;
  }
  void set(const std::string& key, std::string value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = std::move(value);
  }
  const std::vector<std::string>& keys() const noexcept { return order_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e) throw UsageError("invalid value '" + text + "' for '" + key + "'");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "on" || text == "true" || text == "1" || text == "yes") return true;
  if (text == "off" || text == "false" || text == "0" || text == "no") return false;
  throw UsageError("invalid boolean '" + text + "' for '" + key + "' (use on/off)");
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace vseg
