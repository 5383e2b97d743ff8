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

#include <optional>
#include <string>
#include <vector>

#include "vseg/adam.hpp"
#include "vseg/config_text.hpp"
#include "vseg/network.hpp"
#include "vseg/records.hpp"

namespace vseg {

inline std::string network_config_text(const NetworkConfig& c) {
  std::string s = "[network]\n";
  s += "levels: " + std::to_string(c.levels) + "\n";
  s += "base_channels: " + std::to_string(c.base_channels) + "\n";
  s += "skip_mode: " + to_string(c.skip_mode) + "\n";
  s += "upconv_kernel: " + std::to_string(c.upconv_kernel) + "\n";
  s += "input_size: " + std::to_string(c.input_size) + "\n";
  s += std::string("batch_norm: ") + (c.batch_norm ? "on" : "off") + "\n";
  s += "bn_epsilon: " + format_double(c.bn_epsilon) + "\n";
  s += "bn_momentum: " + format_double(c.bn_momentum) + "\n";
  return s;
}

/// Reads the [network] section; absent keys keep their defaults.
inline NetworkConfig network_config_from(const ConfigText& t) {
  NetworkConfig c;
  auto opt = [&](const char* key) -> const std::string* {
    const std::string full = std::string("network.") + key;
    return t.has(full) ? &t.get(full) : nullptr;
  };
  if (auto v = opt("levels")) c.levels = parse_number<std::size_t>("network.levels", *v);
  if (auto v = opt("base_channels")) c.base_channels = parse_number<std::size_t>("network.base_channels", *v);
  if (auto v = opt("skip_mode")) c.skip_mode = parse_skip_mode(*v);
  if (auto v = opt("upconv_kernel")) c.upconv_kernel = parse_number<std::size_t>("network.upconv_kernel", *v);
  if (auto v = opt("input_size")) c.input_size = parse_number<std::size_t>("network.input_size", *v);
  if (auto v = opt("batch_norm")) c.batch_norm = parse_bool("network.batch_norm", *v);
  if (auto v = opt("bn_epsilon")) c.bn_epsilon = parse_number<double>("network.bn_epsilon", *v);
  if (auto v = opt("bn_momentum")) c.bn_momentum = parse_number<double>("network.bn_momentum", *v);
  return c;
}

namespace detail {

template <class T>
Record tensor_record(const std::string& name, const Tensor5<T>& t) {
  const Shape5 s = t.shape();
  Record r{name, {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.d),
                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
           {}};
  r.values.reserve(t.size());
  for (T v : t.values()) r.values.push_back(static_cast<float>(v));
  return r;
}

template <class T>
Record vector_record(const std::string& name, const std::vector<T>& v) {
  Record r{name, {static_cast<std::uint32_t>(v.size())}, {}};
  for (T e : v) r.values.push_back(static_cast<float>(e));
  return r;
}

inline const Record& expect_record(const RecordFile& f, const std::string& name, const std::vector<std::uint32_t>& dims,
                                   const std::string& origin) {
  const Record* r = f.find(name);
  if (!r) throw IoError(origin + ": missing record '" + name + "'");
  if (r->dims != dims) {
    std::string want, got;
    for (auto d : dims) want += std::to_string(d) + " ";
    for (auto d : r->dims) got += std::to_string(d) + " ";
    throw IoError(origin + ": record '" + name + "' has dims [" + trim(got) + "], configuration expects [" + trim(want) + "]");
  }
  return *r;
}

template <class T>
void fill_tensor(Tensor5<T>& t, const Record& r) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(r.values[i]);
}

}  // namespace detail

template <class T>
struct Checkpoint {
  Network<T> network;
  std::optional<AdamState<T>> optimizer;
};

/// Serializes parameters, batch-norm running statistics and, optionally, the
/// optimizer state. Values are stored as 32-bit floats.
template <class T>
RecordFile checkpoint_records(const Network<T>& net, const AdamState<T>* optimizer = nullptr) {
  RecordFile f;
  f.config_text = network_config_text(net.config());
  for (const Parameter<T>* p : net.parameters()) f.records.push_back(detail::tensor_record(p->name, p->value));
  for (const BatchNorm<T>* b : net.batch_norms()) {
    const std::string base = b->gamma.name.substr(0, b->gamma.name.rfind('.'));
    f.records.push_back(detail::vector_record(base + ".running_mean", b->running_mean));
    f.records.push_back(detail::vector_record(base + ".running_var", b->running_var));
  }
  if (optimizer) {
    f.records.push_back(Record{"adam.step", {1}, {static_cast<float>(optimizer->step)}});
    for (const Parameter<T>* p : net.parameters()) {
      auto it = optimizer->moments.find(p->name);
      if (it == optimizer->moments.end()) continue;
      f.records.push_back(detail::tensor_record("adam.m/" + p->name, it->second.m));
      f.records.push_back(detail::tensor_record("adam.v/" + p->name, it->second.v));
    }
  }
  return f;
}

template <class T>
void save_checkpoint(const Network<T>& net, const std::string& path, const AdamState<T>* optimizer = nullptr) {
  write_record_file(path, checkpoint_records(net, optimizer));
}

template <class T = float>
Checkpoint<T> checkpoint_from_records(const RecordFile& f, const std::string& origin = "checkpoint") {
  const NetworkConfig cfg = network_config_from(ConfigText::parse(f.config_text, origin + " (config)"));
  Checkpoint<T> ck{Network<T>::build(cfg, 0), std::nullopt};
  for (Parameter<T>* p : ck.network.parameters()) {
    const Shape5 s = p->value.shape();
    const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                          static_cast<std::uint32_t>(s.d), static_cast<std::uint32_t>(s.h),
                                          static_cast<std::uint32_t>(s.w)};
    detail::fill_tensor(p->value, detail::expect_record(f, p->name, dims, origin));
  }
  for (BatchNorm<T>* b : ck.network.batch_norms()) {
    const std::string base = b->gamma.name.substr(0, b->gamma.name.rfind('.'));
    const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(b->channels())};
    const Record& m = detail::expect_record(f, base + ".running_mean", dims, origin);
    const Record& v = detail::expect_record(f, base + ".running_var", dims, origin);
    b->set_running(std::vector<T>(m.values.begin(), m.values.end()), std::vector<T>(v.values.begin(), v.values.end()));
  }
  if (const Record* step = f.find("adam.step")) {
    AdamState<T> st;
    st.step = static_cast<std::size_t>(step->values.at(0));
    for (Parameter<T>* p : ck.network.parameters()) {
      const Record* m = f.find("adam.m/" + p->name);
      const Record* v = f.find("adam.v/" + p->name);
      if (!m || !v) continue;
      AdamMoments<T> mom{Tensor5<T>(p->value.shape()), Tensor5<T>(p->value.shape())};
      if (m->values.size() != mom.m.size() || v->values.size() != mom.v.size())
        throw IoError(origin + ": optimizer moments for '" + p->name + "' do not match the parameter shape");
      detail::fill_tensor(mom.m, *m);
      detail::fill_tensor(mom.v, *v);
      st.moments.emplace(p->name, std::move(mom));
    }
    ck.optimizer = std::move(st);
  }
  return ck;
}

template <class T = float>
Checkpoint<T> load_checkpoint(const std::string& path) {
  return checkpoint_from_records<T>(read_record_file(path), path);
}

/// Loads into an existing network; the embedded configuration must match.
template <class T>
void load_checkpoint_into(Network<T>& net, const std::string& path) {
  Checkpoint<T> ck = load_checkpoint<T>(path);
  if (!(ck.network.config() == net.config()))
    throw ContractError(path + ": checkpoint configuration does not match the target network:\n" +
                        network_config_text(ck.network.config()) + "vs\n" + network_config_text(net.config()));
  net = std::move(ck.network);
}

}  // namespace vseg
