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
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/ops.hpp"
#include "vseg/rng.hpp"

namespace vseg {

enum class SkipMode { Concat, Sum };

inline std::string to_string(SkipMode m) { return m == SkipMode::Concat ? "concat" : "sum"; }

inline SkipMode parse_skip_mode(const std::string& s) {
  if (s == "concat") return SkipMode::Concat;
  if (s == "sum") return SkipMode::Sum;
  throw ContractError("unknown skip mode '" + s + "' (expected concat or sum)");
}

/// Architecture of the encoder-decoder network.
///
/// Encoder level l maps in -> base*2^l -> 2*base*2^l (1->32->64, 64->64->128,
/// ...). Decoder level l upsamples the coarser features, applies the up-conv,
/// merges with the level-l skip, then runs two convolutions at the skip width.
struct NetworkConfig {
  std::size_t levels = 4;
  std::size_t base_channels = 32;
  SkipMode skip_mode = SkipMode::Concat;
  std::size_t upconv_kernel = 3;
  std::size_t input_size = 120;
  bool batch_norm = true;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.99;

  void validate() const {
    if (levels < 1) throw ContractError("network: levels must be >= 1");
    if (base_channels < 1) throw ContractError("network: base_channels must be >= 1");
    if (upconv_kernel % 2 == 0) throw ContractError("network: upconv_kernel must be odd, got " + std::to_string(upconv_kernel));
    const std::size_t factor = std::size_t{1} << (levels - 1);
    if (input_size == 0 || input_size % factor != 0)
      throw ContractError("network: input_size " + std::to_string(input_size) + " is not divisible by 2^(levels-1) = " +
                          std::to_string(factor));
    if (!(bn_epsilon > 0.0)) throw ContractError("network: bn_epsilon must be positive");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ContractError("network: bn_momentum must lie in [0, 1)");
  }

  std::size_t encoder_mid(std::size_t level) const { return base_channels << level; }
  std::size_t encoder_out(std::size_t level) const { return 2 * encoder_mid(level); }

  bool operator==(const NetworkConfig&) const = default;
};

struct LayerCount {
  std::string name;
  std::string kind;  // conv | batchnorm
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t bn = 0;

  bool operator==(const LayerCount&) const = default;
};

struct ParameterCount {
  std::vector<LayerCount> layers;
  std::size_t weights = 0;
  std::size_t biases = 0;
  std::size_t bn = 0;

  std::size_t total() const noexcept { return weights + biases + bn; }
};

/// Layer-by-layer count derived from the configuration alone, in the same
/// order and with the same names as Network::count_parameters, without
/// allocating any weights.
inline ParameterCount plan_parameters(const NetworkConfig& config) {
  config.validate();
  ParameterCount pc;
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    LayerCount lc{name, "conv", in, out, k, out * in * k * k * k, out, 0};
    pc.weights += lc.weights;
    pc.biases += lc.biases;
    pc.layers.push_back(std::move(lc));
  };
  auto bn = [&](const std::string& name, std::size_t c) {
    if (!config.batch_norm) return;
    pc.bn += 2 * c;
    pc.layers.push_back(LayerCount{name, "batchnorm", c, c, 0, 0, 0, 2 * c});
  };
  const std::size_t L = config.levels;
  std::size_t in = 1;
  for (std::size_t l = 0; l < L; ++l) {
    const std::string p = "enc" + std::to_string(l);
    conv(p + ".conv1", in, config.encoder_mid(l), 3);
    bn(p + ".bn1", config.encoder_mid(l));
    conv(p + ".conv2", config.encoder_mid(l), config.encoder_out(l), 3);
    bn(p + ".bn2", config.encoder_out(l));
    in = config.encoder_out(l);
  }
  std::size_t below = config.encoder_out(L - 1);
  for (std::size_t l = L - 1; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    const std::size_t skip = config.encoder_out(l);
    const std::size_t up_out = config.skip_mode == SkipMode::Concat ? below : skip;
    conv(p + ".up", below, up_out, config.upconv_kernel);
    conv(p + ".conv1", config.skip_mode == SkipMode::Concat ? skip + up_out : skip, skip, 3);
    bn(p + ".bn1", skip);
    conv(p + ".conv2", skip, skip, 3);
    bn(p + ".bn2", skip);
    below = skip;
  }
  conv("head", below, 1, 1);
  return pc;
}

template <class T>
class Network {
 public:
  struct Block {
    ConvLayer<T> conv;
    BatchNorm<T> bn;
  };
  struct EncoderLevel {
    Block first, second;
  };
  struct DecoderLevel {
    ConvLayer<T> up;
    Block first, second;
  };

  Network() = default;

  static Network build(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Network net;
    net.config_ = config;
    const std::size_t L = config.levels;
    std::size_t in = 1;
    for (std::size_t l = 0; l < L; ++l) {
      const std::string p = "enc" + std::to_string(l);
      EncoderLevel e;
      e.first = net.make_block(p + ".conv1", in, config.encoder_mid(l));
      e.second = net.make_block(p + ".conv2", config.encoder_mid(l), config.encoder_out(l));
      net.encoders_.push_back(std::move(e));
      in = config.encoder_out(l);
    }
    net.decoders_.resize(L > 0 ? L - 1 : 0);
    std::size_t below = config.encoder_out(L - 1);
    for (std::size_t l = L - 1; l-- > 0;) {
      const std::string p = "dec" + std::to_string(l);
      const std::size_t skip = config.encoder_out(l);
      const std::size_t up_out = config.skip_mode == SkipMode::Concat ? below : skip;
      DecoderLevel d;
      d.up = ConvLayer<T>(p + ".up", below, up_out, config.upconv_kernel);
      const std::size_t merged = config.skip_mode == SkipMode::Concat ? skip + up_out : skip;
      if (config.skip_mode == SkipMode::Sum && up_out != skip)
        throw ContractError("network: summation merge at level " + std::to_string(l) + " joins " + std::to_string(skip) +
                            " and " + std::to_string(up_out) + " channels");
      d.first = net.make_block(p + ".conv1", merged, skip);
      d.second = net.make_block(p + ".conv2", skip, skip);
      net.decoders_[l] = std::move(d);
      below = skip;
    }
    net.head_ = ConvLayer<T>("head", below, 1, 1);

    Rng gen = make_rng(seed, {streams::kInit});
    for (ConvLayer<T>* c : net.conv_layers()) c->init(gen);
    return net;
  }

  const NetworkConfig& config() const noexcept { return config_; }

  /// Training-mode forward records every op on the tape.
  Var forward(Tape<T>& tape, Var input, Mode mode = Mode::Train) {
    check_input(tape.value(input).shape());
    const std::size_t L = config_.levels;
    std::vector<Var> skips(L);
    Var x = input;
    for (std::size_t l = 0; l < L; ++l) {
      x = block(tape, encoders_[l].first, x, mode);
      x = block(tape, encoders_[l].second, x, mode);
      if (l + 1 < L) {
        skips[l] = x;
        x = maxpool3d(tape, x);
      }
    }
    for (std::size_t l = L - 1; l-- > 0;) {
      DecoderLevel& d = decoders_[l];
      Var u = conv3d(tape, upsample_nearest2x(tape, x), d.up);
      Var m = config_.skip_mode == SkipMode::Concat ? concat_channels(tape, skips[l], u) : add(tape, skips[l], u);
      x = block(tape, d.first, m, mode);
      x = block(tape, d.second, x, mode);
    }
    return sigmoid(tape, conv3d(tape, x, head_));
  }

  /// Inference with running statistics; nothing is recorded.
  Tensor5<T> infer(const Tensor5<T>& batch) const {
    check_input(batch.shape());
    const std::size_t L = config_.levels;
    std::vector<Tensor5<T>> skips(L);
    Tensor5<T> x = batch;
    for (std::size_t l = 0; l < L; ++l) {
      x = block_infer(encoders_[l].first, x);
      x = block_infer(encoders_[l].second, x);
      if (l + 1 < L) {
        skips[l] = x;
        x = maxpool3d_forward(x).out;
      }
    }
    for (std::size_t l = L - 1; l-- > 0;) {
      const DecoderLevel& d = decoders_[l];
      Tensor5<T> u = conv3d_forward(upsample_nearest2x_forward(x), d.up.weight.value, d.up.bias.value);
      Tensor5<T> m;
      if (config_.skip_mode == SkipMode::Concat) {
        m = concat_channels_forward(skips[l], u);
      } else {
        m = std::move(u);
        const Tensor5<T>& s = skips[l];
        require(s.shape() == m.shape(), "network: summation merge shape mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = s[i] + m[i];
      }
      skips[l] = Tensor5<T>();
      x = block_infer(d.first, m);
      x = block_infer(d.second, x);
    }
    return sigmoid_forward(conv3d_forward(x, head_.weight.value, head_.bias.value));
  }

  /// Convolutions in a fixed order: encoder levels, decoder levels from the
  /// coarsest, head.
  std::vector<ConvLayer<T>*> conv_layers() {
    std::vector<ConvLayer<T>*> out;
    for (auto& e : encoders_) {
      out.push_back(&e.first.conv);
      out.push_back(&e.second.conv);
    }
    for (std::size_t l = decoders_.size(); l-- > 0;) {
      out.push_back(&decoders_[l].up);
      out.push_back(&decoders_[l].first.conv);
      out.push_back(&decoders_[l].second.conv);
    }
    out.push_back(&head_);
    return out;
  }

  std::vector<BatchNorm<T>*> batch_norms() {
    std::vector<BatchNorm<T>*> out;
    if (!config_.batch_norm) return out;
    for (auto& e : encoders_) {
      out.push_back(&e.first.bn);
      out.push_back(&e.second.bn);
    }
    for (std::size_t l = decoders_.size(); l-- > 0;) {
      out.push_back(&decoders_[l].first.bn);
      out.push_back(&decoders_[l].second.bn);
    }
    return out;
  }

  std::vector<const BatchNorm<T>*> batch_norms() const {
    auto v = const_cast<Network*>(this)->batch_norms();
    return {v.begin(), v.end()};
  }

  /// Every trainable tensor, conv weights and biases first, then BN scales
  /// and shifts, each in layer order.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (ConvLayer<T>* c : conv_layers()) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    }
    for (BatchNorm<T>* b : batch_norms()) {
      out.push_back(&b->gamma);
      out.push_back(&b->beta);
    }
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto v = const_cast<Network*>(this)->parameters();
    return {v.begin(), v.end()};
  }

  void zero_grad() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
  }

  /// Copies parameter values and running statistics (not gradients).
  void assign_state(const Network& other) {
    require(other.config_ == config_, "network: cannot assign state across different configurations");
    auto dst = parameters();
    auto src = other.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
    auto bd = batch_norms();
    auto bs = other.batch_norms();
    for (std::size_t i = 0; i < bd.size(); ++i) {
      bd[i]->running_mean = bs[i]->running_mean;
      bd[i]->running_var = bs[i]->running_var;
      bd[i]->initialized = bs[i]->initialized;
    }
  }

  /// Same network in another scalar type.
  template <class U>
  Network<U> cast() const {
    Network<U> out = Network<U>::build(config_, 0);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value.template cast<U>();
    auto bd = out.batch_norms();
    auto bs = batch_norms();
    for (std::size_t i = 0; i < bd.size(); ++i) {
      bd[i]->running_mean.assign(bs[i]->running_mean.begin(), bs[i]->running_mean.end());
      bd[i]->running_var.assign(bs[i]->running_var.begin(), bs[i]->running_var.end());
      bd[i]->initialized = bs[i]->initialized;
    }
    return out;
  }

  ParameterCount count_parameters() const {
    ParameterCount pc;
    auto add_conv = [&](const ConvLayer<T>& c) {
      LayerCount lc{c.weight.name.substr(0, c.weight.name.rfind('.')), "conv", c.in_channels(), c.out_channels(),
                    c.kernel(), c.weight.value.size(), c.bias.value.size(), 0};
      pc.weights += lc.weights;
      pc.biases += lc.biases;
      pc.layers.push_back(std::move(lc));
    };
    auto add_bn = [&](const BatchNorm<T>& b) {
      if (!config_.batch_norm) return;
      LayerCount lc{b.gamma.name.substr(0, b.gamma.name.rfind('.')), "batchnorm", b.channels(), b.channels(), 0, 0, 0,
                    b.gamma.value.size() + b.beta.value.size()};
      pc.bn += lc.bn;
      pc.layers.push_back(std::move(lc));
    };
    for (const auto& e : encoders_) {
      add_conv(e.first.conv);
      add_bn(e.first.bn);
      add_conv(e.second.conv);
      add_bn(e.second.bn);
    }
    for (std::size_t l = decoders_.size(); l-- > 0;) {
      add_conv(decoders_[l].up);
      add_conv(decoders_[l].first.conv);
      add_bn(decoders_[l].first.bn);
      add_conv(decoders_[l].second.conv);
      add_bn(decoders_[l].second.bn);
    }
    add_conv(head_);
    return pc;
  }

  const std::vector<EncoderLevel>& encoders() const noexcept { return encoders_; }
  const std::vector<DecoderLevel>& decoders() const noexcept { return decoders_; }
  const ConvLayer<T>& head() const noexcept { return head_; }
  ConvLayer<T>& head() noexcept { return head_; }

 private:
  Block make_block(const std::string& name, std::size_t in, std::size_t out) const {
    Block b;
    b.conv = ConvLayer<T>(name, in, out, 3);
    if (config_.batch_norm) {
      const std::string bn_name = name.substr(0, name.size() - 5) + "bn" + name.substr(name.size() - 1);
      b.bn = BatchNorm<T>(bn_name, out, config_.bn_epsilon, config_.bn_momentum);
    }
    return b;
  }

  void check_input(const Shape5& s) const {
    const std::size_t n = config_.input_size;
    if (s.c != 1 || s.d != n || s.h != n || s.w != n)
      throw ContractError("network: expected input Nx1x" + std::to_string(n) + "x" + std::to_string(n) + "x" +
                          std::to_string(n) + ", got " + s.str());
  }

  Var block(Tape<T>& tape, Block& b, Var x, Mode mode) {
    Var y = conv3d(tape, x, b.conv);
    if (config_.batch_norm) y = batchnorm(tape, y, b.bn, mode);
    return relu(tape, y);
  }

  Tensor5<T> block_infer(const Block& b, const Tensor5<T>& x) const {
    Tensor5<T> y = conv3d_forward(x, b.conv.weight.value, b.conv.bias.value);
    if (config_.batch_norm) y = batchnorm_infer(y, b.bn);
    return relu_forward(y);
  }

  NetworkConfig config_;
  std::vector<EncoderLevel> encoders_;
  std::vector<DecoderLevel> decoders_;
  ConvLayer<T> head_;
};

}  // namespace vseg
