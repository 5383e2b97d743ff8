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

// Whole-pipeline run configuration and its key schema.
//
// Every key is "section.name". A RunConfig starts at the defaults below, then
// a config file is applied, then individual overrides. Unknown keys are
// rejected.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include <optional>

#include "vseg/config_text.hpp"
#include "vseg/error.hpp"
#include "vseg/localize.hpp"
#include "vseg/phantom.hpp"
#include "vseg/trainer.hpp"

namespace vseg {

enum class EvalSpace { Crop, Original };

struct LocalizeConfig {
  std::optional<long> margin;  // unset: the forest's calibrated margin, kLabelMargin around label extents
  ForestParams forest;
  bool oracle_box = false;
};

struct PhantomConfig {
  std::size_t size = 64;
  std::size_t count = 10;
  PhantomParams params;
};

struct DataConfig {
  std::size_t n_train = 0;  // 0: no split
  std::size_t n_test = 0;
};

struct EvalConfig {
  double threshold = 0.5;
  EvalSpace space = EvalSpace::Crop;
};

struct RunConfig {
  std::uint64_t seed = 0;
  TrainConfig train;  // carries the network, adam and augment sections
  LocalizeConfig localize;
  PhantomConfig phantom;
  DataConfig data;
  EvalConfig eval;

  /// Propagates the run seed into every component that owns one.
  void sync_seeds() {
    train.seed = seed;
    localize.forest.seed = seed;
  }

  void validate() const {
    train.validate();
    if (localize.margin && *localize.margin < 0) throw UsageError("localize.margin must be >= 0");
    if (localize.forest.trees < 1) throw UsageError("localize.trees must be >= 1");
    if (phantom.size < 16) throw UsageError("phantom.size must be >= 16");
    if (!(eval.threshold >= 0.0 && eval.threshold <= 1.0)) throw UsageError("eval.threshold must lie in [0, 1]");
  }
};

struct ConfigKey {
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

namespace detail {

template <class N>
ConfigKey num(std::string key, std::string help, std::function<N&(RunConfig&)> ref) {
  auto get = [ref](const RunConfig& c) {
    const N v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<N>)
      return format_double(double(v));
    else
      return std::to_string(v);
  };
  auto set = [ref, key](RunConfig& c, const std::string& text) { ref(c) = parse_number<N>(key, text); };
  return {std::move(key), std::move(help), get, set};
}

inline ConfigKey flag(std::string key, std::string help, std::function<bool&(RunConfig&)> ref) {
  auto get = [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "on" : "off"); };
  auto set = [ref, key](RunConfig& c, const std::string& text) { ref(c) = parse_bool(key, text); };
  return {std::move(key), std::move(help), get, set};
}

}  // namespace detail

/// The complete key schema, in documentation order.
inline const std::vector<ConfigKey>& config_schema() {
  using detail::flag;
  using detail::num;
  using std::size_t;
  static const std::vector<ConfigKey> schema = {
      num<std::uint64_t>("run.seed", "seed for every random stream", [](RunConfig& c) -> std::uint64_t& { return c.seed; }),

      num<size_t>("network.levels", "resolution levels", [](RunConfig& c) -> size_t& { return c.train.network.levels; }),
      num<size_t>("network.base_channels", "channels of the first convolution",
                  [](RunConfig& c) -> size_t& { return c.train.network.base_channels; }),
      {"network.skip_mode", "skip merge: concat or sum",
       [](const RunConfig& c) { return to_string(c.train.network.skip_mode); },
       [](RunConfig& c, const std::string& v) {
         if (v != "concat" && v != "sum") throw UsageError("invalid value '" + v + "' for 'network.skip_mode'");
         c.train.network.skip_mode = parse_skip_mode(v);
       }},
      num<size_t>("network.upconv_kernel", "kernel size of the convolution after upsampling",
                  [](RunConfig& c) -> size_t& { return c.train.network.upconv_kernel; }),
      num<size_t>("network.input_size", "cubic network input size in voxels",
                  [](RunConfig& c) -> size_t& { return c.train.network.input_size; }),
      flag("network.batch_norm", "batch normalization after each 3x3x3 convolution",
           [](RunConfig& c) -> bool& { return c.train.network.batch_norm; }),
      num<double>("network.bn_epsilon", "batch-norm variance epsilon",
                  [](RunConfig& c) -> double& { return c.train.network.bn_epsilon; }),
      num<double>("network.bn_momentum", "running-statistics momentum",
                  [](RunConfig& c) -> double& { return c.train.network.bn_momentum; }),

      num<size_t>("train.iterations", "optimizer steps", [](RunConfig& c) -> size_t& { return c.train.iterations; }),
      num<size_t>("train.batch_size", "volumes per step", [](RunConfig& c) -> size_t& { return c.train.batch_size; }),
      num<size_t>("train.workers", "data-parallel worker contexts (must divide batch_size)",
                  [](RunConfig& c) -> size_t& { return c.train.workers; }),
      num<size_t>("train.eval_every", "iterations between evaluations (0: only at the end)",
                  [](RunConfig& c) -> size_t& { return c.train.eval_every; }),
      flag("train.augmentation", "random deformation of each training sample",
           [](RunConfig& c) -> bool& { return c.train.augmentation; }),
      flag("train.bn_recalibrate", "re-estimate batch-norm running statistics on the training set before evaluating",
           [](RunConfig& c) -> bool& { return c.train.bn_recalibrate; }),

      num<double>("adam.lr", "learning rate", [](RunConfig& c) -> double& { return c.train.adam.lr; }),
      num<double>("adam.beta1", "first-moment decay", [](RunConfig& c) -> double& { return c.train.adam.beta1; }),
      num<double>("adam.beta2", "second-moment decay", [](RunConfig& c) -> double& { return c.train.adam.beta2; }),
      num<double>("adam.epsilon", "denominator epsilon", [](RunConfig& c) -> double& { return c.train.adam.epsilon; }),

      num<double>("augment.max_displacement", "largest B-spline control displacement in voxels",
                  [](RunConfig& c) -> double& { return c.train.augment.max_displacement; }),
      num<double>("augment.grid_spacing", "control-point pitch in voxels",
                  [](RunConfig& c) -> double& { return c.train.augment.grid_spacing; }),
      num<double>("augment.rot_range", "rotation range in degrees, +/- about each axis",
                  [](RunConfig& c) -> double& { return c.train.augment.rot_range; }),
      num<double>("augment.trans_range", "translation range in voxels, +/- along each axis",
                  [](RunConfig& c) -> double& { return c.train.augment.trans_range; }),
      {"augment.fill_image", "image value outside the source volume (min: per-volume minimum)",
       [](const RunConfig& c) {
         return c.train.augment.fill_image ? format_double(*c.train.augment.fill_image) : std::string("min");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "min")
           c.train.augment.fill_image.reset();
         else
           c.train.augment.fill_image = parse_number<float>("augment.fill_image", v);
       }},

      {"localize.margin",
       "voxels added to every face of a box; auto = the forest's out-of-bag margin, " + std::to_string(kLabelMargin) +
           " around label extents",
       [](const RunConfig& c) { return c.localize.margin ? std::to_string(*c.localize.margin) : std::string("auto"); },
       [](RunConfig& c, const std::string& v) {
         if (v == "auto")
           c.localize.margin.reset();
         else
           c.localize.margin = parse_number<long>("localize.margin", v);
       }},
      num<size_t>("localize.trees", "regression-forest trees", [](RunConfig& c) -> size_t& { return c.localize.forest.trees; }),
      num<size_t>("localize.depth", "maximum tree depth", [](RunConfig& c) -> size_t& { return c.localize.forest.depth; }),
      flag("localize.oracle_box", "use the label extent instead of the forest",
           [](RunConfig& c) -> bool& { return c.localize.oracle_box; }),

      num<size_t>("phantom.size", "cubic phantom size in voxels", [](RunConfig& c) -> size_t& { return c.phantom.size; }),
      num<size_t>("phantom.count", "phantoms to generate", [](RunConfig& c) -> size_t& { return c.phantom.count; }),
      num<double>("phantom.base", "background intensity", [](RunConfig& c) -> double& { return c.phantom.params.base; }),
      num<double>("phantom.contrast", "target contrast above background",
                  [](RunConfig& c) -> double& { return c.phantom.params.contrast; }),
      num<double>("phantom.noise", "Gaussian noise sigma", [](RunConfig& c) -> double& { return c.phantom.params.noise; }),

      num<size_t>("data.n_train", "training cases of the split written by phantom-gen (0: no split)",
                  [](RunConfig& c) -> size_t& { return c.data.n_train; }),
      num<size_t>("data.n_test", "test cases of that split", [](RunConfig& c) -> size_t& { return c.data.n_test; }),

      num<double>("eval.threshold", "probability threshold (inclusive)",
                  [](RunConfig& c) -> double& { return c.eval.threshold; }),
      {"eval.space", "where Dice is computed: crop (network input grid) or original",
       [](const RunConfig& c) { return std::string(c.eval.space == EvalSpace::Crop ? "crop" : "original"); },
       [](RunConfig& c, const std::string& v) {
         if (v == "crop")
           c.eval.space = EvalSpace::Crop;
         else if (v == "original")
           c.eval.space = EvalSpace::Original;
         else
           throw UsageError("invalid value '" + v + "' for 'eval.space' (crop or original)");
       }},
  };
  return schema;
}

inline const ConfigKey* find_key(const std::string& key) {
  for (const ConfigKey& k : config_schema())
    if (k.key == key) return &k;
  return nullptr;
}

inline void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw UsageError("unknown configuration key '" + key + "'");
  k->set(cfg, value);
}

inline void apply_config(RunConfig& cfg, const ConfigText& text) {
  for (const std::string& key : text.keys()) set_key(cfg, key, text.get(key));
}

/// Full configuration as text, one section per module; parses back to the same values.
inline std::string format_config(const RunConfig& cfg) {
  std::string out, section;
  for (const ConfigKey& k : config_schema()) {
    const auto dot = k.key.find('.');
    const std::string sec = k.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.key.substr(dot + 1) + ": " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace vseg
