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

// Bounding-box localisation: a small regression forest over coarse intensity
// features, margin expansion, and fixed-size crop/resample with its inverse.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vseg/augment.hpp"
#include "vseg/config_text.hpp"
#include "vseg/error.hpp"
#include "vseg/records.hpp"
#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

/// Voxel-index box, inclusive min and exclusive max per axis (z, y, x).
struct BoundingBox {
  std::array<long, 3> min{0, 0, 0};
  std::array<long, 3> max{1, 1, 1};

  long extent(int axis) const noexcept { return max[axis] - min[axis]; }
  double center(int axis) const noexcept { return 0.5 * static_cast<double>(min[axis] + max[axis]); }
  bool valid() const noexcept { return extent(0) > 0 && extent(1) > 0 && extent(2) > 0; }
  bool contains(long z, long y, long x) const noexcept {
    return z >= min[0] && z < max[0] && y >= min[1] && y < max[1] && x >= min[2] && x < max[2];
  }
  std::string str() const {
    std::string s = "[";
    for (int a = 0; a < 3; ++a) s += (a ? ", " : "") + std::to_string(min[a]) + ":" + std::to_string(max[a]);
    return s + "]";
  }
  bool operator==(const BoundingBox&) const = default;
};

inline BoundingBox label_extent(const LabelVolume& label) {
  BoundingBox b{{long(label.dims[0]), long(label.dims[1]), long(label.dims[2])}, {0, 0, 0}};
  for (std::size_t z = 0; z < label.dims[0]; ++z)
    for (std::size_t y = 0; y < label.dims[1]; ++y)
      for (std::size_t x = 0; x < label.dims[2]; ++x) {
        if (!label.at(z, y, x)) continue;
        const long p[3] = {long(z), long(y), long(x)};
        for (int a = 0; a < 3; ++a) {
          b.min[a] = std::min(b.min[a], p[a]);
          b.max[a] = std::max(b.max[a], p[a] + 1);
        }
      }
  if (!b.valid()) throw ContractError("label has no foreground voxels");
  return b;
}

inline BoundingBox clamp_box(BoundingBox b, const Dims3& bounds) {
  for (int a = 0; a < 3; ++a) {
    b.min[a] = std::clamp(b.min[a], 0L, long(bounds[a]));
    b.max[a] = std::clamp(b.max[a], 0L, long(bounds[a]));
  }
  return b;
}

/// Default margin around label extents.
inline constexpr long kLabelMargin = 10;

inline BoundingBox expand_margin(BoundingBox b, long margin, const Dims3& bounds) {
  for (int a = 0; a < 3; ++a) {
    b.min[a] -= margin;
    b.max[a] += margin;
  }
  return clamp_box(b, bounds);
}

/// Fraction of foreground voxels inside the box.
inline double box_recall(const BoundingBox& b, const LabelVolume& label) {
  std::size_t inside = 0, total = 0;
  for (std::size_t z = 0; z < label.dims[0]; ++z)
    for (std::size_t y = 0; y < label.dims[1]; ++y)
      for (std::size_t x = 0; x < label.dims[2]; ++x)
        if (label.at(z, y, x)) {
          ++total;
          inside += b.contains(long(z), long(y), long(x));
        }
  return total == 0 ? 1.0 : static_cast<double>(inside) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Crop / resample

namespace detail {

/// Centre-aligned source coordinate of output index o when `extent` voxels
/// starting at `origin` are resampled to `target` voxels; clamped to the box.
inline double resample_coord(long origin, long extent, std::size_t target, std::size_t o) {
  const double s = origin + (static_cast<double>(o) + 0.5) * static_cast<double>(extent) / static_cast<double>(target) - 0.5;
  return std::clamp(s, static_cast<double>(origin), static_cast<double>(origin + extent - 1));
}

template <class T>
T sample_at(const Volume<T>& v, const double s[3], Interp interp) {
  if (interp == Interp::Nearest) {
    long n[3];
    for (int a = 0; a < 3; ++a) n[a] = std::clamp(long(std::floor(s[a] + 0.5)), 0L, long(v.dims[a]) - 1);
    return v.at(n[0], n[1], n[2]);
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
    const long zz = std::min(b[0] + dz, long(v.dims[0]) - 1);
    const long yy = std::min(b[1] + dy, long(v.dims[1]) - 1);
    const long xx = std::min(b[2] + dx, long(v.dims[2]) - 1);
    acc += w * static_cast<double>(v.at(zz, yy, xx));
  }
  return static_cast<T>(acc);
}

}  // namespace detail

template <class T>
Volume<T> crop_resample(const Volume<T>& v, const BoundingBox& box, std::size_t target, Interp interp) {
  if (!box.valid()) throw ContractError("crop: degenerate box " + box.str());
  if (target == 0) throw ContractError("crop: target size must be >= 1");
  for (int a = 0; a < 3; ++a)
    if (box.min[a] < 0 || box.max[a] > long(v.dims[a]))
      throw ContractError("crop: box " + box.str() + " exceeds volume " + dims_str(v.dims));
  std::array<double, 3> spacing;
  for (int a = 0; a < 3; ++a) spacing[a] = v.spacing[a] * double(box.extent(a)) / double(target);
  Volume<T> out({target, target, target}, T{}, spacing);
  std::array<std::vector<double>, 3> coord;
  for (int a = 0; a < 3; ++a)
    for (std::size_t o = 0; o < target; ++o)
      coord[a].push_back(detail::resample_coord(box.min[a], box.extent(a), target, o));
  for (std::size_t z = 0; z < target; ++z)
    for (std::size_t y = 0; y < target; ++y)
      for (std::size_t x = 0; x < target; ++x) {
        const double s[3] = {coord[0][z], coord[1][y], coord[2][x]};
        out.at(z, y, x) = detail::sample_at(v, s, interp);
      }
  return out;
}

/// Inverse of crop_resample: maps a target-sized volume back into the box of
/// a volume of shape `dims`; voxels outside the box take `fill`.
template <class T>
Volume<T> paste_back(const Volume<T>& crop, const BoundingBox& box, const Dims3& dims, Interp interp, T fill,
                     std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  if (!box.valid()) throw ContractError("paste: degenerate box " + box.str());
  if (crop.dims[0] != crop.dims[1] || crop.dims[1] != crop.dims[2]) throw ContractError("paste: crop must be cubic");
  const std::size_t target = crop.dims[0];
  Volume<T> out(dims, fill, spacing);
  std::array<std::vector<double>, 3> coord;
  for (int a = 0; a < 3; ++a)
    for (long p = box.min[a]; p < box.max[a]; ++p)
      coord[a].push_back(detail::resample_coord(0, long(target), std::size_t(box.extent(a)), std::size_t(p - box.min[a])));
  for (long z = box.min[0]; z < box.max[0]; ++z)
    for (long y = box.min[1]; y < box.max[1]; ++y)
      for (long x = box.min[2]; x < box.max[2]; ++x) {
        const double s[3] = {coord[0][z - box.min[0]], coord[1][y - box.min[1]], coord[2][x - box.min[2]]};
        out.at(z, y, x) = detail::sample_at(crop, s, interp);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Features

inline constexpr std::size_t kFeatureGrid = 32;
inline constexpr std::size_t kPoolBlock = 4;
inline constexpr std::size_t kHistogramBins = 16;
inline constexpr std::size_t kFeatureCount =
    (kFeatureGrid / kPoolBlock) * (kFeatureGrid / kPoolBlock) * (kFeatureGrid / kPoolBlock) + kHistogramBins;

/// 8^3 block means of the volume resampled to 32^3, then a 16-bin histogram
/// of the original intensities over [0, 1] (values outside go to the end bins),
/// normalised to fractions.
inline std::vector<float> extract_features(const ImageVolume& v) {
  const BoundingBox whole{{0, 0, 0}, {long(v.dims[0]), long(v.dims[1]), long(v.dims[2])}};
  const ImageVolume r = crop_resample(v, whole, kFeatureGrid, Interp::Trilinear);
  constexpr std::size_t G = kFeatureGrid / kPoolBlock;
  std::vector<float> f;
  f.reserve(kFeatureCount);
  for (std::size_t bz = 0; bz < G; ++bz)
    for (std::size_t by = 0; by < G; ++by)
      for (std::size_t bx = 0; bx < G; ++bx) {
        double s = 0.0;
        for (std::size_t z = 0; z < kPoolBlock; ++z)
          for (std::size_t y = 0; y < kPoolBlock; ++y)
            for (std::size_t x = 0; x < kPoolBlock; ++x)
              s += r.at(bz * kPoolBlock + z, by * kPoolBlock + y, bx * kPoolBlock + x);
        f.push_back(static_cast<float>(s / double(kPoolBlock * kPoolBlock * kPoolBlock)));
      }
  std::array<std::size_t, kHistogramBins> hist{};
  for (float x : v.values) {
    const double b = std::floor(static_cast<double>(x) * kHistogramBins);
    ++hist[static_cast<std::size_t>(std::clamp(b, 0.0, double(kHistogramBins - 1)))];
  }
  for (std::size_t h : hist) f.push_back(static_cast<float>(double(h) / double(v.size())));
  return f;
}

// ---------------------------------------------------------------------------
// Regression forest

using BoxTarget = std::array<double, 6>;  // min z, y, x then max z, y, x

inline BoxTarget box_target(const BoundingBox& b) {
  return {double(b.min[0]), double(b.min[1]), double(b.min[2]), double(b.max[0]), double(b.max[1]), double(b.max[2])};
}

struct ForestSample {
  std::vector<float> features;
  BoxTarget target{};
};

struct ForestParams {
  std::size_t trees = 32;
  std::size_t depth = 8;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  float threshold = 0.0f;  // go left when x <= threshold
  int left = -1;
  int right = -1;
  std::array<float, 6> value{};

  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  const std::array<float, 6>& predict(std::span<const float> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
  }
  bool operator==(const RegressionTree&) const = default;
};

struct RegressionForest {
  std::size_t feature_count = 0;
  std::size_t depth = 0;
  std::vector<RegressionTree> trees;
  /// Smallest margin under which every training box is covered by its
  /// out-of-bag prediction.
  long oob_margin = 0;

  bool trained() const noexcept { return !trees.empty(); }
  bool operator==(const RegressionForest&) const = default;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<ForestSample>& samples, std::size_t depth, Rng& rng)
      : samples_(samples), depth_(depth), rng_(rng) {
    const std::size_t F = samples.front().features.size();
    mtry_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(double(F)))));
    features_.resize(F);
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<std::size_t> idx) {
    tree_.nodes.clear();
    grow(std::move(idx), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t> idx, std::size_t level) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    BoxTarget mean{};
    for (std::size_t i : idx)
      for (int k = 0; k < 6; ++k) mean[k] += samples_[i].target[k];
    for (int k = 0; k < 6; ++k) tree_.nodes[id].value[k] = static_cast<float>(mean[k] / double(idx.size()));
    if (level >= depth_ || idx.size() < 2) return id;

    // Random feature subset: partial Fisher-Yates over the feature list.
    for (std::size_t k = 0; k < mtry_; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, features_.size() - 1);
      std::swap(features_[k], features_[pick(rng_)]);
    }
    double best_gain = 0.0;
    int best_feature = -1;
    float best_threshold = 0.0f;
    std::vector<std::size_t> order = idx;
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = features_[k];
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples_[a].features[f] < samples_[b].features[f];
      });
      BoxTarget total{}, total_sq{};
      for (std::size_t i : order)
        for (int c = 0; c < 6; ++c) {
          total[c] += samples_[i].target[c];
          total_sq[c] += samples_[i].target[c] * samples_[i].target[c];
        }
      const double n = double(order.size());
      double sse_all = 0.0;
      for (int c = 0; c < 6; ++c) sse_all += total_sq[c] - total[c] * total[c] / n;
      BoxTarget left{}, left_sq{};
      for (std::size_t j = 0; j + 1 < order.size(); ++j) {
        for (int c = 0; c < 6; ++c) {
          const double t = samples_[order[j]].target[c];
          left[c] += t;
          left_sq[c] += t * t;
        }
        const float a = samples_[order[j]].features[f], b = samples_[order[j + 1]].features[f];
        if (!(a < b)) continue;
        const double nl = double(j + 1), nr = n - nl;
        double sse = 0.0;
        for (int c = 0; c < 6; ++c) {
          const double r = total[c] - left[c], r_sq = total_sq[c] - left_sq[c];
          sse += (left_sq[c] - left[c] * left[c] / nl) + (r_sq - r * r / nr);
        }
        const double gain = sse_all - sse;
        if (gain > best_gain + 1e-12 * std::max(1.0, sse_all)) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          float mid = static_cast<float>(0.5 * (double(a) + double(b)));
          if (!(mid >= a && mid < b)) mid = a;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return id;
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (samples_[i].features[best_feature] <= best_threshold ? l : r).push_back(i);
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    const int li = grow(std::move(l), level + 1);
    const int ri = grow(std::move(r), level + 1);
    tree_.nodes[id].left = li;
    tree_.nodes[id].right = ri;
    return id;
  }

  const std::vector<ForestSample>& samples_;
  std::size_t depth_;
  Rng& rng_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> features_;
  RegressionTree tree_;
};

/// Voxels a predicted box (rounded outwards) falls short of `truth` on its
/// worst face; 0 when it already covers it.
inline long coverage_deficit(const BoxTarget& predicted, const BoxTarget& truth) {
  double worst = 0.0;
  for (int a = 0; a < 3; ++a)
    worst = std::max({worst, std::floor(predicted[a]) - truth[a], truth[a + 3] - std::ceil(predicted[a + 3])});
  return static_cast<long>(std::ceil(worst));
}

}  // namespace detail

/// Trees are built in parallel; tree i draws from its own stream so the
/// result does not depend on the thread count.
inline RegressionForest train_forest(const std::vector<ForestSample>& samples, const ForestParams& params) {
  if (samples.size() < 2) throw ContractError("forest: need at least 2 training samples, got " + std::to_string(samples.size()));
  if (params.trees == 0) throw UsageError("forest.trees must be >= 1");
  const std::size_t F = samples.front().features.size();
  if (F == 0) throw ContractError("forest: empty feature vectors");
  for (const ForestSample& s : samples)
    if (s.features.size() != F) throw ContractError("forest: inconsistent feature lengths");

  RegressionForest forest;
  forest.feature_count = F;
  forest.depth = params.depth;
  forest.trees.resize(params.trees);
  std::vector<std::vector<bool>> in_bag(params.trees, std::vector<bool>(samples.size(), false));
  auto build = [&](std::size_t t) {
    Rng rng = make_rng(params.seed, {streams::kForest, t});
    std::uniform_int_distribution<std::size_t> draw(0, samples.size() - 1);
    std::vector<std::size_t> boot(samples.size());
    for (std::size_t& i : boot) {
      i = draw(rng);
      in_bag[t][i] = true;
    }
    detail::TreeBuilder builder(samples, params.depth, rng);
    forest.trees[t] = builder.build(std::move(boot));
  };
  const std::size_t threads = std::min<std::size_t>(params.trees, std::max(1u, std::thread::hardware_concurrency()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < params.trees; t += threads) build(t);
      });
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    BoxTarget sum{};
    std::size_t votes = 0;
    for (std::size_t t = 0; t < params.trees; ++t) {
      if (in_bag[t][i]) continue;
      const auto& v = forest.trees[t].predict(samples[i].features);
      for (int c = 0; c < 6; ++c) sum[c] += v[c];
      ++votes;
    }
    if (votes == 0) continue;
    for (double& c : sum) c /= double(votes);
    forest.oob_margin = std::max(forest.oob_margin, detail::coverage_deficit(sum, samples[i].target));
  }
  return forest;
}

/// Mean of the tree outputs (each component summed in sorted order, so the
/// result is independent of tree order), before rounding.
inline BoxTarget predict_target(const RegressionForest& forest, std::span<const float> features) {
  if (!forest.trained()) throw ContractError("forest: predict called on an untrained forest");
  if (features.size() != forest.feature_count)
    throw ContractError("forest: expected " + std::to_string(forest.feature_count) + " features, got " +
                        std::to_string(features.size()));
  BoxTarget out{};
  std::vector<float> column(forest.trees.size());
  for (int c = 0; c < 6; ++c) {
    for (std::size_t t = 0; t < forest.trees.size(); ++t) column[t] = forest.trees[t].predict(features)[c];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (float v : column) s += v;
    out[c] = s / double(column.size());
  }
  return out;
}

inline BoundingBox predict_box(const RegressionForest& forest, const ImageVolume& volume) {
  const BoxTarget t = predict_target(forest, extract_features(volume));
  BoundingBox b;
  for (int a = 0; a < 3; ++a) {
    b.min[a] = static_cast<long>(std::floor(t[a]));
    b.max[a] = static_cast<long>(std::ceil(t[a + 3]));
  }
  b = clamp_box(b, volume.dims);
  if (!b.valid()) throw ContractError("forest: predicted box " + b.str() + " is degenerate");
  return b;
}

// ---------------------------------------------------------------------------
// Serialisation (records named tree/<i>/...)

inline RecordFile forest_records(const RegressionForest& forest) {
  RecordFile file;
  file.config_text = "[forest]\ntrees: " + std::to_string(forest.trees.size()) + "\ndepth: " +
                     std::to_string(forest.depth) + "\nfeatures: " + std::to_string(forest.feature_count) +
                     "\noob_margin: " + std::to_string(forest.oob_margin) + "\n";
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& nodes = forest.trees[t].nodes;
    const std::uint32_t n = static_cast<std::uint32_t>(nodes.size());
    const std::string p = "tree/" + std::to_string(t) + "/";
    Record feature{p + "feature", {n}, {}}, threshold{p + "threshold", {n}, {}}, left{p + "left", {n}, {}},
        right{p + "right", {n}, {}}, value{p + "value", {n, 6}, {}};
    for (const TreeNode& node : nodes) {
      feature.values.push_back(static_cast<float>(node.feature));
      threshold.values.push_back(node.threshold);
      left.values.push_back(static_cast<float>(node.left));
      right.values.push_back(static_cast<float>(node.right));
      value.values.insert(value.values.end(), node.value.begin(), node.value.end());
    }
    for (Record* r : {&feature, &threshold, &left, &right, &value}) file.records.push_back(std::move(*r));
  }
  return file;
}

inline RegressionForest forest_from_records(const RecordFile& file, const std::string& origin = "forest") {
  const ConfigText cfg = ConfigText::parse(file.config_text, origin);
  RegressionForest forest;
  const auto trees = parse_number<std::size_t>("forest.trees", cfg.get("forest.trees"));
  forest.depth = parse_number<std::size_t>("forest.depth", cfg.get("forest.depth"));
  forest.feature_count = parse_number<std::size_t>("forest.features", cfg.get("forest.features"));
  forest.oob_margin = parse_number<long>("forest.oob_margin", cfg.get("forest.oob_margin"));
  for (std::size_t t = 0; t < trees; ++t) {
    const std::string p = "tree/" + std::to_string(t) + "/";
    auto need = [&](const std::string& name) -> const Record& {
      const Record* r = file.find(p + name);
      if (!r) throw IoError(origin + ": missing record '" + p + name + "'");
      return *r;
    };
    const Record& feature = need("feature");
    const Record& threshold = need("threshold");
    const Record& left = need("left");
    const Record& right = need("right");
    const Record& value = need("value");
    const std::size_t n = feature.values.size();
    if (threshold.values.size() != n || left.values.size() != n || right.values.size() != n ||
        value.values.size() != 6 * n || n == 0)
      throw IoError(origin + ": inconsistent node arrays in '" + p + "'");
    RegressionTree tree;
    for (std::size_t i = 0; i < n; ++i) {
      TreeNode node;
      node.feature = static_cast<int>(feature.values[i]);
      node.threshold = threshold.values[i];
      node.left = static_cast<int>(left.values[i]);
      node.right = static_cast<int>(right.values[i]);
      std::copy_n(value.values.begin() + 6 * i, 6, node.value.begin());
      if (node.feature >= 0 && (node.feature >= int(forest.feature_count) || node.left <= int(i) ||
                                node.right <= int(i) || node.left >= int(n) || node.right >= int(n)))
        throw IoError(origin + ": malformed node " + std::to_string(i) + " in '" + p + "'");
      tree.nodes.push_back(node);
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

inline void save_forest(const RegressionForest& forest, const std::string& path) {
  write_record_file(path, forest_records(forest));
}

inline RegressionForest load_forest(const std::string& path) { return forest_from_records(read_record_file(path), path); }

}  // namespace vseg
