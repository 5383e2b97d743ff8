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

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vseg/localize.hpp"
#include "vseg/phantom.hpp"

namespace vseg {
namespace {

LabelVolume block_label(const Dims3& d, const BoundingBox& b) {
  LabelVolume l(d);
  for (long z = b.min[0]; z < b.max[0]; ++z)
    for (long y = b.min[1]; y < b.max[1]; ++y)
      for (long x = b.min[2]; x < b.max[2]; ++x) l.at(z, y, x) = 1;
  return l;
}

TEST(Box, LabelExtentIsTight) {
  const BoundingBox b{{2, 3, 4}, {5, 9, 6}};
  EXPECT_EQ(label_extent(block_label({10, 10, 10}, b)), b);
  LabelVolume two({10, 10, 10});
  two.at(1, 8, 2) = 1;
  two.at(6, 0, 7) = 1;
  EXPECT_EQ(label_extent(two), (BoundingBox{{1, 0, 2}, {7, 9, 8}}));
  EXPECT_THROW(label_extent(LabelVolume({3, 3, 3})), ContractError);
}

TEST(Box, MarginClampsToVolume) {
  const BoundingBox b{{2, 3, 4}, {5, 9, 6}};
  EXPECT_EQ(expand_margin(b, 3, {10, 10, 10}), (BoundingBox{{0, 0, 1}, {8, 10, 9}}));
  EXPECT_EQ(expand_margin(b, 0, {10, 10, 10}), b);
  EXPECT_EQ(clamp_box(BoundingBox{{-4, 2, 2}, {20, 3, 12}}, {8, 8, 8}), (BoundingBox{{0, 2, 2}, {8, 3, 8}}));
}

TEST(Box, RecallCountsForegroundInside) {
  const LabelVolume l = block_label({8, 8, 8}, {{0, 0, 0}, {4, 4, 4}});
  EXPECT_EQ(box_recall({{0, 0, 0}, {4, 4, 4}}, l), 1.0);
  EXPECT_EQ(box_recall({{0, 0, 0}, {2, 4, 4}}, l), 0.5);
  EXPECT_EQ(box_recall({{4, 4, 4}, {8, 8, 8}}, l), 0.0);
  EXPECT_EQ(box_recall({{0, 0, 0}, {1, 1, 1}}, LabelVolume({8, 8, 8})), 1.0);
}

TEST(Crop, NativeSizeCropCopiesVoxels) {
  ImageVolume v({5, 6, 7});
  for (std::size_t i = 0; i < v.size(); ++i) v.values[i] = float(i) * 0.25f;
  ImageVolume c({6, 6, 6});
  for (std::size_t i = 0; i < c.size(); ++i) c.values[i] = float(i % 13);
  EXPECT_EQ(crop_resample(c, {{0, 0, 0}, {6, 6, 6}}, 6, Interp::Trilinear), c);
  EXPECT_EQ(crop_resample(c, {{0, 0, 0}, {6, 6, 6}}, 6, Interp::Nearest), c);
  const ImageVolume sub = crop_resample(v, {{1, 2, 3}, {4, 5, 6}}, 3, Interp::Trilinear);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(sub.at(z, y, x), v.at(z + 1, y + 2, x + 3));
}

TEST(Crop, DownsamplingAveragesPairs) {
  // 8 voxels to 4: output o samples source 2o + 0.5
  ImageVolume v({8, 8, 8});
  for (std::size_t z = 0; z < 8; ++z)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) v.at(z, y, x) = float(x);
  const ImageVolume c = crop_resample(v, {{0, 0, 0}, {8, 8, 8}}, 4, Interp::Trilinear);
  for (std::size_t x = 0; x < 4; ++x) EXPECT_FLOAT_EQ(c.at(1, 2, x), 2.0f * float(x) + 0.5f);
  EXPECT_DOUBLE_EQ(c.spacing[0], 2.0);
}

TEST(Crop, UpsamplingClampsAtTheBoxEdge) {
  EXPECT_DOUBLE_EQ(detail::resample_coord(10, 4, 8, 0), 10.0);  // 10 - 0.25 clamps to 10
  EXPECT_DOUBLE_EQ(detail::resample_coord(10, 4, 8, 1), 10.25);
  EXPECT_DOUBLE_EQ(detail::resample_coord(10, 4, 8, 7), 13.0);
}

TEST(Crop, NearestKeepsLabelsBinary) {
  const Phantom ph = generate_phantom(1, 32);
  const BoundingBox b = expand_margin(label_extent(ph.label), 4, ph.label.dims);
  const LabelVolume c = crop_resample(ph.label, b, 20, Interp::Nearest);
  std::size_t fg = 0;
  for (auto v : c.values) {
    ASSERT_LE(v, 1);
    fg += v;
  }
  EXPECT_GT(fg, 0u);
}

TEST(Crop, RejectsBoxesOutsideTheVolume) {
  const ImageVolume v({4, 4, 4});
  EXPECT_THROW(crop_resample(v, {{0, 0, 0}, {5, 4, 4}}, 4, Interp::Nearest), ContractError);
  EXPECT_THROW(crop_resample(v, {{2, 0, 0}, {2, 4, 4}}, 4, Interp::Nearest), ContractError);
}

TEST(Paste, InvertsCropAtNativeResolution) {
  const Phantom ph = generate_phantom(2, 32);
  const BoundingBox b{{4, 5, 6}, {20, 21, 22}};
  const ImageVolume crop = crop_resample(ph.image, b, 16, Interp::Trilinear);
  const ImageVolume back = paste_back(crop, b, ph.image.dims, Interp::Trilinear, -1.0f);
  for (std::size_t z = 0; z < 32; ++z)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const float want = b.contains(long(z), long(y), long(x)) ? ph.image.at(z, y, x) : -1.0f;
        ASSERT_EQ(back.at(z, y, x), want);
      }
}

TEST(Paste, ResampledRoundTripPreservesLabels) {
  const Phantom ph = generate_phantom(3, 64);
  const BoundingBox b = expand_margin(label_extent(ph.label), 6, ph.label.dims);
  const LabelVolume crop = crop_resample(ph.label, b, 48, Interp::Nearest);
  const LabelVolume back = paste_back(crop, b, ph.label.dims, Interp::Nearest, std::uint8_t{0});
  std::size_t a = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < back.size(); ++i) {
    a += back.values[i];
    g += ph.label.values[i];
    both += back.values[i] & ph.label.values[i];
  }
  EXPECT_GT(2.0 * double(both) / double(a + g), 0.9);
}

TEST(Features, LayoutAndHistogram) {
  ImageVolume v({16, 16, 16}, 0.5f);
  const std::vector<float> f = extract_features(v);
  ASSERT_EQ(f.size(), kFeatureCount);
  EXPECT_EQ(kFeatureCount, 528u);
  for (std::size_t i = 0; i < 512; ++i) EXPECT_FLOAT_EQ(f[i], 0.5f);
  for (std::size_t b = 0; b < 16; ++b) EXPECT_EQ(f[512 + b], b == 8 ? 1.0f : 0.0f);
  v.values[0] = -3.0f;
  v.values[1] = 7.0f;
  const std::vector<float> g = extract_features(v);
  EXPECT_FLOAT_EQ(g[512], 1.0f / 4096.0f);
  EXPECT_FLOAT_EQ(g[527], 1.0f / 4096.0f);
}

struct ForestData {
  std::vector<Phantom> phantoms;
  std::vector<ForestSample> samples;
};

const ForestData& forest_data() {
  static const ForestData data = [] {
    ForestData d;
    for (std::uint64_t s = 0; s < 24; ++s) {
      d.phantoms.push_back(generate_phantom(1000 + s, 32));
      d.samples.push_back({extract_features(d.phantoms.back().image), box_target(label_extent(d.phantoms.back().label))});
    }
    return d;
  }();
  return data;
}

TEST(Forest, DeterministicForSeed) {
  const auto& d = forest_data();
  const std::vector<ForestSample> train(d.samples.begin(), d.samples.begin() + 16);
  const RegressionForest a = train_forest(train, {8, 6, 3});
  const RegressionForest b = train_forest(train, {8, 6, 3});
  const RegressionForest c = train_forest(train, {8, 6, 4});
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.trees.size(), 8u);
  for (const RegressionTree& t : a.trees) EXPECT_LE(t.nodes.size(), (1u << 7) - 1);
}

TEST(Forest, PredictionsStayWithinTrainingTargets) {
  const auto& d = forest_data();
  const std::vector<ForestSample> train(d.samples.begin(), d.samples.begin() + 16);
  const RegressionForest f = train_forest(train, {16, 6, 1});
  for (std::size_t i = 16; i < d.samples.size(); ++i) {
    const BoxTarget t = predict_target(f, d.samples[i].features);
    for (int c = 0; c < 6; ++c) {
      double lo = 1e9, hi = -1e9;
      for (const ForestSample& s : train) {
        lo = std::min(lo, s.target[c]);
        hi = std::max(hi, s.target[c]);
      }
      EXPECT_GE(t[c], lo - 1e-4);
      EXPECT_LE(t[c], hi + 1e-4);
    }
  }
}

TEST(Forest, HeldOutRecallWithMargin) {
  const auto& d = forest_data();
  const std::vector<ForestSample> train(d.samples.begin(), d.samples.begin() + 16);
  const RegressionForest f = train_forest(train, {32, 8, 2});
  double recall = 0.0;
  for (std::size_t i = 16; i < d.samples.size(); ++i) {
    const Phantom& ph = d.phantoms[i];
    recall += box_recall(expand_margin(predict_box(f, ph.image), 5, ph.image.dims), ph.label);
  }
  EXPECT_GT(recall / 8.0, 0.95);
}

TEST(Forest, OutOfBagMarginCoversHeldOutCases) {
  const auto& d = forest_data();
  const std::vector<ForestSample> train(d.samples.begin(), d.samples.begin() + 16);
  const RegressionForest f = train_forest(train, {32, 8, 2});
  EXPECT_GT(f.oob_margin, 0);
  EXPECT_LT(f.oob_margin, 16);
  for (std::size_t i = 16; i < d.samples.size(); ++i) {
    const Phantom& ph = d.phantoms[i];
    EXPECT_EQ(box_recall(expand_margin(predict_box(f, ph.image), f.oob_margin, ph.image.dims), ph.label), 1.0) << i;
  }
}

TEST(Forest, CoverageDeficitRoundsOutwards) {
  EXPECT_EQ(detail::coverage_deficit({2.5, 3, 4, 9.5, 10, 11}, {2, 3, 4, 10, 10, 11}), 0);
  EXPECT_EQ(detail::coverage_deficit({5.2, 3, 4, 10, 10, 11}, {2, 3, 4, 10, 10, 11}), 3);
  EXPECT_EQ(detail::coverage_deficit({2, 3, 4, 10, 10, 6.5}, {2, 3, 4, 10, 10, 11}), 4);
}

TEST(Forest, SerializationRoundTrip) {
  const auto& d = forest_data();
  const RegressionForest f = train_forest(d.samples, {4, 5, 9});
  test::TempDir dir("forest");
  save_forest(f, dir.file("f.bin"));
  const RegressionForest g = load_forest(dir.file("f.bin"));
  EXPECT_EQ(f, g);
  EXPECT_EQ(predict_box(f, d.phantoms[0].image), predict_box(g, d.phantoms[0].image));
}

TEST(Forest, ContractViolations) {
  const auto& d = forest_data();
  EXPECT_THROW(train_forest({d.samples[0]}, {4, 4, 0}), ContractError);
  EXPECT_THROW(train_forest(d.samples, {0, 4, 0}), UsageError);
  EXPECT_THROW(predict_target(RegressionForest{}, d.samples[0].features), ContractError);
  const RegressionForest f = train_forest(d.samples, {2, 3, 0});
  EXPECT_THROW(predict_target(f, std::vector<float>(3)), ContractError);
}

}  // namespace
}  // namespace vseg
