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

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "vseg/conv.hpp"
#include "vseg/ops.hpp"
#include "vseg/pool.hpp"

namespace vseg {
namespace {

using test::fd_max_error;
using test::random_tensor;

// Straight six-deep loop over the receptive field, independent of the library.
Tensor5<double> conv_oracle(const Tensor5<double>& in, const Tensor5<double>& w, const Tensor5<double>& b) {
  const Shape5 s = in.shape();
  const Shape5 ws = w.shape();
  const long k = long(ws.d), p = (k - 1) / 2;
  Tensor5<double> out(Shape5{s.n, ws.n, s.d, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (long z = 0; z < long(s.d); ++z)
        for (long y = 0; y < long(s.h); ++y)
          for (long x = 0; x < long(s.w); ++x) {
            double acc = b[o];
            for (std::size_t c = 0; c < s.c; ++c)
              for (long a = 0; a < k; ++a)
                for (long bb = 0; bb < k; ++bb)
                  for (long e = 0; e < k; ++e) {
                    const long zz = z + a - p, yy = y + bb - p, xx = x + e - p;
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= long(s.d) || yy >= long(s.h) || xx >= long(s.w)) continue;
                    acc += w.at(o, c, a, bb, e) * in.at(n, c, zz, yy, xx);
                  }
            out.at(n, o, z, y, x) = acc;
          }
  return out;
}

// ---------------------------------------------------------------------------
// conv3d

TEST(Conv3d, OnesKernelCountsNeighbours) {
  Tensor5<double> in(Shape5{1, 1, 3, 3, 3}, 1.0);
  Tensor5<double> w(Shape5{1, 1, 3, 3, 3}, 1.0);
  Tensor5<double> b(Shape5{1, 1, 1, 1, 1}, 0.0);
  for (ConvAlgo algo : {ConvAlgo::Direct, ConvAlgo::Fast}) {
    const Tensor5<double> out = conv3d_forward(in, w, b, algo);
    EXPECT_EQ(out.at(0, 0, 1, 1, 1), 27.0);
    EXPECT_EQ(out.at(0, 0, 0, 0, 0), 8.0);
    EXPECT_EQ(out.at(0, 0, 2, 2, 2), 8.0);
    EXPECT_EQ(out.at(0, 0, 0, 1, 1), 18.0);
    EXPECT_EQ(out.at(0, 0, 0, 0, 1), 12.0);
  }
}

TEST(Conv3d, DiracKernelIsIdentity) {
  const Tensor5<double> in = random_tensor({2, 1, 4, 5, 6}, 1);
  Tensor5<double> w(Shape5{1, 1, 3, 3, 3}, 0.0);
  w.at(0, 0, 1, 1, 1) = 1.0;
  const Tensor5<double> b(Shape5{1, 1, 1, 1, 1}, 0.0);
  EXPECT_EQ(conv3d_forward(in, w, b, ConvAlgo::Direct), in);
  EXPECT_EQ(conv3d_forward(in, w, b, ConvAlgo::Fast), in);
}

TEST(Conv3d, ZeroInputGivesBias) {
  const Tensor5<float> in(Shape5{1, 3, 4, 4, 4}, 0.0f);
  Tensor5<float> w = random_tensor({2, 3, 3, 3, 3}, 2).cast<float>();
  Tensor5<float> b(Shape5{1, 2, 1, 1, 1});
  b[0] = 0.25f;
  b[1] = -1.5f;
  const Tensor5<float> out = conv3d_forward(in, w, b);
  for (std::size_t o = 0; o < 2; ++o)
    for (float v : out.channel(0, o)) EXPECT_EQ(v, b[o]);
}

TEST(Conv3d, MatchesLoopOracle) {
  for (std::size_t k : {1u, 3u, 5u}) {
    const Tensor5<double> in = random_tensor({2, 3, 5, 4, 6}, 10 + k);
    const Tensor5<double> w = random_tensor({4, 3, k, k, k}, 20 + k);
    const Tensor5<double> b = random_tensor({1, 4, 1, 1, 1}, 30 + k);
    const Tensor5<double> want = conv_oracle(in, w, b);
    const Tensor5<double> got = conv3d_forward(in, w, b);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << "k=" << k << " i=" << i;
  }
}

TEST(Conv3d, FastPathIsBitExactWithDirect) {
  // Channel counts straddle the register-block widths.
  for (std::size_t co : {1u, 7u, 8u, 17u, 33u})
    for (std::size_t k : {1u, 3u}) {
      const Tensor5<double> in = random_tensor({2, 5, 6, 7, 9}, co * 7 + k);
      const Tensor5<double> w = random_tensor({co, 5, k, k, k}, co * 11 + k);
      const Tensor5<double> b = random_tensor({1, co, 1, 1, 1}, co * 13 + k);
      EXPECT_EQ(conv3d_forward(in, w, b, ConvAlgo::Fast), conv3d_forward(in, w, b, ConvAlgo::Direct))
          << "co=" << co << " k=" << k;
      const Tensor5<float> fi = in.cast<float>(), fw = w.cast<float>(), fb = b.cast<float>();
      EXPECT_EQ(conv3d_forward(fi, fw, fb, ConvAlgo::Fast), conv3d_forward(fi, fw, fb, ConvAlgo::Direct));
    }
}

TEST(Conv3d, PreservesSpatialShapeForOddKernels) {
  for (std::size_t k : {1u, 3u, 5u, 7u}) {
    const Tensor5<float> in(Shape5{1, 2, 3, 8, 5}, 1.0f);
    const Tensor5<float> w(Shape5{3, 2, k, k, k}, 0.1f);
    const Tensor5<float> b(Shape5{1, 3, 1, 1, 1});
    EXPECT_EQ(conv3d_forward(in, w, b).shape(), (Shape5{1, 3, 3, 8, 5}));
  }
}

TEST(Conv3d, RejectsChannelMismatchAndEvenKernels) {
  const Tensor5<float> in(Shape5{1, 2, 4, 4, 4});
  EXPECT_THROW(conv3d_forward(in, Tensor5<float>(Shape5{1, 3, 3, 3, 3}), Tensor5<float>(Shape5{1, 1, 1, 1, 1})),
               ContractError);
  EXPECT_THROW(ConvLayer<float>("c", 2, 2, 2), ContractError);
}

TEST(Conv3d, BackwardParamsMatchesOracle) {
  const Tensor5<double> in = random_tensor({2, 3, 4, 5, 6}, 5);
  const Tensor5<double> go = random_tensor({2, 20, 4, 5, 6}, 6);
  Parameter<double> w("w", Tensor5<double>(Shape5{20, 3, 3, 3, 3}));
  Parameter<double> b("b", Tensor5<double>(Shape5{1, 20, 1, 1, 1}));
  conv3d_backward_params(in, go, w, b);
  for (std::size_t o = 0; o < 20; ++o) {
    double sb = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (double g : go.channel(n, o)) sb += g;
    EXPECT_NEAR(b.grad[o], sb, 1e-12);
    for (std::size_t c = 0; c < 3; ++c)
      for (long a = 0; a < 3; ++a)
        for (long bb = 0; bb < 3; ++bb)
          for (long e = 0; e < 3; ++e) {
            double s = 0.0;
            for (std::size_t n = 0; n < 2; ++n)
              for (long z = 0; z < 4; ++z)
                for (long y = 0; y < 5; ++y)
                  for (long x = 0; x < 6; ++x) {
                    const long zz = z + a - 1, yy = y + bb - 1, xx = x + e - 1;
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= 4 || yy >= 5 || xx >= 6) continue;
                    s += go.at(n, o, z, y, x) * in.at(n, c, zz, yy, xx);
                  }
            EXPECT_NEAR(w.grad.at(o, c, a, bb, e), s, 1e-11);
          }
  }
}

// ---------------------------------------------------------------------------
// pooling and upsampling

TEST(MaxPool, EnumeratedBlock) {
  Tensor5<float> in(Shape5{1, 1, 2, 2, 2});
  std::iota(in.values().begin(), in.values().end(), 1.0f);
  const auto r = maxpool3d_forward(in);
  EXPECT_EQ(r.out.shape(), (Shape5{1, 1, 1, 1, 1}));
  EXPECT_EQ(r.out[0], 8.0f);
}

TEST(MaxPool, ConstantVolume) {
  const Tensor5<float> in(Shape5{1, 1, 4, 4, 4}, 3.5f);
  const auto r = maxpool3d_forward(in);
  EXPECT_EQ(r.out, Tensor5<float>(Shape5{1, 1, 2, 2, 2}, 3.5f));
}

TEST(MaxPool, MatchesBlockScan) {
  const Tensor5<double> in = random_tensor({2, 3, 4, 4, 4}, 77);
  const auto r = maxpool3d_forward(in);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t y = 0; y < 2; ++y)
          for (std::size_t x = 0; x < 2; ++x) {
            double m = -1e300;
            for (std::size_t i = 0; i < 8; ++i)
              m = std::max(m, in.at(n, c, 2 * z + (i >> 2), 2 * y + ((i >> 1) & 1), 2 * x + (i & 1)));
            EXPECT_EQ(r.out.at(n, c, z, y, x), m);
          }
}

TEST(MaxPool, TiesRouteToLowestIndex) {
  const Tensor5<double> in(Shape5{1, 1, 2, 2, 2}, 1.0);
  Tape<double> tape;
  const Var x = tape.leaf(in, true);
  const Var l = sum(tape, maxpool3d(tape, x));
  tape.backward(l);
  EXPECT_EQ(tape.grad(x)[0], 1.0);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_EQ(tape.grad(x)[i], 0.0);
}

TEST(MaxPool, OddAxisIsNamed) {
  try {
    maxpool3d_forward(Tensor5<float>(Shape5{1, 1, 4, 3, 4}));
    FAIL() << "expected an error";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos) << e.what();
  }
}

TEST(Upsample, SingleVoxel) {
  const Tensor5<float> in(Shape5{1, 1, 1, 1, 1}, 5.0f);
  EXPECT_EQ(upsample_nearest2x_forward(in), Tensor5<float>(Shape5{1, 1, 2, 2, 2}, 5.0f));
}

TEST(Upsample, IndexMapping) {
  Tensor5<float> in(Shape5{1, 2, 2, 2, 2});
  std::iota(in.values().begin(), in.values().end(), 0.0f);
  const Tensor5<float> out = upsample_nearest2x_forward(in);
  ASSERT_EQ(out.shape(), (Shape5{1, 2, 4, 4, 4}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t z = 0; z < 4; ++z)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(0, c, z, y, x), in.at(0, c, z / 2, y / 2, x / 2));
}

TEST(Upsample, PoolInvertsUpsample) {
  const Tensor5<double> in = random_tensor({2, 3, 3, 2, 4}, 8);
  EXPECT_EQ(maxpool3d_forward(upsample_nearest2x_forward(in)).out, in);
}

TEST(Upsample, BackwardSumsChildren) {
  const Tensor5<double> g = random_tensor({1, 1, 4, 4, 4}, 9);
  const Tensor5<double> back = upsample_nearest2x_backward(g);
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) {
        double s = 0.0;
        for (std::size_t i = 0; i < 8; ++i) s += g.at(0, 0, 2 * z + (i >> 2), 2 * y + ((i >> 1) & 1), 2 * x + (i & 1));
        EXPECT_NEAR(back.at(0, 0, z, y, x), s, 1e-15);
      }
}

TEST(PoolProperty, RepoolingAfterUpsampleKeepsArgmaxValues) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor5<double> in = random_tensor({1, 2, 4, 6, 2}, 100 + seed);
    const auto pooled = maxpool3d_forward(in).out;
    EXPECT_EQ(maxpool3d_forward(upsample_nearest2x_forward(pooled)).out, pooled);
  }
}

// ---------------------------------------------------------------------------
// batch norm

TEST(BatchNorm, ConstantChannelGivesBeta) {
  BatchNorm<double> bn("bn", 2);
  bn.beta.value[0] = 0.75;
  bn.beta.value[1] = -2.0;
  Tensor5<double> in(Shape5{2, 2, 2, 2, 2});
  for (std::size_t n = 0; n < 2; ++n) {
    for (double& v : in.channel(n, 0)) v = 3.0;
    for (double& v : in.channel(n, 1)) v = -4.0;
  }
  Tape<double> tape;
  const Tensor5<double>& out = tape.value(batchnorm(tape, tape.leaf(in), bn, Mode::Train));
  for (std::size_t n = 0; n < 2; ++n) {
    for (double v : out.channel(n, 0)) EXPECT_EQ(v, 0.75);
    for (double v : out.channel(n, 1)) EXPECT_EQ(v, -2.0);
  }
}

TEST(BatchNorm, TwoVoxelClosedForm) {
  BatchNorm<double> bn("bn", 1);
  const Tensor5<double> in(Shape5{1, 1, 1, 1, 2}, std::vector<double>{-1.0, 1.0});
  Tape<double> tape;
  const Tensor5<double>& out = tape.value(batchnorm(tape, tape.leaf(in), bn, Mode::Train));
  const double want = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(out[0], -want, 1e-15);
  EXPECT_NEAR(out[1], want, 1e-15);
}

TEST(BatchNorm, InferBeforeTrainingIsAnError) {
  BatchNorm<float> bn("bn", 1);
  EXPECT_THROW(batchnorm_infer(Tensor5<float>(Shape5{1, 1, 2, 2, 2}), bn), ContractError);
  bn.set_running({0.0f}, {1.0f});
  EXPECT_NO_THROW(batchnorm_infer(Tensor5<float>(Shape5{1, 1, 2, 2, 2}), bn));
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
  BatchNorm<double> bn("bn", 1, 1e-5, 0.9);
  Tape<double> tape;
  batchnorm(tape, tape.leaf(Tensor5<double>(Shape5{1, 1, 1, 1, 2}, std::vector<double>{1.0, 3.0})), bn, Mode::Train);
  EXPECT_DOUBLE_EQ(bn.running_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(bn.running_var[0], 1.0);
  batchnorm(tape, tape.leaf(Tensor5<double>(Shape5{1, 1, 1, 1, 2}, std::vector<double>{5.0, 9.0})), bn, Mode::Train);
  EXPECT_DOUBLE_EQ(bn.running_mean[0], 0.9 * 2.0 + 0.1 * 7.0);
  EXPECT_DOUBLE_EQ(bn.running_var[0], 0.9 * 1.0 + 0.1 * 4.0);
}

// ---------------------------------------------------------------------------
// elementwise ops and concat

TEST(Elementwise, ReluAndSigmoid) {
  const Tensor5<float> in(Shape5{1, 1, 1, 1, 3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
  EXPECT_EQ(relu_forward(in).values()[0], 0.0f);
  EXPECT_EQ(relu_forward(in).values()[1], 0.0f);
  EXPECT_EQ(relu_forward(in).values()[2], 2.0f);
  EXPECT_EQ(sigmoid_forward(Tensor5<float>(Shape5{}, 0.0f))[0], 0.5f);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  Tape<double> tape;
  const Var x = tape.leaf(Tensor5<double>(Shape5{1, 1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0}), true);
  tape.backward(sum(tape, relu(tape, x)));
  EXPECT_EQ(tape.grad(x)[0], 0.0);
  EXPECT_EQ(tape.grad(x)[1], 0.0);
  EXPECT_EQ(tape.grad(x)[2], 1.0);
}

TEST(Elementwise, SigmoidStaysInOpenInterval) {
  const Tensor5<float> in(Shape5{1, 1, 1, 1, 4}, std::vector<float>{-200.0f, -50.0f, 50.0f, 200.0f});
  const Tensor5<float> out = sigmoid_forward(in);
  for (float v : out.values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Concat, SlicesRecoverable) {
  const Tensor5<double> a = random_tensor({2, 3, 2, 3, 2}, 1);
  const Tensor5<double> b = random_tensor({2, 5, 2, 3, 2}, 2);
  const Tensor5<double> ab = concat_channels_forward(a, b);
  ASSERT_EQ(ab.shape(), (Shape5{2, 8, 2, 3, 2}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 8; ++c) {
      auto got = ab.channel(n, c);
      auto want = c < 3 ? a.channel(n, c) : b.channel(n, c - 3);
      EXPECT_TRUE(std::equal(got.begin(), got.end(), want.begin()));
    }
}

TEST(Concat, AssociativeInShapeAndValues) {
  const Tensor5<double> a = random_tensor({1, 2, 2, 2, 2}, 3);
  const Tensor5<double> b = random_tensor({1, 1, 2, 2, 2}, 4);
  const Tensor5<double> c = random_tensor({1, 4, 2, 2, 2}, 5);
  EXPECT_EQ(concat_channels_forward(concat_channels_forward(a, b), c),
            concat_channels_forward(a, concat_channels_forward(b, c)));
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  Tape<float> tape;
  const Var a = tape.leaf(Tensor5<float>(Shape5{1, 2, 2, 2, 2}));
  const Var b = tape.leaf(Tensor5<float>(Shape5{1, 3, 2, 2, 2}));
  try {
    add(tape, a, b);
    FAIL();
  } catch (const ContractError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find(Shape5{1, 2, 2, 2, 2}.str()), std::string::npos) << m;
    EXPECT_NE(m.find(Shape5{1, 3, 2, 2, 2}.str()), std::string::npos) << m;
  }
  EXPECT_THROW(concat_channels(tape, a, tape.leaf(Tensor5<float>(Shape5{1, 1, 2, 2, 3}))), ContractError);
}

// ---------------------------------------------------------------------------
// tape

TEST(Tape, SumGivesOnes) {
  Tape<double> tape;
  const Var x = tape.leaf(random_tensor({2, 2, 2, 2, 2}, 1), true);
  tape.backward(sum(tape, x));
  for (double g : tape.grad(x).values()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, SigmoidOfScaledInputMatchesClosedForm) {
  const double w = 0.7, xv = -1.3;
  ConvLayer<double> layer("c", 1, 1, 1);
  layer.weight.value[0] = w;
  Tape<double> tape;
  const Var x = tape.leaf(Tensor5<double>(Shape5{}, xv), true);
  tape.backward(sum(tape, sigmoid(tape, conv3d(tape, x, layer))));
  const double s = 1.0 / (1.0 + std::exp(-w * xv));
  EXPECT_NEAR(layer.weight.grad[0], s * (1.0 - s) * xv, 1e-15);
  EXPECT_NEAR(tape.grad(x)[0], s * (1.0 - s) * w, 1e-15);
}

TEST(Tape, NonScalarLossAndSecondBackwardAreErrors) {
  Tape<double> tape;
  const Var x = tape.leaf(Tensor5<double>(Shape5{1, 1, 1, 1, 2}), true);
  EXPECT_THROW(tape.backward(x), ContractError);
  const Var l = sum(tape, x);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), ContractError);
}

TEST(Tape, DanglingReferenceIsAnError) {
  Tape<double> tape;
  EXPECT_THROW(relu(tape, Var{3}), ContractError);
}

// ---------------------------------------------------------------------------
// finite-difference gradient checks (64-bit, h = 1e-4, tolerance 1e-5)

constexpr double kTol = 1e-5;

using test::check_op;

TEST(GradCheck, Conv3d) {
  for (std::size_t k : {1u, 3u}) {
    ConvLayer<double> layer("c", 3, 2, k);
    layer.weight.value = random_tensor(layer.weight.value.shape(), 40 + k);
    layer.bias.value = random_tensor(layer.bias.value.shape(), 50 + k);
    const double err = check_op(random_tensor({2, 3, 4, 4, 4}, 60 + k),
                                [&](Tape<double>& t, Var x) { return conv3d(t, x, layer); }, {&layer.weight, &layer.bias}, 1);
    EXPECT_LT(err, kTol) << "k=" << k;
  }
}

TEST(GradCheck, MaxPool) {
  const double err =
      check_op(random_tensor({2, 3, 4, 4, 4}, 61), [](Tape<double>& t, Var x) { return maxpool3d(t, x); }, {}, 2);
  EXPECT_LT(err, kTol);
}

TEST(GradCheck, Upsample) {
  const double err =
      check_op(random_tensor({2, 3, 2, 2, 2}, 62), [](Tape<double>& t, Var x) { return upsample_nearest2x(t, x); }, {}, 3);
  EXPECT_LT(err, kTol);
}

TEST(GradCheck, BatchNormTrain) {
  BatchNorm<double> bn("bn", 3);
  bn.gamma.value = random_tensor(bn.gamma.value.shape(), 63, 0.5, 1.5);
  bn.beta.value = random_tensor(bn.beta.value.shape(), 64);
  const double err = check_op(random_tensor({2, 3, 4, 4, 4}, 65),
                              [&](Tape<double>& t, Var x) { return batchnorm(t, x, bn, Mode::Train); },
                              {&bn.gamma, &bn.beta}, 4);
  EXPECT_LT(err, kTol);
}

TEST(GradCheck, BatchNormInfer) {
  BatchNorm<double> bn("bn", 3);
  bn.set_running({0.1, -0.2, 0.3}, {0.5, 1.5, 0.9});
  bn.gamma.value = random_tensor(bn.gamma.value.shape(), 66, 0.5, 1.5);
  const double err = check_op(random_tensor({2, 3, 2, 2, 2}, 67),
                              [&](Tape<double>& t, Var x) { return batchnorm(t, x, bn, Mode::Infer); },
                              {&bn.gamma, &bn.beta}, 5);
  EXPECT_LT(err, kTol);
}

TEST(GradCheck, Relu) {
  // Inputs kept at least 1e-2 away from the kink.
  Tensor5<double> in = random_tensor({2, 3, 4, 4, 4}, 68);
  for (double& v : in.values())
    if (std::abs(v) < 1e-2) v = 0.5;
  EXPECT_LT(check_op(in, [](Tape<double>& t, Var x) { return relu(t, x); }, {}, 6), kTol);
}

TEST(GradCheck, Sigmoid) {
  EXPECT_LT(check_op(random_tensor({2, 3, 4, 4, 4}, 69), [](Tape<double>& t, Var x) { return sigmoid(t, x); }, {}, 7),
            kTol);
}

TEST(GradCheck, AddAndConcat) {
  const Tensor5<double> other = random_tensor({2, 3, 4, 4, 4}, 70);
  EXPECT_LT(check_op(random_tensor({2, 3, 4, 4, 4}, 71),
                     [&](Tape<double>& t, Var x) { return add(t, x, t.leaf(other)); }, {}, 8),
            kTol);
  EXPECT_LT(check_op(random_tensor({2, 3, 4, 4, 4}, 72),
                     [&](Tape<double>& t, Var x) { return concat_channels(t, t.leaf(other), x); }, {}, 9),
            kTol);
  EXPECT_LT(check_op(random_tensor({2, 3, 4, 4, 4}, 73), [&](Tape<double>& t, Var x) { return add(t, x, x); }, {}, 10),
            kTol);
}

// ---------------------------------------------------------------------------
// determinism

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  ConvLayer<float> layer("c", 4, 9, 3);
  layer.weight.value = random_tensor(layer.weight.value.shape(), 1).cast<float>();
  const Tensor5<float> in = random_tensor({2, 4, 6, 6, 6}, 2).cast<float>();
  const Tensor5<float> a = conv3d_forward(in, layer.weight.value, layer.bias.value);
  const Tensor5<float> b = conv3d_forward(in, layer.weight.value, layer.bias.value);
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace vseg
