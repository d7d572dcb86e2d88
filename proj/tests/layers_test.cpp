// Copyright 2026  The HVector Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hvector/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "hvector/rng.hpp"
#include "hvector/tensor.hpp"

using namespace hvector;

namespace {

std::vector<double> RandomValues(std::size_t n, Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.Uniform(lo, hi);
  return v;
}

Tensor RandomConstant(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto v = RandomValues(NumElements(shape), rng, lo, hi);
  return Tensor::Constant(std::move(shape), std::move(v));
}

// Checks every tensor in a parameter struct against finite differences of
// the given scalar loss builder.
template <typename Params>
void CheckParamGradients(Params& params, const std::function<Tensor()>& loss,
                         double tol) {
  params.Visit("p", [&](const std::string& name, Tensor& t) {
    auto f = [&](const Tensor&) { return loss(); };
    EXPECT_LT(GradCheck(f, t), tol) << "parameter " << name;
  });
}

}  // namespace

TEST(Dense, IdentityPassThrough) {
  DenseParams p;
  p.W = Tensor::Parameter({2, 2}, {1, 0, 0, 1});
  p.b = Tensor::Zeros({1, 2}, true);
  p.activation = Activation::kNone;
  Tensor x = Tensor::Constant({3, 2}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(DenseForward(p, x).values(), x.values());
}

TEST(Dense, TableDimensions) {
  Rng rng(1);
  DenseParams p = InitDense(3000, 512, Activation::kRelu, rng);
  Tensor x = RandomConstant({1, 3000}, rng);
  EXPECT_EQ(DenseForward(p, x).shape(), (Shape{1, 512}));
}

TEST(Dense, GradcheckAwayFromKinks) {
  Rng rng(2);
  DenseParams p = InitDense(4, 3, Activation::kRelu, rng);
  Tensor x = RandomConstant({2, 4}, rng, 0.5, 1.5);
  auto loss = [&] {
    Tensor y = DenseForward(p, x);
    return Sum(Mul(y, y));
  };
  CheckParamGradients(p, loss, 1e-6);
}

TEST(Tdnn, IdentityWeightsGiveRelu) {
  TdnnLayerParams p;
  p.W = Tensor::Parameter({2, 2}, {1, 0, 0, 1});
  p.b = Tensor::Zeros({1, 2}, true);
  Tensor x = Tensor::Constant({3, 2}, {-1, 2, 0.5, -3, 4, 5});
  Tensor out = TdnnForward(p, x, nullptr);
  const std::vector<double> expected{0, 2, 0.5, 0, 4, 5};
  EXPECT_EQ(out.values(), expected);
}

TEST(Tdnn, FrameLevelTableShape) {
  Rng rng(3);
  TdnnLayerParams p = InitTdnn(20, 256, rng);
  BatchNormParams bn = InitBatchNorm(256);
  Tensor x = RandomConstant({20, 20}, rng);
  EXPECT_EQ(TdnnForward(p, x, &bn).shape(), (Shape{20, 256}));
}

TEST(Tdnn, WidthMismatchRejected) {
  Rng rng(4);
  TdnnLayerParams p = InitTdnn(8, 4, rng);
  Tensor x = RandomConstant({5, 7}, rng);
  EXPECT_THROW(TdnnForward(p, x, nullptr), ShapeError);
}

TEST(Tdnn, GradcheckThroughBatchNorm) {
  Rng rng(5);
  TdnnLayerParams p = InitTdnn(4, 3, rng);
  BatchNormParams bn = InitBatchNorm(3);
  Tensor x = RandomConstant({6, 4}, rng, 0.2, 1.2);
  auto loss = [&] {
    Tensor y = TdnnForward(p, x, &bn);
    return Sum(Mul(y, y));
  };
  CheckParamGradients(p, loss, 1e-4);
  CheckParamGradients(bn, loss, 1e-4);
}

TEST(BatchNorm, TrainModeNormalizes) {
  Rng rng(6);
  BatchNormParams bn = InitBatchNorm(3);
  Tensor x = RandomConstant({16, 3}, rng, -4.0, 2.0);
  Tensor out = BatchNormForward(bn, x);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 16; ++r) mean += out.at(r, c);
    mean /= 16;
    double var = 0.0;
    for (std::size_t r = 0; r < 16; ++r) {
      const double d = out.at(r, c) - mean;
      var += d * d;
    }
    var /= 16;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-3);
  }
}

TEST(BatchNorm, EvalModeIsAffineIdentity) {
  BatchNormParams bn = InitBatchNorm(2);
  bn.mode = Mode::kEval;
  Tensor x = Tensor::Constant({3, 2}, {1, -2, 0.5, 3, -1, 4});
  Tensor out = BatchNormForward(bn, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(out.values()[i], x.values()[i], 1e-4);
  }
}

TEST(BatchNorm, RunningStatsConvergeToBatchStats) {
  Rng rng(7);
  BatchNormParams bn = InitBatchNorm(2);
  auto vals = RandomValues(40, rng, 1.0, 3.0);
  Tensor x = Tensor::Constant({20, 2}, vals);
  for (int i = 0; i < 200; ++i) BatchNormForward(bn, x);
  double mean0 = 0.0;
  for (std::size_t r = 0; r < 20; ++r) mean0 += vals[r * 2];
  mean0 /= 20;
  EXPECT_NEAR(bn.running_mean[0], mean0, 1e-6);
}

TEST(BatchNorm, PerBlockNormalizationIsBlockwise) {
  BatchNormParams bn = InitBatchNorm(1);
  // two blocks with different offsets; per-block normalization removes both
  Tensor x = Tensor::Constant({4, 1}, {10.0, 12.0, -5.0, -3.0});
  Tensor out = BatchNormForward(bn, x, /*blocks=*/2);
  EXPECT_NEAR(out.values()[0], -1.0, 1e-4);
  EXPECT_NEAR(out.values()[1], 1.0, 1e-4);
  EXPECT_NEAR(out.values()[2], -1.0, 1e-4);
  EXPECT_NEAR(out.values()[3], 1.0, 1e-4);
}

TEST(BatchNorm, TrainModeGradcheck) {
  Rng rng(8);
  BatchNormParams bn = InitBatchNorm(3);
  Tensor x = Tensor::Parameter({8, 3}, RandomValues(24, rng, -1.0, 1.0));
  auto f = [&](const Tensor& t) {
    Tensor y = BatchNormForward(bn, t, 2);
    return Sum(Mul(y, y));
  };
  EXPECT_LT(GradCheck(f, x), 1e-4);
  auto loss = [&] {
    Tensor y = BatchNormForward(bn, x, 2);
    return Sum(Mul(y, y));
  };
  CheckParamGradients(bn, loss, 1e-4);
}

TEST(BatchNorm, EvalModeGradcheck) {
  Rng rng(9);
  BatchNormParams bn = InitBatchNorm(3);
  bn.mode = Mode::kEval;
  bn.running_mean = {0.3, -0.2, 1.0};
  bn.running_var = {1.5, 0.7, 2.0};
  Tensor x = Tensor::Parameter({4, 3}, RandomValues(12, rng));
  auto f = [&](const Tensor& t) {
    Tensor y = BatchNormForward(bn, t);
    return Sum(Mul(y, y));
  };
  EXPECT_LT(GradCheck(f, x), 1e-6);
}

TEST(BatchNorm, WidthMismatchRejected) {
  BatchNormParams bn = InitBatchNorm(3);
  EXPECT_THROW(BatchNormForward(bn, Tensor::Zeros({2, 4})), ShapeError);
}

TEST(Gru, AllZeroParametersKeepZeroState) {
  GruParams p;
  const std::size_t in = 3, hid = 2;
  p.Wz = Tensor::Zeros({in, hid}, true);
  p.Wr = Tensor::Zeros({in, hid}, true);
  p.Wh = Tensor::Zeros({in, hid}, true);
  p.Uz = Tensor::Zeros({hid, hid}, true);
  p.Ur = Tensor::Zeros({hid, hid}, true);
  p.Uh = Tensor::Zeros({hid, hid}, true);
  p.bz = Tensor::Zeros({1, hid}, true);
  p.br = Tensor::Zeros({1, hid}, true);
  p.bh = Tensor::Zeros({1, hid}, true);
  Rng rng(10);
  Tensor x = RandomConstant({5, in}, rng);
  Tensor out = GruForward(p, x);
  for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Gru, ReversedDirectionMatchesReversedInputBitwise) {
  Rng rng(11);
  GruParams p = InitGru(3, 4, rng);
  const std::size_t steps = 6;
  auto vals = RandomValues(steps * 3, rng);
  std::vector<double> reversed(vals.size());
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy_n(vals.data() + t * 3, 3, reversed.data() + (steps - 1 - t) * 3);
  }
  Tensor x = Tensor::Constant({steps, 3}, vals);
  Tensor xr = Tensor::Constant({steps, 3}, reversed);
  Tensor back = GruForward(p, x, 1, /*reverse=*/true);
  Tensor fwd_on_reversed = GruForward(p, xr, 1, /*reverse=*/false);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(back.at(t, c), fwd_on_reversed.at(steps - 1 - t, c));
    }
  }
}

TEST(Gru, SingleStepMatchesHandComputedCell) {
  // 2-unit cell, one step from zero state: gates reduce to
  // z = sigmoid(x Wz + bz), r unused (state is zero), h = z * tanh(x Wh + bh).
  GruParams p;
  p.Wz = Tensor::Parameter({2, 2}, {0.5, -0.25, 1.0, 0.75});
  p.Wr = Tensor::Parameter({2, 2}, {0.3, 0.1, -0.2, 0.4});
  p.Wh = Tensor::Parameter({2, 2}, {-0.6, 0.2, 0.8, -0.1});
  p.Uz = Tensor::Parameter({2, 2}, {0.11, 0.12, 0.13, 0.14});
  p.Ur = Tensor::Parameter({2, 2}, {0.21, 0.22, 0.23, 0.24});
  p.Uh = Tensor::Parameter({2, 2}, {0.31, 0.32, 0.33, 0.34});
  p.bz = Tensor::Parameter({1, 2}, {0.05, -0.05});
  p.br = Tensor::Parameter({1, 2}, {0.0, 0.1});
  p.bh = Tensor::Parameter({1, 2}, {-0.2, 0.3});
  const double x0 = 0.4, x1 = -0.7;
  Tensor x = Tensor::Constant({1, 2}, {x0, x1});
  Tensor out = GruForward(p, x);

  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double z0 = sigmoid(x0 * 0.5 + x1 * 1.0 + 0.05);
  const double z1 = sigmoid(x0 * -0.25 + x1 * 0.75 - 0.05);
  const double h0 = z0 * std::tanh(x0 * -0.6 + x1 * 0.8 - 0.2);
  const double h1 = z1 * std::tanh(x0 * 0.2 + x1 * -0.1 + 0.3);
  EXPECT_NEAR(out.at(0, 0), h0, 1e-15);
  EXPECT_NEAR(out.at(0, 1), h1, 1e-15);
}

TEST(Gru, WidthMismatchRejected) {
  Rng rng(12);
  GruParams p = InitGru(4, 3, rng);
  EXPECT_THROW(GruForward(p, RandomConstant({5, 6}, rng)), ShapeError);
}

TEST(BiGru, OutputWidthAndBlocks) {
  Rng rng(13);
  GruParams fwd = InitGru(3, 4, rng);
  GruParams bwd = InitGru(3, 4, rng);
  Tensor x = RandomConstant({10, 3}, rng);
  EXPECT_EQ(BiGruForward(fwd, bwd, x).shape(), (Shape{10, 8}));
  // stacked as two blocks of five
  EXPECT_EQ(BiGruForward(fwd, bwd, x, 2).shape(), (Shape{10, 8}));
}

TEST(BiGru, BlockedEqualsPerSegment) {
  Rng rng(14);
  GruParams fwd = InitGru(3, 4, rng);
  GruParams bwd = InitGru(3, 4, rng);
  auto vals = RandomValues(2 * 5 * 3, rng);
  Tensor both = Tensor::Constant({10, 3}, vals);
  Tensor first = Tensor::Constant({5, 3}, {vals.begin(), vals.begin() + 15});
  Tensor second = Tensor::Constant({5, 3}, {vals.begin() + 15, vals.end()});
  Tensor blocked = BiGruForward(fwd, bwd, both, 2);
  Tensor a = BiGruForward(fwd, bwd, first);
  Tensor b = BiGruForward(fwd, bwd, second);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_DOUBLE_EQ(blocked.at(t, c), a.at(t, c));
      EXPECT_DOUBLE_EQ(blocked.at(5 + t, c), b.at(t, c));
    }
  }
}

TEST(BiGru, Gradcheck) {
  Rng rng(15);
  GruParams fwd = InitGru(3, 2, rng);
  GruParams bwd = InitGru(3, 2, rng);
  Tensor x = RandomConstant({4, 3}, rng);
  auto loss = [&] {
    Tensor y = BiGruForward(fwd, bwd, x);
    return Sum(Mul(y, y));
  };
  CheckParamGradients(fwd, loss, 1e-4);
  CheckParamGradients(bwd, loss, 1e-4);
}

TEST(Attention, IdenticalRowsGiveUniformWeights) {
  Rng rng(16);
  AttentionMlpParams p = InitAttention(4, rng);
  std::vector<double> row = RandomValues(4, rng);
  std::vector<double> vals;
  for (int r = 0; r < 6; ++r) vals.insert(vals.end(), row.begin(), row.end());
  Tensor h = Tensor::Constant({6, 4}, vals);
  Tensor alpha = AttentionWeights(p, h);
  EXPECT_EQ(alpha.shape(), (Shape{6, 1}));
  for (double a : alpha.values()) EXPECT_DOUBLE_EQ(a, 1.0 / 6.0);
}

TEST(Attention, ZeroScoreHeadGivesUniformWeights) {
  Rng rng(17);
  AttentionMlpParams p = InitAttention(3, rng);
  p.W1 = Tensor::Zeros({3, 1}, true);
  Tensor h = RandomConstant({5, 3}, rng);
  Tensor alpha = AttentionWeights(p, h);
  for (double a : alpha.values()) EXPECT_DOUBLE_EQ(a, 0.2);
}

TEST(Attention, MatchesDirectFormulaOracle) {
  Rng rng(18);
  const std::size_t t_len = 4, width = 3;
  AttentionMlpParams p = InitAttention(width, rng);
  auto hv = RandomValues(t_len * width, rng);
  Tensor h = Tensor::Constant({t_len, width}, hv);
  Tensor alpha = AttentionWeights(p, h);

  // straight-line evaluation of the two-layer scorer + softmax
  const auto& w0 = p.W0.values();
  const auto& b0 = p.b0.values();
  const auto& w1 = p.W1.values();
  std::vector<double> z(t_len, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < width; ++j) {
      double acc = b0[j];
      for (std::size_t i = 0; i < width; ++i) acc += hv[t * width + i] * w0[i * width + j];
      if (acc < 0.0) acc = 0.0;
      z[t] += acc * w1[j];
    }
  }
  double mx = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    EXPECT_NEAR(alpha.values()[t], z[t] / denom, 1e-12);
  }
}

TEST(Attention, WeightsSumToOnePerBlock) {
  Rng rng(19);
  AttentionMlpParams p = InitAttention(3, rng);
  Tensor h = RandomConstant({12, 3}, rng, -2.0, 2.0);
  Tensor alpha = AttentionWeights(p, h, /*blocks=*/3);
  for (std::size_t b = 0; b < 3; ++b) {
    double sum = 0.0;
    for (std::size_t t = 0; t < 4; ++t) sum += alpha.values()[b * 4 + t];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Attention, Gradcheck) {
  Rng rng(20);
  AttentionMlpParams p = InitAttention(3, rng);
  Tensor h = RandomConstant({5, 3}, rng);
  auto loss = [&] {
    Tensor alpha = AttentionWeights(p, h);
    return Sum(Mul(alpha, alpha));
  };
  CheckParamGradients(p, loss, 1e-4);
}

TEST(Pooling, WeightedConstantRows) {
  Tensor alpha = Tensor::Constant({2, 1}, {0.5, 0.5});
  Tensor h = Tensor::Constant({2, 2}, {2, 2, 2, 2});
  Tensor out = WeightedStatsPool(alpha, h);
  EXPECT_EQ(out.shape(), (Shape{1, 4}));
  EXPECT_DOUBLE_EQ(out.values()[0], 1.0);
  EXPECT_DOUBLE_EQ(out.values()[1], 1.0);
  EXPECT_LE(out.values()[2], std::sqrt(kStdEpsilon) + 1e-12);
  EXPECT_LE(out.values()[3], std::sqrt(kStdEpsilon) + 1e-12);
}

TEST(Pooling, SingleElementSequence) {
  Tensor alpha = Tensor::Constant({1, 1}, {1.0});
  Tensor h = Tensor::Constant({1, 3}, {4.0, -1.0, 2.5});
  Tensor out = WeightedStatsPool(alpha, h);
  EXPECT_DOUBLE_EQ(out.values()[0], 4.0);
  EXPECT_DOUBLE_EQ(out.values()[1], -1.0);
  EXPECT_DOUBLE_EQ(out.values()[2], 2.5);
  for (std::size_t c = 3; c < 6; ++c) {
    EXPECT_LE(out.values()[c], std::sqrt(kStdEpsilon) + 1e-12);
  }
}

TEST(Pooling, FrameLevelWidth) {
  Rng rng(21);
  const std::size_t m = 20, e = 512;
  std::vector<double> av(m, 1.0 / m);
  Tensor alpha = Tensor::Constant({m, 1}, av);
  Tensor h = RandomConstant({m, e}, rng);
  EXPECT_EQ(WeightedStatsPool(alpha, h).shape(), (Shape{1, 2 * e}));
}

TEST(Pooling, LengthMismatchRejected) {
  Tensor alpha = Tensor::Constant({2, 1}, {0.5, 0.5});
  Tensor h = Tensor::Zeros({3, 2});
  EXPECT_THROW(WeightedStatsPool(alpha, h), ShapeError);
}

TEST(Pooling, UnnormalizedWeightsRejected) {
  Tensor alpha = Tensor::Constant({2, 1}, {0.9, 0.4});
  Tensor h = Tensor::Zeros({2, 2});
  EXPECT_THROW(WeightedStatsPool(alpha, h), std::invalid_argument);
}

TEST(Initialization, UniformRangeAndZeroBias) {
  Rng rng(22);
  DenseParams p = InitDense(30, 20, Activation::kRelu, rng);
  const double s = std::sqrt(6.0 / 50.0);
  for (double w : p.W.values()) {
    EXPECT_GE(w, -s);
    EXPECT_LT(w, s);
  }
  for (double b : p.b.values()) EXPECT_DOUBLE_EQ(b, 0.0);
  EXPECT_TRUE(p.W.requires_grad());
}
