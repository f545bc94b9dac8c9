#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <string>

#include "tatrack/core/gradcheck.hpp"
#include "tatrack/core/ops.hpp"
#include "tatrack/core/param.hpp"
#include "tatrack/train/gradcheck_suite.hpp"

using namespace tatrack;
using namespace tatrack::core;

namespace {

using VarD = Var<double>;
using TensorD = Tensor<double>;

VarD leaf(TensorD t) { return VarD(std::move(t), true); }

VarD rand_leaf(Shape s, std::mt19937_64& rng, double stddev = 1.0) {
  return leaf(TensorD::randn(std::move(s), rng, stddev));
}

// Projects a tensor-valued op onto a scalar with fixed random weights so that
// every output coordinate contributes to the checked gradient.
VarD project(const VarD& y, const TensorD& weights) { return sum(mul(y, constant(weights))); }

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  TensorD eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
  auto a = TensorD::randn({3, 3}, rng);
  EXPECT_EQ(matmul(constant(eye), constant(a)).value(), a);
}

TEST(Matmul, HandArithmetic) {
  auto y = matmul(constant(TensorD({2, 2}, {1, 2, 3, 4})), constant(TensorD({2, 1}, {0, 1})));
  EXPECT_EQ(y.value(), TensorD({2, 1}, {2, 4}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(constant(TensorD({2, 3})), constant(TensorD({4, 2})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  VarD a = rand_leaf({4, 5}, rng), b = rand_leaf({5, 3}, rng);
  auto r = TensorD::randn({4, 3}, rng);
  auto res = gradcheck([&] { return project(matmul(a, b), r); }, {a, b});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_input;
}

TEST(Softmax, SymmetricInputGivesUniform) {
  auto y = softmax_lastdim(constant(TensorD({2}, {0, 0}))).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto y = softmax_lastdim(constant(TensorD({2}, {1000, 0}))).value();
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_TRUE(y.all_finite());
}

TEST(Softmax, RandomVectorSumsToOne) {
  std::mt19937_64 rng(3);
  VarD x = rand_leaf({6}, rng, 3.0);
  auto y = softmax_lastdim(x).value();
  double s = 0;
  for (double v : y.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-6);
  auto r = TensorD::randn({6}, rng);
  EXPECT_LT(gradcheck([&] { return project(softmax_lastdim(x), r); }, {x}).max_rel_error, 1e-4);
}

TEST(Softmax, EmptyTensorIsDimensionError) {
  EXPECT_THROW(softmax_lastdim(constant(TensorD())), DimensionError);
}

TEST(LayerNorm, ConstantTokenMapsToZero) {
  auto y = layer_norm(constant(TensorD({4}, 5.0)), constant(TensorD({4}, 1.0)),
                      constant(TensorD({4}, 0.0)))
               .value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalizedTokenIsNearlyUnchanged) {
  auto y = layer_norm(constant(TensorD({2}, {1, -1})), constant(TensorD({2}, 1.0)),
                      constant(TensorD({2}, 0.0)))
               .value();
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  std::mt19937_64 rng(11);
  auto y = layer_norm(constant(TensorD::randn({3, 8}, rng, 4.0)), constant(TensorD({8}, 1.0)),
                      constant(TensorD({8}, 0.0)))
               .value();
  for (int r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (int i = 0; i < 8; ++i) m += y.at({r, i});
    m /= 8;
    for (int i = 0; i < 8; ++i) v += (y.at({r, i}) - m) * (y.at({r, i}) - m);
    v /= 8;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(LayerNorm, AffineSizeMismatch) {
  EXPECT_THROW(layer_norm(constant(TensorD({2, 4})), constant(TensorD({3}, 1.0)),
                          constant(TensorD({3}, 0.0))),
               DimensionError);
}

TEST(Conv1x1, IdentityWeights) {
  std::mt19937_64 rng(5);
  auto x = TensorD::randn({3, 4, 4}, rng);
  TensorD w({3, 3});
  for (int i = 0; i < 3; ++i) w.at({i, i}) = 1.0;
  EXPECT_EQ(conv1x1(constant(x), constant(w), constant(TensorD({3}))).value(), x);
}

TEST(Conv1x1, ChannelSum) {
  std::mt19937_64 rng(5);
  auto x = TensorD::randn({3, 2, 2}, rng);
  auto y = conv1x1(constant(x), constant(TensorD({1, 3}, 1.0)), constant(TensorD({1}))).value();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(y.at({0, i, j}), x.at({0, i, j}) + x.at({1, i, j}) + x.at({2, i, j}), 1e-12);
    }
  }
}

TEST(Conv1x1, MatchesReshapeMatmulOracle) {
  std::mt19937_64 rng(9);
  auto x = TensorD::randn({4, 5, 5}, rng);
  auto w = TensorD::randn({3, 4}, rng);
  auto b = TensorD::randn({3}, rng);
  auto y = conv1x1(constant(x), constant(w), constant(b)).value();
  // Oracle: pixels as rows, (H*W) x C_in times C_in x C_out.
  for (int p = 0; p < 25; ++p) {
    for (int o = 0; o < 3; ++o) {
      double acc = b[o];
      for (int c = 0; c < 4; ++c) acc += x[c * 25 + p] * w.at({o, c});
      EXPECT_LT(std::abs(acc - y[o * 25 + p]), 1e-6);
    }
  }
}

TEST(Conv1x1, ChannelMismatch) {
  EXPECT_THROW(conv1x1(constant(TensorD({3, 2, 2})), constant(TensorD({2, 4})), constant(TensorD({2}))),
               DimensionError);
}

TEST(Activations, Relu) {
  EXPECT_EQ(relu(constant(TensorD({3}, {-1, 0, 2}))).value(), TensorD({3}, {0, 0, 2}));
}

TEST(Layout, SplitInvertsConcat) {
  std::mt19937_64 rng(2);
  auto a = TensorD::randn({2, 3}, rng);
  auto b = TensorD::randn({4, 3}, rng);
  auto parts = split(concat<double>({constant(a), constant(b)}, 0), 0, {2, 4});
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].value(), a);
  EXPECT_EQ(parts[1].value(), b);
}

TEST(Layout, SplitSizeMismatchAndAxisOutOfRange) {
  VarD x = constant(TensorD({2, 5}));
  EXPECT_THROW(split(x, 1, {2, 2}), DimensionError);
  EXPECT_THROW(split(x, 2, {1, 1}), DimensionError);
  EXPECT_THROW(concat<double>({x, x}, 3), DimensionError);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  std::mt19937_64 rng(4);
  auto x = TensorD::randn({4, 3, 3, 3}, rng, 2.0);
  for (auto& v : x.data()) v += 5.0;
  TensorD rm({3}, 0.0), rv({3}, 1.0);
  auto y = batch_norm(constant(x), constant(TensorD({3}, 1.0)), constant(TensorD({3}, 0.0)), rm, rv,
                      true)
               .value();
  for (int c = 0; c < 3; ++c) {
    double m = 0, xm = 0;
    for (int b = 0; b < 4; ++b) {
      for (int p = 0; p < 9; ++p) {
        m += y[(b * 3 + c) * 9 + p];
        xm += x[(b * 3 + c) * 9 + p];
      }
    }
    EXPECT_LT(std::abs(m / 36), 1e-5);
    // Running mean moved 10% of the way toward the batch mean.
    EXPECT_NEAR(rm[c], 0.1 * xm / 36, 1e-12);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  TensorD rm({1}, 2.0), rv({1}, 4.0);
  auto y = batch_norm(constant(TensorD({1, 1, 1, 2}, {2.0, 6.0})), constant(TensorD({1}, 1.0)),
                      constant(TensorD({1}, 0.0)), rm, rv, false, 0.1, 0.0)
               .value();
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
  EXPECT_DOUBLE_EQ(rm[0], 2.0);
}

TEST(Patchify, TokenCountAndErrors) {
  VarD img = constant(TensorD({1, 3, 16, 16}));
  EXPECT_EQ(patchify(img, 8).shape(), (Shape{1, 4, 192}));
  EXPECT_THROW(patchify(img, 5), DimensionError);
}

TEST(Backward, SumGivesAllOnes) {
  Param<double> p("p", TensorD({2, 3}, 0.5));
  sum(p.var()).backward();
  for (double g : p.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  Param<double> p("p", TensorD({2}, 0.5));
  sum(p.var()).backward();
  sum(p.var()).backward();
  EXPECT_EQ(p.grad()[0], 2.0);
  p.zero_grad();
  EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Backward, FrozenParamKeepsZeroGrad) {
  std::mt19937_64 rng(8);
  Param<double> frozen("w", TensorD::randn({3, 3}, rng), /*trainable=*/false);
  Param<double> live("v", TensorD::randn({3, 3}, rng));
  auto g = TensorD::ones({3});
  VarD loss = sum(layer_norm(matmul(live.var(), frozen.var()), constant(g), constant(TensorD({3}))));
  loss.backward();
  for (double v : frozen.grad().data()) EXPECT_EQ(v, 0.0);
  double mag = 0;
  for (double v : live.grad().data()) mag += std::abs(v);
  EXPECT_GT(mag, 0.0);
}

TEST(Backward, NonScalarIsUsageError) {
  VarD x(TensorD({2}, 1.0), true);
  EXPECT_THROW(scale(x, 2.0).backward(), UsageError);
}

TEST(Backward, ComposedChainMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  VarD x = rand_leaf({4, 6}, rng), w = rand_leaf({6, 6}, rng, 0.5);
  VarD g = rand_leaf({6}, rng), b = rand_leaf({6}, rng);
  auto r = TensorD::randn({4, 6}, rng);
  auto res = gradcheck([&] { return project(layer_norm(softmax_lastdim(matmul(x, w)), g, b), r); },
                       {x, w, g, b});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_input;
}

TEST(Backward, NoGradModeRecordsNothing) {
  VarD x(TensorD({2}, 1.0), true);
  NoGradGuard guard;
  VarD y = scale(x, 3.0);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
}

class EveryOpGradcheck : public ::testing::TestWithParam<size_t> {};

TEST_P(EveryOpGradcheck, TenSeedsWithinTolerance) {
  const auto cases = train::op_gradcheck_cases();
  const auto& c = cases[GetParam()];
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 17);
    std::vector<VarD> in;
    std::function<VarD()> f;
    c.build(rng, in, f);
    auto res = gradcheck(f, in);
    EXPECT_LT(res.max_rel_error, 1e-4) << c.name << " seed " << seed << " input " << res.worst_input;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, EveryOpGradcheck,
                         ::testing::Range<size_t>(0, train::op_gradcheck_cases().size()),
                         [](const auto& info) { return train::op_gradcheck_cases()[info.param].name; });

TEST(Robustness, FiniteInputsUpToMagnitude1e3StayFinite) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = TensorD::uniform({4, 8}, rng, -1e3, 1e3);
    VarD v = constant(x);
    EXPECT_TRUE(softmax_lastdim(v).value().all_finite());
    EXPECT_TRUE(layer_norm(v, constant(TensorD({8}, 1.0)), constant(TensorD({8}))).value().all_finite());
    EXPECT_TRUE(gelu(v).value().all_finite());
    EXPECT_TRUE(sigmoid(v).value().all_finite());
  }
}

TEST(Determinism, IdenticalInputsGiveBitwiseIdenticalOutputs) {
  auto run = [] {
    std::mt19937_64 rng(99);
    VarD x = constant(Tensor<float>::randn({5, 16}, rng).cast<double>());
    VarD w = constant(TensorD::randn({16, 16}, rng));
    return softmax_lastdim(matmul(x, w)).value();
  };
  EXPECT_EQ(run(), run());
}
