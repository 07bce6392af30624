#include <gtest/gtest.h>

#include <cmath>

#include "lipnet/nn/batchnorm.hpp"
#include "lipnet/nn/conv.hpp"
#include "lipnet/nn/linear.hpp"
#include "lipnet/nn/lstm.hpp"
#include "lipnet/nn/pool.hpp"
#include "test_util.hpp"

using namespace lipnet;
using namespace lipnet::nn;
using lipnet::testing::gradcheck_inputs;
using lipnet::testing::random_tensor;
using lipnet::testing::weighted_sum;

namespace {

using Inputs = std::span<const Var<double>>;

ConvSpec spec3d(std::size_t cin, std::size_t cout, std::vector<std::size_t> k, std::vector<std::size_t> s,
                std::vector<std::size_t> p, bool bias = true) {
  return ConvSpec{cin, cout, std::move(k), std::move(s), std::move(p), bias};
}

Shape weight_shape(const ConvSpec& s) {
  Shape w{s.out_channels, s.in_channels};
  w.insert(w.end(), s.kernel.begin(), s.kernel.end());
  return w;
}

}  // namespace

// ---------------------------------------------------------------- convolution

TEST(Conv, FrontEndGeometryOnFullSizeClip) {
  Tape<float> tape;
  Conv<float> conv(spec3d(1, 64, {5, 7, 7}, {1, 2, 2}, {2, 3, 3}));
  Rng rng(1);
  conv.init(rng);
  const auto y = conv.forward(tape.constant(Tensor<float>(Shape{1, 1, 31, 112, 112}, 0.5f)));
  EXPECT_EQ(y.shape(), (Shape{1, 64, 31, 56, 56}));
}

TEST(Conv, UnitKernelWithIdentityWeightIsIdentity) {
  Tape<double> tape;
  Rng rng(2);
  const auto x = tape.constant(random_tensor({2, 1, 3, 4, 5}, rng));
  const auto w = tape.constant(Tensor<double>(Shape{1, 1, 1, 1, 1}, 1.0));
  const auto y = conv<double>(x, w, std::nullopt, spec3d(1, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, false));
  EXPECT_EQ(y.value(), x.value());
}

TEST(Conv, MatchesDirectSumOn2d) {
  // 3x3 input, 2x2 kernel, stride 1, pad 0: a hand-computable cross-correlation.
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  const auto w = tape.constant(Tensor<double>(Shape{1, 1, 2, 2}, {1, 0, 0, -1}));
  const auto b = tape.constant(Tensor<double>(Shape{1}, {10}));
  const auto y = conv<double>(x, w, b, ConvSpec{1, 1, {2, 2}, {1, 1}, {0, 0}, true});
  EXPECT_EQ(y.value(), Tensor<double>(Shape{1, 1, 2, 2}, {6, 6, 6, 6}));
}

TEST(Conv, RejectsChannelMismatch) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 3, 4, 4}));
  const auto w = tape.constant(Tensor<double>(Shape{2, 2, 3, 3}));
  EXPECT_THROW(conv<double>(x, w, std::nullopt, ConvSpec{2, 2, {3, 3}, {1, 1}, {1, 1}, false}), DimensionError);
}

TEST(Conv, ShapeLawOverRandomSpecs) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t axes = static_cast<std::size_t>(uniform_int(rng, 1, 3));
    ConvSpec s{static_cast<std::size_t>(uniform_int(rng, 1, 3)), static_cast<std::size_t>(uniform_int(rng, 1, 3)),
               {}, {}, {}, uniform01(rng) < 0.5};
    Shape in{static_cast<std::size_t>(uniform_int(rng, 1, 2)), s.in_channels};
    for (std::size_t a = 0; a < axes; ++a) {
      const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 4));
      s.kernel.push_back(k);
      s.stride.push_back(static_cast<std::size_t>(uniform_int(rng, 1, 3)));
      s.padding.push_back(static_cast<std::size_t>(uniform_int(rng, 0, 2)));
      in.push_back(static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(k), 9)));
    }
    Tape<double> tape;
    const auto x = tape.constant(random_tensor(in, rng));
    const auto w = tape.constant(random_tensor(weight_shape(s), rng));
    std::optional<Var<double>> b;
    if (s.bias) b = tape.constant(random_tensor({s.out_channels}, rng));
    const auto y = conv<double>(x, w, b, s);
    for (std::size_t a = 0; a < axes; ++a) {
      EXPECT_EQ(y.shape()[2 + a], (in[2 + a] + 2 * s.padding[a] - s.kernel[a]) / s.stride[a] + 1);
    }
    EXPECT_EQ(y.shape()[1], s.out_channels);
  }
}

class ConvGradients : public ::testing::TestWithParam<int> {};

TEST_P(ConvGradients, MatchFiniteDifferencesFor1d2d3d) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  const std::vector<ConvSpec> specs{
      spec3d(2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),           // conv3d on x[1,2,4,6,6]
      spec3d(2, 2, {3, 3, 3}, {1, 2, 2}, {0, 1, 1}, false),    // strided conv3d
      ConvSpec{2, 3, {3, 3}, {2, 2}, {1, 1}, true},            // conv2d
      ConvSpec{3, 2, {5}, {1}, {2}, true},                     // conv1d (temporal back-end shape)
  };
  const std::vector<Shape> inputs{{1, 2, 4, 6, 6}, {2, 2, 4, 6, 6}, {2, 2, 5, 5}, {2, 3, 7}};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ConvSpec& s = specs[i];
    std::vector<Tensor<double>> in{random_tensor(inputs[i], rng), random_tensor(weight_shape(s), rng)};
    if (s.bias) in.push_back(random_tensor({s.out_channels}, rng));
    const double err = gradcheck_inputs(
        [&](Tape<double>&, Inputs v) {
          std::optional<Var<double>> b;
          if (s.bias) b = v[2];
          return weighted_sum(conv<double>(v[0], v[1], b, s), seed + 17);
        },
        in);
    EXPECT_LT(err, 1e-4) << "spec " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ConvGradients, ::testing::Range(0, 10));

// ---------------------------------------------------------------- pooling

TEST(MaxPool, FrontEndPoolGivesFiftyThousandFeatures) {
  Tape<float> tape;
  const auto y = maxpool(tape.constant(Tensor<float>(Shape{1, 64, 31, 56, 56})),
                         PoolSpec{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}});
  EXPECT_EQ(y.shape(), (Shape{1, 64, 31, 28, 28}));
  EXPECT_EQ(64u * 28u * 28u, 50176u);
}

TEST(MaxPool, UnitWindowIsIdentity) {
  Tape<double> tape;
  Rng rng(3);
  const auto x = tape.constant(random_tensor({2, 3, 4, 5}, rng));
  EXPECT_EQ(maxpool(x, PoolSpec{{1, 1}, {1, 1}, {0, 0}}).value(), x.value());
}

TEST(MaxPool, TemporalHalvingOf31Steps) {
  Tape<double> tape;
  const auto y = maxpool(tape.constant(Tensor<double>(Shape{2, 4, 31})), PoolSpec{{2}, {2}, {0}});
  EXPECT_EQ(y.shape(), (Shape{2, 4, 15}));
}

TEST(MaxPool, TiesRouteGradientToLowestIndex) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor<double>(Shape{1, 1, 4}, {2, 2, 1, 1}));
  tape.backward(ops::sum(maxpool(x, PoolSpec{{2}, {2}, {0}})));
  EXPECT_EQ(tape.grad(x), Tensor<double>(Shape{1, 1, 4}, {1, 0, 1, 0}));
}

TEST(MaxPool, AllPaddingWindowIsAContractError) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 1, 1}, 1.0));
  EXPECT_THROW(maxpool(x, PoolSpec{{2}, {1}, {2}}), ContractError);
}

TEST(MaxPool, GradientIsSparse) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Tape<double> tape;
    const auto x = tape.leaf(random_tensor({2, 3, 5, 7, 7}, rng));
    const auto y = maxpool(x, PoolSpec{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}});
    tape.backward(weighted_sum(y, 5));
    std::size_t nonzero = 0;
    for (double g : tape.grad(x).data()) nonzero += g != 0.0;
    EXPECT_LE(nonzero, y.value().size());
  }
}

class PoolGradients : public ::testing::TestWithParam<int> {};

TEST_P(PoolGradients, MatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  const double e3 = gradcheck_inputs(
      [&](Tape<double>&, Inputs v) { return weighted_sum(maxpool(v[0], PoolSpec{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}}), seed); },
      {random_tensor({2, 2, 3, 6, 6}, rng)});
  const double e1 = gradcheck_inputs(
      [&](Tape<double>&, Inputs v) { return weighted_sum(maxpool(v[0], PoolSpec{{2}, {2}, {0}}), seed); },
      {random_tensor({2, 3, 9}, rng)});
  const double em = gradcheck_inputs([&](Tape<double>&, Inputs v) { return weighted_sum(ops::mean_pool(v[0]), seed); },
                                     {random_tensor({2, 3, 4, 5}, rng)});
  EXPECT_LT(e3, 1e-4);
  EXPECT_LT(e1, 1e-4);
  EXPECT_LT(em, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, PoolGradients, ::testing::Range(0, 10));

// ---------------------------------------------------------------- batch norm

TEST(BatchNorm, EvalWithUnitStatisticsIsIdentity) {
  BatchNorm<double> bn(3);
  Tape<double> tape;
  Rng rng(4);
  const auto x = tape.constant(random_tensor({4, 3, 5}, rng));
  const auto y = bn.forward(x, Mode::eval);
  EXPECT_LT(max_abs_diff(y.value(), x.value()), 1e-5);
}

TEST(BatchNorm, TrainOutputHasZeroMeanUnitVariance) {
  BatchNorm<double> bn(3);
  Tape<double> tape;
  Rng rng(5);
  const auto y = bn.forward(tape.constant(random_tensor({4, 3, 6, 6}, rng, -3.0, 7.0)), Mode::train);
  const auto& v = y.value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, sq = 0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 36; ++i) m += v[(n * 3 + c) * 36 + i];
    }
    m /= 144.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 36; ++i) sq += std::pow(v[(n * 3 + c) * 36 + i] - m, 2);
    }
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(sq / 144.0, 1.0, 1e-5);
  }
}

TEST(BatchNorm, RunningStatisticsUseMomentumAndUnbiasedVariance) {
  BatchNorm<double> bn(1);
  Tape<double> tape;
  bn.forward(tape.constant(Tensor<double>(Shape{4, 1}, {1, 2, 3, 4})), Mode::train);
  EXPECT_NEAR(bn.running_mean()[0], 0.1 * 2.5, 1e-12);
  EXPECT_NEAR(bn.running_var()[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(BatchNorm, SingletonStatisticsInTrainModeIsAContractError) {
  BatchNorm<double> bn(2);
  Tape<double> tape;
  EXPECT_THROW(bn.forward(tape.constant(Tensor<double>(Shape{1, 2})), Mode::train), ContractError);
  EXPECT_NO_THROW(bn.forward(tape.constant(Tensor<double>(Shape{1, 2})), Mode::eval));
}

TEST(BatchNorm, EvalMatchesTrainWhenRunningStatsEqualBatchStats) {
  Rng rng(6);
  const auto x = random_tensor({5, 2, 3}, rng, -2, 2);
  BatchNorm<double> bn(2);
  bn.gamma().value = Tensor<double>(Shape{2}, {1.5, -0.5});
  bn.beta().value = Tensor<double>(Shape{2}, {0.2, 0.1});
  Tape<double> tape;
  const auto train = bn.forward(tape.constant(x), Mode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, sq = 0;
    for (std::size_t n = 0; n < 5; ++n) {
      for (std::size_t i = 0; i < 3; ++i) m += x[(n * 2 + c) * 3 + i];
    }
    m /= 15.0;
    for (std::size_t n = 0; n < 5; ++n) {
      for (std::size_t i = 0; i < 3; ++i) sq += std::pow(x[(n * 2 + c) * 3 + i] - m, 2);
    }
    bn.running_mean()[c] = m;
    bn.running_var()[c] = sq / 15.0;
  }
  const auto eval = bn.forward(tape.constant(x), Mode::eval);
  EXPECT_LT(max_abs_diff(train.value(), eval.value()), 1e-5);
}

class BatchNormGradients : public ::testing::TestWithParam<int> {};

TEST_P(BatchNormGradients, MatchFiniteDifferencesInBothModes) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  for (Mode mode : {Mode::train, Mode::eval}) {
    Tensor<double> rm = random_tensor({3}, rng);
    Tensor<double> rv = random_tensor({3}, rng, 0.5, 2.0);
    const double err = gradcheck_inputs(
        [&](Tape<double>&, Inputs v) {
          // Running statistics are frozen buffers for the purpose of the check.
          Tensor<double> m = rm, var = rv;
          return weighted_sum(batchnorm<double>(v[0], v[1], v[2], {&m, &var, 0.1, 1e-5}, mode), seed);
        },
        {random_tensor({4, 3, 2, 2}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
    EXPECT_LT(err, 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, BatchNormGradients, ::testing::Range(0, 10));

// ---------------------------------------------------------------- composite chain

TEST(Layers, ConvBnReluLinearChainMatchesFiniteDifferences) {
  Rng rng(31);
  const ConvSpec cs = spec3d(1, 2, {3, 3, 3}, {1, 2, 2}, {1, 1, 1});
  const std::vector<Tensor<double>> in{random_tensor({2, 1, 3, 5, 5}, rng), random_tensor(weight_shape(cs), rng),
                                       random_tensor({2}, rng), random_tensor({2}, rng, 0.5, 1.5),
                                       random_tensor({2}, rng), random_tensor({4, 2 * 3 * 3 * 3}, rng),
                                       random_tensor({4}, rng)};
  const double err = gradcheck_inputs(
      [&](Tape<double>&, Inputs v) {
        Tensor<double> rm(Shape{2}, 0.0), rv(Shape{2}, 1.0);
        auto h = conv<double>(v[0], v[1], v[2], cs);
        h = ops::relu(batchnorm<double>(h, v[3], v[4], {&rm, &rv, 0.1, 1e-5}, Mode::train));
        h = ops::reshape(h, {2, 2 * 3 * 3 * 3});
        return weighted_sum(ops::linear(h, v[5], v[6]), 3);
      },
      in);
  EXPECT_LT(err, 1e-4);
}

// ---------------------------------------------------------------- LSTM

TEST(Lstm, ZeroWeightsAndStateGiveZeroOutput) {
  LstmParams<double> p(3, 2);
  Tape<double> tape;
  const auto vars = on_tape(tape, p);
  Rng rng(1);
  const auto s = lstm_step(tape.constant(random_tensor({4, 3}, rng)),
                           {tape.constant(Tensor<double>(Shape{4, 2})), tape.constant(Tensor<double>(Shape{4, 2}))},
                           vars);
  EXPECT_EQ(s.c.value(), Tensor<double>(Shape{4, 2}));
  EXPECT_EQ(s.h.value(), Tensor<double>(Shape{4, 2}));
}

TEST(Lstm, SaturatedForgetGateCarriesCellState) {
  const std::size_t h = 2;
  LstmParams<double> p(3, h);
  for (std::size_t j = 0; j < h; ++j) {
    p.b.value[j] = -20.0;     // input gate closed
    p.b.value[h + j] = 20.0;  // forget gate open
  }
  Tape<double> tape;
  const auto c0 = Tensor<double>(Shape{1, 2}, {0.7, -0.3});
  const auto s = lstm_step(tape.constant(Tensor<double>(Shape{1, 3}, 0.5)),
                           {tape.constant(Tensor<double>(Shape{1, 2})), tape.constant(c0)}, on_tape(tape, p));
  EXPECT_LT(max_abs_diff(s.c.value(), c0), 1e-8);
}

TEST(Lstm, StepRejectsShapeMismatch) {
  LstmParams<double> p(3, 2);
  Tape<double> tape;
  EXPECT_THROW(lstm_step(tape.constant(Tensor<double>(Shape{1, 4})),
                         {tape.constant(Tensor<double>(Shape{1, 2})), tape.constant(Tensor<double>(Shape{1, 2}))},
                         on_tape(tape, p)),
               DimensionError);
}

TEST(Lstm, InitShiftsForgetGateBias) {
  LstmParams<double> p(4, 4);
  Rng rng(2);
  p.init(rng);
  const double bound = std::sqrt(1.0 / 4.0);
  for (std::size_t j = 0; j < 16; ++j) {
    const double centre = (j >= 4 && j < 8) ? 1.0 : 0.0;
    EXPECT_LE(std::abs(p.b.value[j] - centre), bound);
  }
}

class LstmGradients : public ::testing::TestWithParam<int> {};

TEST_P(LstmGradients, ThreeStepUnrollMatchesFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  const std::size_t d = 3, h = 2, N = 2;
  const std::vector<Tensor<double>> in{random_tensor({3, N, d}, rng), random_tensor({4 * h, d}, rng),
                                       random_tensor({4 * h, h}, rng), random_tensor({4 * h}, rng),
                                       random_tensor({N, h}, rng), random_tensor({N, h}, rng)};
  const double err = gradcheck_inputs(
      [&](Tape<double>&, Inputs v) {
        const LstmVars<double> p{v[1], v[2], v[3]};
        LstmState<double> s{v[4], v[5]};
        for (std::size_t t = 0; t < 3; ++t) {
          s = lstm_step(ops::reshape(ops::slice(v[0], 0, t, t + 1), {N, d}), s, p);
        }
        return ops::add(weighted_sum(s.h, seed), weighted_sum(s.c, seed + 1));
      },
      in);
  EXPECT_LT(err, 1e-4);
}

TEST_P(LstmGradients, BidirectionalStackMatchesFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed + 100);
  const std::size_t d = 3, h = 2;
  std::vector<Tensor<double>> in{random_tensor({4, 2, d}, rng)};
  for (std::size_t l = 0; l < 2; ++l) {
    const std::size_t w = l == 0 ? d : h;
    for (int dir = 0; dir < 2; ++dir) {
      in.push_back(random_tensor({4 * h, w}, rng));
      in.push_back(random_tensor({4 * h, h}, rng));
      in.push_back(random_tensor({4 * h}, rng));
    }
  }
  const double err = gradcheck_inputs(
      [&](Tape<double>&, Inputs v) {
        std::vector<BiLstmLayerVars<double>> layers{{{v[1], v[2], v[3]}, {v[4], v[5], v[6]}},
                                                    {{v[7], v[8], v[9]}, {v[10], v[11], v[12]}}};
        return weighted_sum(bilstm<double>(v[0], layers, MergeMode::add, MergeMode::concat), seed);
      },
      in);
  EXPECT_LT(err, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, LstmGradients, ::testing::Range(0, 10));

TEST(BiLstm, SingleStepConcatWidth) {
  BiLstm<double> net(3, 4, 1, MergeMode::add, MergeMode::concat);
  Rng rng(1);
  net.init(rng);
  Tape<double> tape;
  const auto seq = tape.constant(random_tensor({1, 2, 3}, rng));
  const auto y = net.forward(seq);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 8}));
  // With T = 1 both directions see the same single step from zero state.
  auto& [f, b] = net.layers()[0];
  const auto hf = lstm_step(ops::reshape(seq, {2, 3}),
                            {tape.constant(Tensor<double>(Shape{2, 4})), tape.constant(Tensor<double>(Shape{2, 4}))},
                            on_tape(tape, f));
  const auto hb = lstm_step(ops::reshape(seq, {2, 3}),
                            {tape.constant(Tensor<double>(Shape{2, 4})), tape.constant(Tensor<double>(Shape{2, 4}))},
                            on_tape(tape, b));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_DOUBLE_EQ(y.value().at(0, n, j), hf.h.value().at(n, j));
      EXPECT_DOUBLE_EQ(y.value().at(0, n, 4 + j), hb.h.value().at(n, j));
    }
  }
}

TEST(BiLstm, MergeWidths) {
  EXPECT_EQ(BiLstm<double>(5, 6, 2, MergeMode::add, MergeMode::add).output_width(), 6u);
  EXPECT_EQ(BiLstm<double>(5, 6, 2, MergeMode::add, MergeMode::concat).output_width(), 12u);
}

TEST(BiLstm, TimeReversalSwapsDirections) {
  const std::size_t T = 5, N = 2, d = 3, h = 4;
  Rng rng(12);
  LstmParams<double> A(d, h), B(d, h);
  A.init(rng);
  B.init(rng);
  const auto x = random_tensor({T, N, d}, rng);
  Tensor<double> xr(x.shape());
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(x.raw() + t * N * d, x.raw() + (t + 1) * N * d, xr.raw() + (T - 1 - t) * N * d);
  }
  Tape<double> tape;
  const std::vector<BiLstmLayerVars<double>> ab{{on_tape(tape, A), on_tape(tape, B)}};
  const std::vector<BiLstmLayerVars<double>> ba{{on_tape(tape, B), on_tape(tape, A)}};
  const auto y = bilstm<double>(tape.constant(x), ab, MergeMode::add, MergeMode::concat);
  const auto yr = bilstm<double>(tape.constant(xr), ba, MergeMode::add, MergeMode::concat);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t j = 0; j < h; ++j) {
        // Backward output on the reversed clip == forward output on the original, reversed in time.
        EXPECT_NEAR(yr.value().at(T - 1 - t, n, h + j), y.value().at(t, n, j), 1e-12);
        EXPECT_NEAR(yr.value().at(T - 1 - t, n, j), y.value().at(t, n, h + j), 1e-12);
      }
    }
  }
}

TEST(BiLstm, EveryOutputSeesTheWholeSequence) {
  const std::size_t T = 6, N = 1, d = 2;
  BiLstm<double> net(d, 3, 2, MergeMode::add, MergeMode::add);
  Rng rng(13);
  net.init(rng);
  const auto x = random_tensor({T, N, d}, rng);
  const auto run = [&](const Tensor<double>& in) {
    Tape<double> tape;
    return net.forward(tape.constant(in)).value();
  };
  const auto base = run(x);
  const std::size_t width = base.dim(2);
  for (std::size_t s = 0; s < T; ++s) {
    auto xp = x;
    xp.at(s, 0, 0) += 1e-3;
    const auto pert = run(xp);
    for (std::size_t t = 0; t < T; ++t) {
      double diff = 0;
      for (std::size_t j = 0; j < width; ++j) diff = std::max(diff, std::abs(pert.at(t, 0, j) - base.at(t, 0, j)));
      EXPECT_GT(diff, 0.0) << "input " << s << " output " << t;
    }
  }
}

TEST(BiLstm, ChainWidthMismatchIsAConfigError) {
  Rng rng(14);
  LstmParams<double> a(3, 2), b(3, 2), c(3, 2), e(3, 2);  // second layer should take width 2
  Tape<double> tape;
  const std::vector<BiLstmLayerVars<double>> layers{{on_tape(tape, a), on_tape(tape, b)},
                                                    {on_tape(tape, c), on_tape(tape, e)}};
  EXPECT_THROW(bilstm<double>(tape.constant(random_tensor({2, 1, 3}, rng)), layers, MergeMode::add, MergeMode::add),
               ConfigError);
}

TEST(Linear, ForwardMatchesHandComputation) {
  Linear<double> lin(2, 1);
  lin.weight().value = Tensor<double>(Shape{1, 2}, {2, -1});
  lin.bias().value = Tensor<double>(Shape{1}, {0.5});
  Tape<double> tape;
  const auto y = lin.forward(tape.constant(Tensor<double>(Shape{2, 2}, {1, 1, 3, 4})));
  EXPECT_EQ(y.value(), Tensor<double>(Shape{2, 1}, {1.5, 2.5}));
}
