// Copyright 2026 The orthokws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "orthokws/gradcheck.hpp"
#include "orthokws/ops.hpp"
#include "orthokws/optim.hpp"
#include "orthokws/tensor.hpp"

namespace orthokws {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = normal(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

std::vector<double> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

TEST(Tensor, ShapeInvariants) {
  Tensor t = Tensor::zeros({2, 3}, true);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.grad().size(), 6u);
  EXPECT_FALSE(Tensor::zeros({2, 3}).has_grad());
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
  EXPECT_THROW(Tensor::zeros({3, 0}), DimensionError);
}

TEST(Tensor, ZeroGradClearsBuffer) {
  Tensor x({2}, {1.0, 2.0}, true);
  backward(sum(square(x)));
  EXPECT_NE(x.grad()[0], 0.0);
  x.zero_grad();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Matmul, Examples) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, a)), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item(), 11.0);
  Tensor z = matmul(Tensor::zeros({2, 3}), Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] by [2x3]"), std::string::npos);
  }
}

TEST(Conv1d, TwoTapSumWithSamePadding) {
  Tensor x({1, 4}, {1, 2, 3, 4});
  Tensor w({2, 1, 1}, {1, 1});
  Tensor y = conv1d_temporal(x, w, std::nullopt, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 4}));
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[1], 5.0);
  EXPECT_EQ(y[2], 7.0);
  EXPECT_EQ(y[3], 4.0);  // right edge sees one zero pad
}

TEST(Conv1d, CentreTapIsIdentity) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({3, 11}, rng, false);
  Tensor w = Tensor::zeros({5, 1, 3});
  for (std::size_t c = 0; c < 3; ++c) w.mutable_data()[(2 * 1 + 0) * 3 + c] = 1.0;
  Tensor y = conv1d_temporal(x, w, std::nullopt, 1, 3);
  EXPECT_EQ(values(y), values(x));
}

TEST(Conv1d, StrideHalvesLength) {
  Tensor y = conv1d_temporal(Tensor::full({2, 8}, 1.0), Tensor::full({3, 2, 4}, 1.0),
                             std::nullopt, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{4, 4}));
  EXPECT_EQ(conv1d_temporal(Tensor::full({1, 7}, 1.0), Tensor::full({9, 1, 1}, 1.0),
                            std::nullopt, 2, 1)
                .dim(1),
            4u);
}

TEST(Conv1d, GroupMismatchIsConfigError) {
  EXPECT_THROW(conv1d_temporal(Tensor::zeros({3, 8}), Tensor::zeros({3, 1, 3}),
                               std::nullopt, 1, 2),
               ConfigError);
}

TEST(Conv1d, BatchedMatchesPerSample) {
  std::mt19937_64 rng(5);
  Tensor xb = random_tensor({3, 4, 10}, rng, false);
  Tensor w = random_tensor({3, 2, 6}, rng, false);
  Tensor bias = random_tensor({6}, rng, false);
  Tensor yb = conv1d_temporal(xb, w, bias, 2, 2);
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<double> xs(xb.data().begin() + b * 40, xb.data().begin() + (b + 1) * 40);
    Tensor y = conv1d_temporal(Tensor({4, 10}, xs), w, bias, 2, 2);
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(yb[b * y.numel() + i], y[i]);
  }
}

TEST(Relu, Examples) {
  EXPECT_EQ(values(relu(Tensor({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(values(relu(Tensor({2}, {-3, -0.5}))), (std::vector<double>{0, 0}));
  EXPECT_EQ(values(relu(Tensor({2}, {0.5, 3}))), (std::vector<double>{0.5, 3}));
  Tensor x({1}, {0.0}, true);
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(MeanOverTime, Examples) {
  EXPECT_EQ(values(mean_over_time(Tensor({1, 2}, {2, 4}))), (std::vector<double>{3}));
  EXPECT_EQ(values(mean_over_time(Tensor::full({2, 5}, 7.5))),
            (std::vector<double>{7.5, 7.5}));
  EXPECT_EQ(values(mean_over_time(Tensor({3, 1}, {1, 2, 3}))),
            (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(mean_over_time(Tensor::zeros({2, 3, 4})).shape(), (Shape{2, 3}));
}

TEST(SoftmaxCrossEntropy, Examples) {
  std::vector<int> label{3};
  EXPECT_NEAR(softmax_cross_entropy(Tensor::zeros({1, 12}), label).item(),
              std::log(12.0), 1e-12);
  std::vector<int> zero{0};
  EXPECT_NEAR(softmax_cross_entropy(Tensor({1, 2}, {1, 0}), zero).item(),
              std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(std::log1p(std::exp(-1.0)), 0.313262, 1e-6);
  EXPECT_LT(softmax_cross_entropy(Tensor({1, 2}, {800, 0}), zero).item(), 1e-300);
  std::vector<int> bad{2};
  EXPECT_THROW(softmax_cross_entropy(Tensor::zeros({1, 2}), bad), std::out_of_range);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Tensor z({2, 3}, {1, 2, 3, 0, 0, 0}, true);
  std::vector<int> labels{2, 0};
  backward(softmax_cross_entropy(z, labels));
  const double e = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(z.grad()[2], (std::exp(3.0) / e - 1.0) / 2.0, 1e-15);
  EXPECT_NEAR(z.grad()[4], (1.0 / 3.0) / 2.0, 1e-15);
}

TEST(Backward, Examples) {
  Tensor x({3}, {1, 2, 3}, true);
  backward(sum(x));
  EXPECT_EQ(values(Tensor({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})),
            (std::vector<double>{1, 1, 1}));
  Tensor y({2}, {1, 2}, true);
  backward(sum(mul(y, y)));
  EXPECT_EQ(y.grad()[0], 2.0);
  EXPECT_EQ(y.grad()[1], 4.0);
  Tensor c({2}, {1, 2});
  backward(sum(mul(y, c)));
  EXPECT_FALSE(c.has_grad());
  EXPECT_THROW(backward(y), std::logic_error);
}

TEST(Backward, VisitsEachOperationOnceInReverseOrder) {
  Tensor x({2}, {1, 2}, true);
  Tensor a = square(x);
  Tensor b = add(a, a);
  Tensor loss = sum(mul(b, a));
  Graph g = Graph::collect(loss);
  ASSERT_EQ(g.size(), 4u);
  const auto names = g.op_names();
  EXPECT_STREQ(names.front(), "square");
  EXPECT_STREQ(names.back(), "sum");
  backward(loss);
  // loss = 2 x^4 -> 8 x^3
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 64.0);
}

TEST(Backward, AccumulationEqualsSumOfSeparateGradients) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({3, 2}, rng, false);
    auto f = [&] { return sum(square(matmul(x, w))); };
    auto g = [&] { return sum(exp(scale(x, 0.3))); };
    backward(f());
    std::vector<double> gf = values(Tensor({12}, {x.grad().begin(), x.grad().end()}));
    x.zero_grad();
    backward(g());
    std::vector<double> gg(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(add(f(), g()));
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_NEAR(x.grad()[i], gf[i] + gg[i], 1e-12);
    }
  }
}

TEST(Backward, ScalingTheLossScalesTheGradient) {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor({5}, rng);
  auto f = [&] { return sum(exp(mul(x, x))); };
  backward(f());
  std::vector<double> base(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(scale(f(), 4.0));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(x.grad()[i], 4.0 * base[i]);
  x.zero_grad();
  backward(scale(f(), 0.37));
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(x.grad()[i], 0.37 * base[i], 1e-12 * std::abs(base[i]));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p({1}, {1.0}, true);
  p.mutable_grad()[0] = 1.0;
  std::vector<Tensor> params{p};
  AdamState state;
  adam_step(params, state, 0.001);
  EXPECT_NEAR(p[0], 0.999, 1e-10);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Tensor p({2}, {0.5, -2.0}, true);
  std::vector<Tensor> params{p};
  AdamState state;
  adam_step(params, state, 0.01);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], -2.0);
}

TEST(Adam, IdenticalInputsGiveIdenticalUpdates) {
  Tensor a({3}, {1, 2, 3}, true), b({3}, {1, 2, 3}, true);
  std::vector<Tensor> params{a, b};
  AdamState state;
  for (int step = 0; step < 5; ++step) {
    for (auto& p : params) {
      for (std::size_t i = 0; i < 3; ++i) p.mutable_grad()[i] = p[i] * 0.1 - 0.2;
    }
    adam_step(params, state, 0.001);
    for (const auto& v : state.v)
      for (double x : v) EXPECT_GE(x, 0.0);
  }
  EXPECT_EQ(values(a), values(b));
  EXPECT_EQ(state.t, 5u);
}

TEST(Adam, RejectsNonPositiveLearningRate) {
  std::vector<Tensor> params{Tensor({1}, {1.0}, true)};
  AdamState state;
  EXPECT_THROW(adam_step(params, state, 0.0), ConfigError);
  EXPECT_THROW(adam_step(params, state, -1e-3), ConfigError);
}

TEST(FiniteDiff, Examples) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({6}, rng);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-5),
            1e-7);
  EXPECT_EQ(finite_diff_check(
                [](const Tensor& t) { return sum(scale(t, 0.0)); }, x, 1e-5),
            0.0);
  EXPECT_THROW(finite_diff_check(
                   [](const Tensor& t) { return sum(scale(exp(t), 1e308)); }, x, 1e-5),
               NumericError);
}

// Every differentiable op, 10 random inputs each, shapes up to 8 x 8.
TEST(FiniteDiff, EveryOperationMatchesCentralDifferences) {
  using Op = std::function<Tensor(const Tensor&, std::mt19937_64&)>;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> ext(1, 8);
  const std::vector<std::pair<const char*, Op>> ops = {
      {"add", [](const Tensor& x, std::mt19937_64& r) {
         return sum(mul(add(x, random_tensor(x.shape(), r, false)), x)); }},
      {"sub", [](const Tensor& x, std::mt19937_64& r) {
         return sum(square(sub(random_tensor(x.shape(), r, false), x))); }},
      {"mul", [](const Tensor& x, std::mt19937_64& r) {
         return sum(mul(mul(x, x), random_tensor(x.shape(), r, false))); }},
      {"relu", [](const Tensor& x, std::mt19937_64& r) {
         return sum(mul(relu(x), random_tensor(x.shape(), r, false))); }},
      {"exp", [](const Tensor& x, std::mt19937_64&) { return sum(exp(scale(x, 0.5))); }},
      {"sqrt", [](const Tensor& x, std::mt19937_64&) {
         return sum(sqrt(add_scalar(square(x), 1.0))); }},
      {"div_scalar", [](const Tensor& x, std::mt19937_64&) {
         return sum(square(div_scalar(x, add_scalar(sum(square(x)), 1.0)))); }},
      {"transpose", [](const Tensor& x, std::mt19937_64& r) {
         Tensor m = reshape(x, {x.numel(), 1});
         return sum(mul(transpose(m), random_tensor({1, x.numel()}, r, false))); }},
      {"matmul", [](const Tensor& x, std::mt19937_64& r) {
         Tensor a = reshape(x, {x.dim(0), x.dim(1)});
         Tensor b = random_tensor({x.dim(1), 3}, r, false);
         return sum(square(matmul(a, b))); }},
      {"matmul_rhs", [](const Tensor& x, std::mt19937_64& r) {
         Tensor a = random_tensor({2, x.dim(0)}, r, false);
         return sum(square(matmul(a, x))); }},
      {"linear", [](const Tensor& x, std::mt19937_64& r) {
         Tensor w = random_tensor({x.dim(1), 2}, r, false);
         return sum(square(linear(x, w, Tensor({2}, {0.1, -0.2})))); }},
      {"mean_over_time", [](const Tensor& x, std::mt19937_64&) {
         return sum(square(mean_over_time(x))); }},
      {"softmax_rows", [](const Tensor& x, std::mt19937_64& r) {
         return sum(mul(softmax_rows(x), random_tensor(x.shape(), r, false))); }},
      {"softmax_cross_entropy", [](const Tensor& x, std::mt19937_64& r) {
         std::vector<int> labels(x.dim(0));
         for (auto& l : labels) l = static_cast<int>(r() % x.dim(1));
         return softmax_cross_entropy(x, labels); }},
      {"pairwise_sq_dist", [](const Tensor& x, std::mt19937_64& r) {
         Tensor d = pairwise_sq_dist(x);
         return sum(mul(d, random_tensor(d.shape(), r, false))); }},
      {"conv1d_temporal", [](const Tensor& x, std::mt19937_64& r) {
         Tensor w = random_tensor({3, x.dim(0), 2}, r, false);
         return sum(square(conv1d_temporal(x, w, Tensor({2}, {0.3, -0.1}), 2, 1))); }},
      {"conv2d_3x3", [](const Tensor& x, std::mt19937_64& r) {
         Tensor k = random_tensor({1, 9}, r, false);
         return sum(square(conv2d_3x3(reshape(x, {1, x.dim(0), x.dim(1)}), k))); }},
  };
  for (const auto& [name, op] : ops) {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor({ext(rng), ext(rng)}, rng);
      std::mt19937_64 fixed(trial);
      worst = std::max(worst, finite_diff_check(
                                  [&](const Tensor& t) {
                                    std::mt19937_64 r = fixed;
                                    return op(t, r);
                                  },
                                  x, 1e-5));
    }
    EXPECT_LT(worst, 1e-4) << name;
  }
}

TEST(FiniteDiff, WeightAndKernelGradients) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({2, 4, 9}, rng, false);
    Tensor w = random_tensor({5, 2, 6}, rng);
    Tensor b = random_tensor({6}, rng);
    std::vector<Coordinate> coords;
    for (std::size_t i = 0; i < w.numel(); ++i) coords.emplace_back(0, i);
    for (std::size_t i = 0; i < 6; ++i) coords.emplace_back(1, i);
    EXPECT_LT(finite_diff_check(
                  [&] { return sum(square(conv1d_temporal(x, w, b, 2, 2))); }, {w, b},
                  coords, 1e-5),
              1e-4);
    Tensor maps = random_tensor({3, 5, 6}, rng, false);
    Tensor k = random_tensor({3, 9}, rng);
    coords.clear();
    for (std::size_t i = 0; i < k.numel(); ++i) coords.emplace_back(0, i);
    EXPECT_LT(finite_diff_check([&] { return sum(square(conv2d_3x3(maps, k))); }, {k},
                                coords, 1e-5),
              1e-4);
  }
}

}  // namespace
}  // namespace orthokws
