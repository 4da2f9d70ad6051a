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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "orthokws/checkpoint.hpp"
#include "orthokws/gradcheck_suite.hpp"
#include "orthokws/models.hpp"

namespace orthokws {
namespace {

Tensor random_input(Shape s, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> d(numel_of(s));
  for (double& v : d) v = n(rng);
  return Tensor(std::move(s), std::move(d), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(DynamicFilterTest, PreservesShape) {
  Rng rng(1);
  DynamicFilter f(rng);
  for (std::size_t t : {1u, 98u, 200u}) {
    EXPECT_EQ(f.forward(random_input({40, t}, t)).shape(), (Shape{40, t}));
    EXPECT_EQ(f.forward(random_input({3, 40, t}, t)).shape(), (Shape{3, 40, t}));
  }
  EXPECT_THROW(f.forward(random_input({39, 10}, 1)), DimensionError);
  EXPECT_THROW(f.forward(random_input({2, 41, 10}, 1)), DimensionError);
}

TEST(DynamicFilterTest, ZeroInputGivesZeroAndBiasOnlyKernel) {
  Rng rng(2);
  DynamicFilter f(rng);
  Tensor zero = Tensor::zeros({40, 12});
  for (double v : values(f.forward(zero))) EXPECT_EQ(v, 0.0);
  // Kernel from the bias path alone: softmax(relu(b1) W2 + b2).
  std::vector<double> z(9);
  for (std::size_t k = 0; k < 9; ++k) {
    z[k] = f.fc2_b[k];
    for (std::size_t i = 0; i < 40; ++i) z[k] += std::max(0.0, f.fc1_b[i]) * f.fc2_w[i * 9 + k];
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0;
  for (double& v : z) total += (v = std::exp(v - mx));
  Tensor k = f.kernels(zero);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(k[i], z[i] / total, 1e-15);
}

TEST(DynamicFilterTest, IdfGradientIsNonzeroAndMatchesFiniteDifferences) {
  Rng rng(3);
  DynamicFilter f(rng);
  Tensor x = random_input({2, 40, 7}, 4);
  Tensor w = random_input({2, 40, 7}, 5);
  auto loss = [&] { return sum(mul(f.forward(x), w)); };
  backward(loss());
  double norm = 0;
  for (double g : f.fc1_w.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  std::vector<Coordinate> coords;
  for (std::size_t i = 0; i < 40 * 40; i += 37) coords.emplace_back(0, i);
  for (std::size_t i = 0; i < 40 * 9; i += 11) coords.emplace_back(1, i);
  for (std::size_t i = 0; i < 9; ++i) coords.emplace_back(2, i);
  EXPECT_LT(finite_diff_check(loss, {f.fc1_w, f.fc2_w, f.static_kernel}, coords, 1e-5), 1e-4);
}

TEST(DynamicEmbeddingTest, StridedLengthsAndOutput) {
  EXPECT_EQ(same_out_len(98, 2), 49u);
  EXPECT_EQ(same_out_len(49, 2), 25u);
  Rng rng(6);
  DynamicEmbedding e(rng);
  Tensor h = relu(conv1d_temporal(random_input({40, 98}, 1), e.w1, std::nullopt, 2, 1));
  EXPECT_EQ(h.shape(), (Shape{40, 49}));
  EXPECT_EQ(conv1d_temporal(h, e.w2, std::nullopt, 2, 1).shape(), (Shape{128, 25}));
  EXPECT_EQ(e.forward(random_input({40, 98}, 1)).shape(), (Shape{128}));
  EXPECT_EQ(e.forward(random_input({5, 40, 98}, 1)).shape(), (Shape{5, 128}));
  EXPECT_NO_THROW(e.forward(random_input({40, 4}, 1)));
  EXPECT_THROW(e.forward(random_input({40, 3}, 1)), DimensionError);
}

TEST(DynamicEmbeddingTest, ZeroWeightsGiveZero) {
  Rng rng(7);
  DynamicEmbedding e(rng);
  for (double& v : e.w1.mutable_data()) v = 0.0;
  for (double& v : e.w2.mutable_data()) v = 0.0;
  for (double v : values(e.forward(random_input({40, 30}, 2)))) EXPECT_EQ(v, 0.0);
}

// Naive per-column reference: with a constant column c, output column `to`
// of a zero-padded conv sums the taps that land inside the input.
std::vector<std::vector<double>> constant_conv_oracle(const std::vector<std::vector<double>>& cols,
                                                      const Tensor& w, std::size_t stride) {
  const std::size_t t_in = cols.size(), k = w.dim(0), cin = w.dim(1), cout = w.dim(2);
  const std::size_t t_out = (t_in + stride - 1) / stride;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(
      std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>((t_out - 1) * stride + k) -
                                   static_cast<std::ptrdiff_t>(t_in), 0) / 2);
  std::vector<std::vector<double>> out(t_out, std::vector<double>(cout, 0.0));
  for (std::size_t to = 0; to < t_out; ++to) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * stride + j) - pad;
      if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(t_in)) continue;
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t o = 0; o < cout; ++o) {
          out[to][o] += w[(j * cin + c) * cout + o] * cols[static_cast<std::size_t>(ti)][c];
        }
      }
    }
  }
  return out;
}

TEST(DynamicEmbeddingTest, ConstantInputMatchesColumnOracle) {
  Rng rng(8);
  DynamicEmbedding e(rng);
  const std::size_t t = 120;
  std::vector<double> col(40);
  Rng r2(9);
  std::normal_distribution<double> n;
  for (double& v : col) v = n(r2);
  std::vector<double> data(40 * t);
  for (std::size_t f = 0; f < 40; ++f) std::fill(&data[f * t], &data[f * t] + t, col[f]);
  Tensor x({40, t}, data);

  std::vector<std::vector<double>> cols(t, col);
  auto h1 = constant_conv_oracle(cols, e.w1, 2);
  for (auto& c : h1) for (double& v : c) v = std::max(0.0, v);
  auto h2 = constant_conv_oracle(h1, e.w2, 2);
  std::vector<double> tap(128, 0.0);
  for (const auto& c : h2) for (std::size_t o = 0; o < 128; ++o) tap[o] += c[o] / h2.size();
  // Columns whose receptive field avoids the zero padding are identical.
  for (std::size_t to = 3; to + 5 < h2.size(); ++to) {
    for (std::size_t o = 0; o < 128; ++o) EXPECT_NEAR(h2[to][o], h2[3][o], 1e-12);
  }
  Tensor h = e.forward(x);
  for (std::size_t o = 0; o < 128; ++o) EXPECT_NEAR(h[o], tap[o], 1e-12);
}

TEST(TenetTest, OutputContract) {
  Rng rng(10);
  TenetClassifier net(TenetOptions{}, rng);
  auto out = net.forward(random_input({40, 98}, 11));
  EXPECT_EQ(out.embedding.shape(), (Shape{32}));
  EXPECT_EQ(out.logits.shape(), (Shape{12}));
  auto again = net.forward(random_input({40, 98}, 11));
  EXPECT_EQ(values(out.embedding), values(again.embedding));
  EXPECT_EQ(values(out.logits), values(again.logits));
  auto batched = net.forward(random_input({4, 40, 98}, 12));
  EXPECT_EQ(batched.embedding.shape(), (Shape{4, 32}));
  EXPECT_EQ(batched.logits.shape(), (Shape{4, 12}));
  EXPECT_THROW(net.forward(random_input({32, 98}, 1)), DimensionError);
}

TEST(TenetTest, PointwiseOnlyVariantIgnoresFrameOrder) {
  TenetOptions o;
  o.stem_kernel = 1;
  o.depthwise_kernel = 1;
  o.stride2_blocks = {};
  Rng rng(13);
  TenetClassifier net(o, rng);
  const std::size_t t = 20;
  Tensor x = random_input({40, t}, 14);
  std::vector<std::size_t> perm(t);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> p(40 * t);
  for (std::size_t f = 0; f < 40; ++f) {
    for (std::size_t i = 0; i < t; ++i) p[f * t + i] = x[f * t + perm[i]];
  }
  auto a = net.forward(x), b = net.forward(Tensor({40, t}, p));
  for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(a.embedding[i], b.embedding[i], 1e-9);
}

TEST(Accounting, SingleFullyConnectedLayer) {
  Rng rng(15);
  DynamicFilter f(rng);
  EXPECT_EQ(f.fc1_w.numel() + f.fc1_b.numel(), 1640u);
  EXPECT_EQ(detail::fc_cost(40, 40, false).flops(), 2u * 40 * 40);
}

TEST(Accounting, ParameterCountsNearReference) {
  KwsModel tenet(*model_by_name("tenet12"), 1);
  KwsModel ldy(*model_by_name("ldy-tenet12"), 1);
  const double p = static_cast<double>(count_params(tenet));
  EXPECT_NEAR(p, 100000.0, 10000.0);
  const auto delta = count_params(ldy) - count_params(tenet);
  EXPECT_EQ(delta, 40u * 40 + 40 + 40 * 9 + 9 + 9);
  EXPECT_NEAR(static_cast<double>(delta), 2000.0, 500.0);
  // The training graph adds exactly the embedding branch.
  EXPECT_EQ(count_params(ldy, false) - count_params(ldy), 9u * 40 * 40 + 9u * 40 * 128);
}

TEST(Accounting, FlopsNearReferenceAndLinearInTime) {
  KwsModel tenet(*model_by_name("tenet12"), 1);
  const double f = static_cast<double>(count_flops(tenet, 98));
  EXPECT_NEAR(f, 6.42e6, 0.15 * 6.42e6);
  for (const char* name : {"tenet12", "ldy-tenet12"}) {
    KwsModel m(*model_by_name(name), 1);
    for (std::size_t t : {4u, 48u, 100u}) {
      EXPECT_EQ(m.flops(2 * t).conv_flops(), 2 * m.flops(t).conv_flops()) << name << " T=" << t;
    }
  }
}

TEST(Accounting, InferenceGraphHasNoEmbeddingWeights) {
  ModelOptions o;
  o.embedding = false;
  KwsModel m(o, 5);
  EXPECT_FALSE(m.has_embedding());
  for (const auto& p : m.parameters()) EXPECT_FALSE(p.name.starts_with("embed.")) << p.name;
  EXPECT_THROW(m.forward(random_input({40, 16}, 1), true), ConfigError);
  KwsModel full(ModelOptions{}, 5);
  for (const auto& p : full.parameters(true)) EXPECT_FALSE(p.name.starts_with("embed."));
  // Same seed: same filter and classifier weights with or without the branch.
  auto a = m.parameters(), b = full.parameters(true);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(values(a[i].value), values(b[i].value));
  }
}

TEST(Parameters, NamesFollowNetworkLayerParam) {
  KwsModel m(ModelOptions{}, 3);
  std::set<std::string> seen;
  for (const auto& p : m.parameters()) {
    EXPECT_EQ(std::count(p.name.begin(), p.name.end(), '.'), 2) << p.name;
    EXPECT_TRUE(seen.insert(p.name).second) << p.name;
    const auto net = p.name.substr(0, p.name.find('.'));
    EXPECT_TRUE(net == "ldy" || net == "embed" || net == "tenet") << p.name;
  }
}

TEST(EndToEnd, TotalLossGradientPerNetwork) {
  Rng rng(21);
  for (const char* net : {"ldy", "embed", "tenet"}) {
    EXPECT_LT(model_gradcheck(net, 20, rng), 1e-4) << net;
  }
}

TEST(GradcheckRegistry, EveryScopePasses) {
  for (const char* scope : {"ops", "losses", "models"}) {
    const auto cases = gradcheck_cases(scope);
    ASSERT_FALSE(cases.empty()) << scope;
    for (const auto& r : run_gradcheck(cases, 0)) {
      EXPECT_TRUE(r.pass) << r.name << " " << r.max_rel_error;
    }
  }
  std::vector<std::string> names;
  for (const auto& c : gradcheck_cases("losses")) names.push_back(c.name);
  EXPECT_EQ(names, (std::vector<std::string>{"L_CE", "L_M", "L_I", "L_O"}));
  EXPECT_EQ(gradcheck_cases("all").size(), gradcheck_cases("ops").size() + 4 + 3);
  EXPECT_TRUE(gradcheck_cases("nothing").empty());
  EXPECT_FALSE(run_gradcheck({corrupted_case()}, 0)[0].pass);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  KwsModel m(ModelOptions{}, 8);
  const auto path = (std::filesystem::temp_directory_path() / "orthokws_ckpt_test.bin").string();
  Checkpoint ck = model_checkpoint(m);
  ck.meta["step"] = "42";
  save_checkpoint(ck, path);
  Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.meta.at("step"), "42");
  ASSERT_EQ(back.arrays.size(), ck.arrays.size());
  KwsModel other(ModelOptions{}, 9);
  load_weights(other, back);
  auto a = m.parameters(), b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto va = values(a[i].value), vb = values(b[i].value);
    EXPECT_EQ(0, std::memcmp(va.data(), vb.data(), va.size() * sizeof(double))) << a[i].name;
  }
  std::filesystem::remove(path);
}

TEST(CheckpointTest, DocumentedByteLayout) {
  Checkpoint ck;
  ck.meta["step"] = "7";
  ck.arrays.emplace_back("tenet.fc.bias", Tensor({2}, {1.0, -2.5}));
  const auto path = (std::filesystem::temp_directory_path() / "orthokws_layout.bin").string();
  save_checkpoint(ck, path);
  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), {});
  const std::string head = "orthokws-checkpoint 1\nmeta step 7\narray tenet.fc.bias 2\nend\n";
  ASSERT_EQ(bytes.size(), head.size() + 16);
  EXPECT_EQ(bytes.substr(0, head.size()), head);
  // 1.0 = 0x3ff0000000000000 little-endian.
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 7]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 6]), 0xf0);
  EXPECT_EQ(bytes[head.size()], 0);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, InferenceOnlyCheckpointAndMismatches) {
  KwsModel m(ModelOptions{}, 8);
  Checkpoint inf = model_checkpoint(m, true);
  for (const auto& [n, t] : inf.arrays) EXPECT_FALSE(n.starts_with("embed."));
  ModelOptions o;
  o.embedding = false;
  KwsModel eval_model(o, 1);
  EXPECT_NO_THROW(load_weights(eval_model, model_checkpoint(m)));
  KwsModel plain(*model_by_name("tenet12"), 1);
  EXPECT_THROW(load_weights(plain, inf), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent.ckpt"), CheckpointError);
}

}  // namespace
}  // namespace orthokws
