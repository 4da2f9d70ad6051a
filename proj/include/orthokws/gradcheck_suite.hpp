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

#ifndef ORTHOKWS_GRADCHECK_SUITE_HPP_
#define ORTHOKWS_GRADCHECK_SUITE_HPP_

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "orthokws/gradcheck.hpp"
#include "orthokws/losses.hpp"
#include "orthokws/models.hpp"
#include "orthokws/objective.hpp"
#include "orthokws/ops.hpp"
#include "orthokws/random.hpp"

namespace orthokws {

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradStep = 1e-5;

struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;  // worst relative error over its trials
};

struct GradResult {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

namespace detail {

inline Tensor random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> d(numel_of(shape));
  for (double& v : d) v = u(rng);
  return Tensor(std::move(shape), std::move(d), true);
}

inline std::size_t random_dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Labels covering `classes` ids, each at least twice, shuffled.
inline std::vector<int> random_labels(std::size_t m, int classes, Rng& rng) {
  std::vector<int> l(m);
  for (std::size_t i = 0; i < m; ++i)
    l[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  std::shuffle(l.begin(), l.end(), rng);
  return l;
}

/// Repeats a check over fresh random inputs and keeps the worst error.
inline GradCase trials(std::string name, int n, std::function<double(Rng&)> once) {
  return {std::move(name), [n, once = std::move(once)](Rng& rng) {
            double worst = 0.0;
            for (int i = 0; i < n; ++i) worst = std::max(worst, once(rng));
            return worst;
          }};
}

inline double all_coords(const std::function<Tensor()>& loss, const std::vector<Tensor>& params) {
  std::vector<Coordinate> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) coords.emplace_back(p, i);
  }
  return finite_diff_check(loss, params, coords, kGradStep);
}

/// Scalar read-out with fixed random weights so every output element
/// reaches the loss with a distinct coefficient.
inline Tensor probe(const Tensor& y, Rng& rng) {
  Tensor w = random_leaf(y.shape(), rng);
  return sum(mul(y, w.detach()));
}

}  // namespace detail

/// One case per differentiable primitive at randomized small shapes.
inline std::vector<GradCase> op_cases() {
  using detail::all_coords;
  using detail::probe;
  using detail::random_dim;
  using detail::random_leaf;
  using detail::trials;
  std::vector<GradCase> c;
  auto elementwise = [&](std::string name, std::function<Tensor(const Tensor&)> f, double lo,
                         double hi) {
    c.push_back(trials(std::move(name), 10, [f, lo, hi](Rng& rng) {
      Tensor x = random_leaf({random_dim(rng, 1, 8), random_dim(rng, 1, 8)}, rng, lo, hi);
      Tensor w = random_leaf(f(x).shape(), rng).detach();
      return all_coords([&] { return sum(mul(f(x), w)); }, {x});
    }));
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f) {
    c.push_back(trials(std::move(name), 10, [f](Rng& rng) {
      Shape s{random_dim(rng, 1, 8), random_dim(rng, 1, 8)};
      Tensor a = random_leaf(s, rng), b = random_leaf(s, rng);
      Tensor w = random_leaf(s, rng).detach();
      return all_coords([&] { return sum(mul(f(a, b), w)); }, {a, b});
    }));
  };
  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); });
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  elementwise("scale", [](const Tensor& x) { return scale(x, -1.7); }, -1, 1);
  elementwise("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }, -1, 1);
  elementwise("relu", [](const Tensor& x) { return relu(x); }, -1, 1);
  elementwise("exp", [](const Tensor& x) { return exp(x); }, -2, 2);
  elementwise("sqrt", [](const Tensor& x) { return sqrt(x); }, 0.2, 2);
  elementwise("square", [](const Tensor& x) { return square(x); }, -2, 2);
  elementwise("mean", [](const Tensor& x) { return scale(mean(x), 3.0); }, -1, 1);
  elementwise("transpose", [](const Tensor& x) { return transpose(x); }, -1, 1);
  elementwise("reshape", [](const Tensor& x) { return reshape(x, {x.numel()}); }, -1, 1);
  elementwise("softmax_rows", [](const Tensor& x) { return softmax_rows(x); }, -2, 2);
  elementwise("mean_over_time", [](const Tensor& x) { return mean_over_time(x); }, -1, 1);
  elementwise("pairwise_sq_dist", [](const Tensor& x) { return pairwise_sq_dist(x); }, -1, 1);
  c.push_back(trials("sum", 10, [](Rng& rng) {
    Tensor x = random_leaf({random_dim(rng, 1, 8), random_dim(rng, 1, 8)}, rng);
    return all_coords([&] { return square(sum(x)); }, {x});
  }));
  c.push_back(trials("div_scalar", 10, [](Rng& rng) {
    Tensor x = random_leaf({random_dim(rng, 1, 8), random_dim(rng, 1, 8)}, rng);
    Tensor s = random_leaf({}, rng, 0.5, 2.0);
    Tensor w = random_leaf(x.shape(), rng).detach();
    return all_coords([&] { return sum(mul(div_scalar(x, s), w)); }, {x, s});
  }));
  c.push_back(trials("matmul", 10, [](Rng& rng) {
    const std::size_t m = random_dim(rng, 1, 8), k = random_dim(rng, 1, 8),
                      n = random_dim(rng, 1, 8);
    Tensor a = random_leaf({m, k}, rng), b = random_leaf({k, n}, rng);
    Tensor w = random_leaf({m, n}, rng).detach();
    return all_coords([&] { return sum(mul(matmul(a, b), w)); }, {a, b});
  }));
  c.push_back(trials("linear", 10, [](Rng& rng) {
    const std::size_t m = random_dim(rng, 1, 8), k = random_dim(rng, 1, 8),
                      n = random_dim(rng, 1, 8);
    Tensor x = random_leaf({m, k}, rng), w = random_leaf({k, n}, rng), b = random_leaf({n}, rng);
    Tensor r = random_leaf({m, n}, rng).detach();
    return all_coords([&] { return sum(mul(linear(x, w, b), r)); }, {x, w, b});
  }));
  c.push_back(trials("softmax_cross_entropy", 10, [](Rng& rng) {
    const std::size_t m = random_dim(rng, 1, 8), n = random_dim(rng, 2, 8);
    Tensor x = random_leaf({m, n}, rng, -2, 2);
    std::vector<int> labels(m);
    for (int& l : labels) l = static_cast<int>(random_dim(rng, 0, n - 1));
    return all_coords([&] { return softmax_cross_entropy(x, labels); }, {x});
  }));
  c.push_back(trials("conv1d_temporal", 10, [](Rng& rng) {
    const std::size_t b = random_dim(rng, 1, 3), cin = random_dim(rng, 1, 4),
                      cout = random_dim(rng, 1, 4), t = random_dim(rng, 1, 8),
                      k = random_dim(rng, 1, 4), stride = random_dim(rng, 1, 2);
    Tensor x = random_leaf({b, cin, t}, rng), w = random_leaf({k, cin, cout}, rng),
           bias = random_leaf({cout}, rng);
    Rng probe_rng(rng());
    return all_coords([&] {
      Rng r = probe_rng;
      return probe(conv1d_temporal(x, w, bias, stride, 1), r);
    }, {x, w, bias});
  }));
  c.push_back(trials("conv1d_temporal_grouped", 10, [](Rng& rng) {
    const std::size_t groups = random_dim(rng, 1, 4), b = random_dim(rng, 1, 3),
                      t = random_dim(rng, 1, 8), k = random_dim(rng, 1, 5),
                      stride = random_dim(rng, 1, 2), mult = random_dim(rng, 1, 2);
    Tensor x = random_leaf({b, groups, t}, rng), w = random_leaf({k, 1, groups * mult}, rng),
           bias = random_leaf({groups * mult}, rng);
    Rng probe_rng(rng());
    return all_coords([&] {
      Rng r = probe_rng;
      return probe(conv1d_temporal(x, w, bias, stride, groups), r);
    }, {x, w, bias});
  }));
  c.push_back(trials("conv2d_3x3", 10, [](Rng& rng) {
    const std::size_t b = random_dim(rng, 1, 3), f = random_dim(rng, 1, 6),
                      t = random_dim(rng, 1, 6);
    Tensor x = random_leaf({b, f, t}, rng);
    Tensor k = random_leaf({random_dim(rng, 0, 1) ? b : 1, 9}, rng);
    Rng probe_rng(rng());
    return all_coords([&] {
      Rng r = probe_rng;
      return probe(conv2d_3x3(x, k), r);
    }, {x, k});
  }));
  c.push_back(trials("spectral_norm", 10, [](Rng& rng) {
    const std::size_t n = random_dim(rng, 2, 6);
    Tensor a = random_leaf({n, random_dim(rng, 2, 6)}, rng);
    return all_coords([&] { return spectral_norm(a, 10); }, {a});
  }));
  return c;
}

/// The four training losses at randomized small batches.
inline std::vector<GradCase> loss_cases() {
  using detail::all_coords;
  using detail::random_dim;
  using detail::random_labels;
  using detail::random_leaf;
  using detail::trials;
  std::vector<GradCase> c;
  c.push_back(trials("L_CE", 10, [](Rng& rng) {
    const int classes = static_cast<int>(random_dim(rng, 2, 5));
    const std::size_t m = static_cast<std::size_t>(classes) * random_dim(rng, 1, 3);
    Tensor logits = random_leaf({m, static_cast<std::size_t>(classes)}, rng, -2, 2);
    auto labels = random_labels(m, classes, rng);
    return all_coords([&] { return softmax_cross_entropy(logits, labels); }, {logits});
  }));
  c.push_back(trials("L_M", 10, [](Rng& rng) {
    const int classes = static_cast<int>(random_dim(rng, 2, 4));
    const std::size_t m = static_cast<std::size_t>(classes) * 2;
    Tensor h = random_leaf({m, random_dim(rng, 2, 6)}, rng);
    auto labels = random_labels(m, classes, rng);
    return all_coords([&] { return metric_loss(h, labels, 1.0); }, {h});
  }));
  c.push_back(trials("L_I", 10, [](Rng& rng) {
    const int classes = static_cast<int>(random_dim(rng, 2, 4));
    const std::size_t m = static_cast<std::size_t>(classes) * random_dim(rng, 2, 3);
    Tensor e = random_leaf({m, random_dim(rng, 2, 6)}, rng);
    auto labels = random_labels(m, classes, rng);
    return all_coords([&] { return intra_class_loss(e, labels); }, {e});
  }));
  c.push_back(trials("L_O", 10, [](Rng& rng) {
    const int classes = static_cast<int>(random_dim(rng, 2, 5));
    const std::size_t m = static_cast<std::size_t>(classes) * random_dim(rng, 1, 3);
    Tensor e = random_leaf({m, random_dim(rng, 2, 6)}, rng);
    auto labels = random_labels(m, classes, rng);
    return all_coords([&] { return orthogonal_loss(class_centroids(e, labels)); }, {e});
  }));
  return c;
}

/// Total loss of the full model at T = 16 against `per_network` random
/// weights of one network ("ldy", "embed" or "tenet").
inline double model_gradcheck(const std::string& network, std::size_t per_network, Rng& rng) {
  KwsModel model(ModelOptions{}, rng());
  const std::size_t m = 6, t = 16;
  Tensor x = detail::random_leaf({m, kFeatureDim, t}, rng).detach();
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) {
    if (p.name.starts_with(network + ".")) params.push_back(p.value);
  }
  if (params.empty()) throw ConfigError("no parameters for network '" + network + "'");
  std::vector<std::size_t> offsets = {0};
  for (const auto& p : params) offsets.push_back(offsets.back() + p.numel());
  std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);
  std::vector<Coordinate> coords;
  for (std::size_t i = 0; i < per_network; ++i) {
    const std::size_t flat = pick(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat) - 1;
    const auto pi = static_cast<std::size_t>(it - offsets.begin());
    coords.emplace_back(pi, flat - *it);
  }
  ObjectiveOptions opt;
  auto loss = [&] { return objective(model, x, labels, opt).total; };
  return finite_diff_check(loss, params, coords, kGradStep);
}

inline std::vector<GradCase> model_cases() {
  std::vector<GradCase> c;
  for (const char* net : {"ldy", "embed", "tenet"}) {
    c.push_back({std::string("L_Total/") + net,
                 [net](Rng& rng) { return model_gradcheck(net, 20, rng); }});
  }
  return c;
}

/// Cases for a scope name; empty for an unknown scope.
inline std::vector<GradCase> gradcheck_cases(const std::string& scope) {
  std::vector<GradCase> out;
  auto append = [&out](std::vector<GradCase> v) {
    for (auto& c : v) out.push_back(std::move(c));
  };
  if (scope == "ops" || scope == "all") append(op_cases());
  if (scope == "losses" || scope == "all") append(loss_cases());
  if (scope == "models" || scope == "all") append(model_cases());
  return out;
}

/// A primitive whose backward is scaled by 1.5: the harness must flag it.
inline GradCase corrupted_case() {
  return detail::trials("corrupted_square", 1, [](Rng& rng) {
    Tensor x = detail::random_leaf({3, 3}, rng, 0.5, 1.5);
    auto bad_square = [](const Tensor& a) {
      std::vector<double> d(a.data().begin(), a.data().end());
      for (double& v : d) v *= v;
      return detail::make_result(a.shape(), std::move(d), "corrupted_square", {a.node()},
                                 [](detail::Node& self) {
                                   detail::Node& in = *self.inputs[0];
                                   for (std::size_t i = 0; i < in.grad.size(); ++i) {
                                     in.grad[i] += 3.0 * in.data[i] * self.grad[i];
                                   }
                                 });
    };
    return detail::all_coords([&] { return sum(bad_square(x)); }, {x});
  });
}

inline std::vector<GradResult> run_gradcheck(const std::vector<GradCase>& cases,
                                             std::uint64_t seed, double tol = kGradTolerance) {
  std::vector<GradResult> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Rng rng = make_rng(seed, Stream::kData, static_cast<std::uint32_t>(i));
    GradResult r{cases[i].name, cases[i].run(rng), false};
    r.pass = r.max_rel_error < tol;
    out.push_back(r);
  }
  return out;
}

}  // namespace orthokws

#endif  // ORTHOKWS_GRADCHECK_SUITE_HPP_
