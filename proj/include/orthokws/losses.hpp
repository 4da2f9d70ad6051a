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

// Embedding-space losses: a pairwise margin loss on the dynamic embeddings,
// and a centroid-based intra-class loss and orthogonality loss on the keyword
// embeddings.
//
// Embedding batches are [M x D] tensors with one row per sample. Centroids are
// stored the same way, one row per class present in the batch, classes sorted
// by id; the column-per-class matrix is transpose(centroids).

#ifndef ORTHOKWS_LOSSES_HPP_
#define ORTHOKWS_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthokws/ops.hpp"
#include "orthokws/tensor.hpp"

namespace orthokws {

class DegenerateBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LossWeights {
  double margin = 1.0;    // alpha
  double metric = 0.25;   // lambda1, dynamic-embedding pair loss
  double intra = 0.01;    // lambda2, centroid loss
  double ortho = 0.01;    // lambda3, orthogonality loss
};

enum class MetricReduction {
  kHingedMean,   // hinge on different-class pairs, mean over ordered i != j
  kLiteralSum,   // sum_ij y_ij * d_ij + margin, no hinge, self-pairs included
};

namespace detail {

inline void check_batch(const Tensor& vectors, std::span<const int> labels,
                        const char* who) {
  if (vectors.ndim() != 2) {
    throw DimensionError(std::string(who) + ": embeddings must be [M x D], got " +
                         shape_str(vectors.shape()));
  }
  if (labels.size() != vectors.dim(0)) {
    throw DimensionError(std::string(who) + ": " +
                         std::to_string(vectors.dim(0)) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
}

inline std::vector<int> sorted_classes(std::span<const int> labels) {
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

inline Tensor identity(std::size_t n) {
  Tensor eye = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) eye.mutable_data()[i * n + i] = 1.0;
  return eye;
}

}  // namespace detail

/// Pairwise margin loss on dynamic embeddings H [M x D].
///
/// Same-class pairs contribute d + margin, different-class pairs
/// max(0, margin - d), with d the squared distance.
inline Tensor metric_loss(const Tensor& h, std::span<const int> labels,
                          double margin,
                          MetricReduction reduction = MetricReduction::kHingedMean) {
  detail::check_batch(h, labels, "metric_loss");
  const std::size_t m = h.dim(0);
  if (m < 2) throw DegenerateBatchError("metric_loss: need at least 2 samples");
  Tensor dist = pairwise_sq_dist(h);
  Tensor same = Tensor::zeros({m, m});
  Tensor diff = Tensor::zeros({m, m});
  std::size_t n_same = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const bool s = labels[i] == labels[j];
      if (reduction == MetricReduction::kLiteralSum) {
        same.mutable_data()[i * m + j] = s ? 1.0 : -1.0;
        continue;
      }
      if (i == j) continue;
      (s ? same : diff).mutable_data()[i * m + j] = 1.0;
      n_same += s;
    }
  }
  if (reduction == MetricReduction::kLiteralSum) {
    return add_scalar(sum(mul(same, dist)), margin);
  }
  Tensor pull = add_scalar(sum(mul(same, dist)),
                           margin * static_cast<double>(n_same));
  Tensor push = sum(mul(diff, relu(add_scalar(scale(dist, -1.0), margin))));
  return scale(add(pull, push), 1.0 / static_cast<double>(m * (m - 1)));
}

/// Per-class means of a keyword-embedding batch.
struct CentroidSet {
  Tensor centroids;             // [C x D], row k is class class_ids[k]
  std::vector<int> class_ids;   // ascending
  std::size_t num_classes() const { return class_ids.size(); }
  std::size_t dim() const { return centroids.dim(1); }
  /// Mean of the centroids, [D].
  std::vector<double> global_mean() const {
    std::vector<double> mu(dim(), 0.0);
    for (std::size_t k = 0; k < num_classes(); ++k) {
      for (std::size_t i = 0; i < dim(); ++i) mu[i] += centroids[k * dim() + i];
    }
    for (double& v : mu) v /= static_cast<double>(num_classes());
    return mu;
  }
};

namespace detail {

// One-hot membership [M x C] and the averaging operator [C x M].
inline std::pair<Tensor, Tensor> membership(std::span<const int> labels,
                                            const std::vector<int>& ids) {
  const std::size_t m = labels.size(), c = ids.size();
  Tensor onehot = Tensor::zeros({m, c});
  Tensor average = Tensor::zeros({c, m});
  std::vector<std::size_t> counts(c, 0);
  std::vector<std::size_t> slot(m);
  for (std::size_t i = 0; i < m; ++i) {
    slot[i] = static_cast<std::size_t>(
        std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
    counts[slot[i]] += 1;
  }
  for (std::size_t i = 0; i < m; ++i) {
    onehot.mutable_data()[i * c + slot[i]] = 1.0;
    average.mutable_data()[slot[i] * m + i] =
        1.0 / static_cast<double>(counts[slot[i]]);
  }
  return {onehot, average};
}

}  // namespace detail

/// Class means computed inside the graph, so gradients reach the samples.
inline CentroidSet class_centroids(const Tensor& e, std::span<const int> labels) {
  detail::check_batch(e, labels, "class_centroids");
  std::vector<int> ids = detail::sorted_classes(labels);
  auto [onehot, average] = detail::membership(labels, ids);
  return CentroidSet{matmul(average, e), std::move(ids)};
}

/// (1/C) sum_k sum_i ||E_i^k - mean_k||^2 with the class means in-graph.
inline Tensor intra_class_loss(const Tensor& e, std::span<const int> labels) {
  detail::check_batch(e, labels, "intra_class_loss");
  std::vector<int> ids = detail::sorted_classes(labels);
  auto [onehot, average] = detail::membership(labels, ids);
  Tensor centroids = matmul(average, e);
  Tensor residual = sub(e, matmul(onehot, centroids));
  return scale(sum(square(residual)), 1.0 / static_cast<double>(ids.size()));
}

/// Squared distances between centroids, [C x C] with zero diagonal.
inline Tensor distance_matrix(const CentroidSet& cs) {
  return pairwise_sq_dist(cs.centroids);
}

/// Gram matrix of mean-centred centroids over (C - 1), [C x C].
inline Tensor centroid_covariance(const CentroidSet& cs) {
  const std::size_t c = cs.num_classes();
  if (c < 2) {
    throw DegenerateBatchError("centroid_covariance: need at least 2 classes, got " +
                               std::to_string(c));
  }
  const std::size_t d = cs.dim();
  Tensor mu = reshape(mean_over_time(transpose(cs.centroids)), {1, d});
  Tensor centred = sub(cs.centroids, matmul(Tensor::full({c, 1}, 1.0), mu));
  return scale(matmul(centred, transpose(centred)),
               1.0 / static_cast<double>(c - 1));
}

/// Zeroes the diagonal of a square matrix.
inline Tensor off_diagonal(const Tensor& a) {
  const std::size_t n = a.dim(0);
  Tensor mask = Tensor::full({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) mask.mutable_data()[i * n + i] = 0.0;
  return mul(mask, a);
}

enum class SpectralGradient {
  kUnrolled,        // differentiate through every power-iteration step
  kFrozenVectors,   // treat the final singular vectors as constants: u v^T
};

inline constexpr std::uint64_t kPowerIterationSeed = 0x5eed5eedULL;

/// Fixed-seed random unit start vector, [n x 1].
inline Tensor power_iteration_start(std::size_t n) {
  std::mt19937_64 rng(kPowerIterationSeed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  double nrm = 0.0;
  for (double& x : v) {
    x = normal(rng);
    nrm += x * x;
  }
  nrm = std::sqrt(nrm);
  for (double& x : v) x /= nrm;
  return Tensor({n, 1}, std::move(v));
}

/// Largest singular value of a matrix by power iteration on A^T A.
///
/// A zero matrix yields exactly 0 with no gradient path.
inline Tensor spectral_norm(const Tensor& a, int iters = 10,
                            SpectralGradient mode = SpectralGradient::kUnrolled) {
  if (a.ndim() != 2) {
    throw DimensionError("spectral_norm: expected a matrix, got " +
                         shape_str(a.shape()));
  }
  if (iters < 1) throw ConfigError("spectral_norm: iters must be >= 1");
  for (double x : a.data()) {
    if (!std::isfinite(x)) throw NumericError("spectral_norm: non-finite input");
  }
  const std::size_t n = a.dim(1);

  if (mode == SpectralGradient::kUnrolled) {
    Tensor v = power_iteration_start(n);
    Tensor at = transpose(a);
    for (int it = 0; it < iters; ++it) {
      Tensor w = matmul(at, matmul(a, v));
      Tensor nrm = sqrt(sum(square(w)));
      if (nrm.item() == 0.0) return Tensor::scalar(0.0);
      v = div_scalar(w, nrm);
    }
    Tensor av = matmul(a, v);
    if (sum(square(av)).item() == 0.0) return Tensor::scalar(0.0);
    return sqrt(sum(square(av)));
  }

  // Plain arithmetic, then one node whose backward is u v^T.
  Tensor frozen = a.detach();
  Tensor v = power_iteration_start(n);
  for (int it = 0; it < iters; ++it) {
    Tensor w = matmul(transpose(frozen), matmul(frozen, v));
    const double nrm = std::sqrt(sum(square(w)).item());
    if (nrm == 0.0) return Tensor::scalar(0.0);
    v = scale(w, 1.0 / nrm);
  }
  Tensor av = matmul(frozen, v);
  const double sigma = std::sqrt(sum(square(av)).item());
  if (sigma == 0.0) return Tensor::scalar(0.0);
  const std::size_t m = a.dim(0);
  std::vector<double> outer(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) outer[i * n + j] = av[i] / sigma * v[j];
  }
  return detail::make_result(Shape{}, {sigma}, "spectral_norm", {a.node()},
                             [outer = std::move(outer)](detail::Node& self) {
                               detail::Node& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               for (std::size_t i = 0; i < outer.size(); ++i) {
                                 in.grad[i] += self.grad[0] * outer[i];
                               }
                             });
}

/// Argument of the orthogonality loss:
/// offdiag(covariance) + exp(-distances) - I.
inline Tensor orthogonality_argument(const CentroidSet& cs) {
  Tensor cov = centroid_covariance(cs);
  Tensor dist = distance_matrix(cs);
  Tensor arg = add(off_diagonal(cov), exp(scale(dist, -1.0)));
  return sub(arg, detail::identity(cs.num_classes()));
}

inline Tensor orthogonal_loss(const CentroidSet& cs, int iters = 10,
                              SpectralGradient mode = SpectralGradient::kUnrolled) {
  return spectral_norm(orthogonality_argument(cs), iters, mode);
}

/// Mean |off-diagonal| of the centroid covariance (training diagnostic).
inline double covariance_offdiag_mass(const CentroidSet& cs) {
  const std::size_t c = cs.num_classes();
  if (c < 2) return 0.0;
  Tensor cov = centroid_covariance(cs);
  double s = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (i != j) s += std::abs(cov[i * c + j]);
    }
  }
  return s / static_cast<double>(c * (c - 1));
}

inline Tensor total_loss(const Tensor& ce, const Tensor& lm, const Tensor& li,
                         const Tensor& lo, const LossWeights& w) {
  Tensor t = add(ce, scale(lm, w.metric));
  t = add(t, scale(li, w.intra));
  return add(t, scale(lo, w.ortho));
}

}  // namespace orthokws

#endif  // ORTHOKWS_LOSSES_HPP_
