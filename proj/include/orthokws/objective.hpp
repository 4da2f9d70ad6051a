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

#ifndef ORTHOKWS_OBJECTIVE_HPP_
#define ORTHOKWS_OBJECTIVE_HPP_

#include <span>

#include "orthokws/losses.hpp"
#include "orthokws/models.hpp"
#include "orthokws/ops.hpp"

namespace orthokws {

struct ObjectiveOptions {
  LossWeights weights;
  int power_iters = 10;
  SpectralGradient spectral = SpectralGradient::kUnrolled;
  MetricReduction metric = MetricReduction::kHingedMean;
  bool ce_only = false;  // skip every auxiliary term
};

struct LossTerms {
  Tensor ce, lm, li, lo, total;
  Tensor logits;  // [B x classes]
};

/// Forward pass and combined loss for one labelled batch.
///
/// With ce_only the auxiliary terms are reported as zero and never built,
/// so the embedding branch is not run.
inline LossTerms objective(const KwsModel& model, const Tensor& x, std::span<const int> labels,
                           const ObjectiveOptions& opt) {
  auto out = model.forward(x, !opt.ce_only);
  LossTerms t;
  t.logits = out.logits;
  t.ce = softmax_cross_entropy(out.logits, labels);
  if (opt.ce_only) {
    t.lm = t.li = t.lo = Tensor::scalar(0.0);
    t.total = t.ce;
    return t;
  }
  t.lm = metric_loss(*out.dynamic, labels, opt.weights.margin, opt.metric);
  t.li = intra_class_loss(out.embedding, labels);
  t.lo = orthogonal_loss(class_centroids(out.embedding, labels), opt.power_iters, opt.spectral);
  t.total = total_loss(t.ce, t.lm, t.li, t.lo, opt.weights);
  return t;
}

}  // namespace orthokws

#endif  // ORTHOKWS_OBJECTIVE_HPP_
