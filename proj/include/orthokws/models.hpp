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

#ifndef ORTHOKWS_MODELS_HPP_
#define ORTHOKWS_MODELS_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "orthokws/ops.hpp"
#include "orthokws/random.hpp"
#include "orthokws/tensor.hpp"

namespace orthokws {

inline constexpr std::size_t kFeatureDim = 40;

struct NamedParam {
  std::string name;  // <network>.<layer>.<param>
  Tensor value;
};

/// Multiply-accumulates and elementwise operations of one forward pass.
/// FLOPs count a multiply-accumulate as two.
struct FlopCount {
  std::uint64_t macs = 0;
  std::uint64_t conv_macs = 0;  // share of macs in temporal/3x3 convolutions
  std::uint64_t elementwise = 0;

  std::uint64_t flops() const { return 2 * macs + elementwise; }
  std::uint64_t conv_flops() const { return 2 * conv_macs; }
  FlopCount& operator+=(const FlopCount& o) {
    macs += o.macs;
    conv_macs += o.conv_macs;
    elementwise += o.elementwise;
    return *this;
  }
};

namespace detail {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) leaf with gradient tracking.
inline Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> data(numel_of(shape));
  for (double& v : data) v = u(rng);
  return Tensor(std::move(shape), std::move(data), true);
}

/// [F x T] is promoted to a batch of one; anything else must be [B x F x T].
inline Tensor as_batch(const Tensor& x, std::size_t freq, const char* who) {
  if (x.ndim() == 2) {
    if (x.dim(0) != freq) {
      throw DimensionError(std::string(who) + ": expected " + std::to_string(freq) +
                           " feature rows, got " + shape_str(x.shape()));
    }
    return reshape(x, {1, x.dim(0), x.dim(1)});
  }
  if (x.ndim() != 3 || x.dim(1) != freq) {
    throw DimensionError(std::string(who) + ": expected [B x " + std::to_string(freq) +
                         " x T], got " + shape_str(x.shape()));
  }
  return x;
}

inline FlopCount conv_cost(std::size_t k, std::size_t cin, std::size_t cout, std::size_t t_out,
                           std::size_t groups, bool bias) {
  FlopCount c;
  c.macs = c.conv_macs = static_cast<std::uint64_t>(k) * (cin / groups) * cout * t_out;
  if (bias) c.elementwise = static_cast<std::uint64_t>(cout) * t_out;
  return c;
}

inline FlopCount fc_cost(std::size_t in, std::size_t out, bool bias) {
  FlopCount c;
  c.macs = static_cast<std::uint64_t>(in) * out;
  if (bias) c.elementwise = out;
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Input-dependent 3x3 kernel plus a static 3x3 kernel over the T-F map,
/// both added back onto the input.
class DynamicFilter {
 public:
  static constexpr std::size_t kTaps = 9;

  explicit DynamicFilter(Rng& rng)
      : fc1_w(detail::init_uniform({kFeatureDim, kFeatureDim}, kFeatureDim, rng)),
        fc1_b(detail::init_uniform({kFeatureDim}, kFeatureDim, rng)),
        fc2_w(detail::init_uniform({kFeatureDim, kTaps}, kFeatureDim, rng)),
        fc2_b(detail::init_uniform({kTaps}, kFeatureDim, rng)),
        static_kernel(detail::init_uniform({1, kTaps}, kTaps, rng)) {}

  /// Per-example kernels [B x 9], each a softmax over taps.
  Tensor kernels(const Tensor& x) const {
    Tensor xb = detail::as_batch(x, kFeatureDim, "dynamic_filter");
    Tensor h = relu(linear(mean_over_time(xb), fc1_w, fc1_b));
    return softmax_rows(linear(h, fc2_w, fc2_b));
  }

  Tensor forward(const Tensor& x) const {
    Tensor xb = detail::as_batch(x, kFeatureDim, "dynamic_filter");
    Tensor dynamic = conv2d_3x3(xb, kernels(xb));
    Tensor fixed = conv2d_3x3(xb, static_kernel);
    Tensor y = add(add(xb, dynamic), fixed);
    return x.ndim() == 2 ? reshape(y, x.shape()) : y;
  }

  std::vector<NamedParam> parameters() const {
    return {{"ldy.idf_fc1.weight", fc1_w}, {"ldy.idf_fc1.bias", fc1_b},
            {"ldy.idf_fc2.weight", fc2_w}, {"ldy.idf_fc2.bias", fc2_b},
            {"ldy.pdf.kernel", static_kernel}};
  }

  static FlopCount flops(std::size_t t) {
    FlopCount c;
    c.elementwise += kFeatureDim * t;  // time average
    c += detail::fc_cost(kFeatureDim, kFeatureDim, true);
    c.elementwise += kFeatureDim;
    c += detail::fc_cost(kFeatureDim, kTaps, true);
    c.elementwise += 3 * kTaps;              // softmax
    c.macs += 2 * kTaps * kFeatureDim * t;   // two 3x3 maps
    c.conv_macs += 2 * kTaps * kFeatureDim * t;
    c.elementwise += 2 * kFeatureDim * t;    // residual sums
    return c;
  }

  Tensor fc1_w, fc1_b, fc2_w, fc2_b, static_kernel;
};

/// Two stride-2 temporal convolutions with a ReLU between, then the time
/// average: [B x 40 x T] -> [B x 128].
class DynamicEmbedding {
 public:
  static constexpr std::size_t kKernel = 9;
  static constexpr std::size_t kHidden = 40;
  static constexpr std::size_t kDim = 128;
  static constexpr std::size_t kStride = 2;

  explicit DynamicEmbedding(Rng& rng)
      : w1(detail::init_uniform({kKernel, kFeatureDim, kHidden}, kKernel * kFeatureDim, rng)),
        w2(detail::init_uniform({kKernel, kHidden, kDim}, kKernel * kHidden, rng)) {}

  Tensor forward(const Tensor& x) const {
    Tensor xb = detail::as_batch(x, kFeatureDim, "dynamic_embedding");
    if (xb.dim(2) < 4) {
      throw DimensionError("dynamic_embedding: T=" + std::to_string(xb.dim(2)) +
                           " is too short for two stride-2 convolutions (need T >= 4)");
    }
    Tensor h = relu(conv1d_temporal(xb, w1, std::nullopt, kStride, 1));
    Tensor y = mean_over_time(conv1d_temporal(h, w2, std::nullopt, kStride, 1));
    return x.ndim() == 2 ? reshape(y, {kDim}) : y;
  }

  std::vector<NamedParam> parameters() const {
    return {{"embed.conv1.weight", w1}, {"embed.conv2.weight", w2}};
  }

  static FlopCount flops(std::size_t t) {
    const std::size_t t1 = same_out_len(t, kStride), t2 = same_out_len(t1, kStride);
    FlopCount c = detail::conv_cost(kKernel, kFeatureDim, kHidden, t1, 1, false);
    c.elementwise += kHidden * t1;
    c += detail::conv_cost(kKernel, kHidden, kDim, t2, 1, false);
    c.elementwise += kDim * t2;
    return c;
  }

  Tensor w1, w2;
};

struct TenetOptions {
  std::size_t channels = 32;
  std::size_t expansion = 3;
  std::size_t blocks = 12;
  std::size_t depthwise_kernel = 9;
  std::size_t stem_kernel = 3;
  std::vector<std::size_t> stride2_blocks = {0, 4};
  std::size_t num_classes = 12;
};

/// Stem conv, inverted-bottleneck blocks, global average pool, classifier.
class TenetClassifier {
 public:
  struct Block {
    std::size_t stride = 1;
    Tensor expand_w, expand_b, dw_w, dw_b, project_w, project_b;
  };

  struct Output {
    Tensor embedding;  // [B x channels]
    Tensor logits;     // [B x classes]
  };

  TenetClassifier(const TenetOptions& opt, Rng& rng) : opt_(opt) {
    const std::size_t c = opt.channels, e = opt.channels * opt.expansion, k = opt.depthwise_kernel;
    stem_w =
        detail::init_uniform({opt.stem_kernel, kFeatureDim, c}, opt.stem_kernel * kFeatureDim, rng);
    stem_b = detail::init_uniform({c}, opt.stem_kernel * kFeatureDim, rng);
    for (std::size_t i = 0; i < opt.blocks; ++i) {
      Block b;
      for (std::size_t s : opt.stride2_blocks) {
        if (s == i) b.stride = 2;
      }
      b.expand_w = detail::init_uniform({1, c, e}, c, rng);
      b.expand_b = detail::init_uniform({e}, c, rng);
      b.dw_w = detail::init_uniform({k, 1, e}, k, rng);
      b.dw_b = detail::init_uniform({e}, k, rng);
      b.project_w = detail::init_uniform({1, e, c}, e, rng);
      b.project_b = detail::init_uniform({c}, e, rng);
      blocks.push_back(std::move(b));
    }
    fc_w = detail::init_uniform({c, opt.num_classes}, c, rng);
    fc_b = detail::init_uniform({opt.num_classes}, c, rng);
  }

  Output forward(const Tensor& x) const {
    Tensor h = detail::as_batch(x, kFeatureDim, "tenet");
    h = relu(conv1d_temporal(h, stem_w, stem_b, 1, 1));
    const std::size_t e = opt_.channels * opt_.expansion;
    for (const auto& b : blocks) {
      Tensor y = relu(conv1d_temporal(h, b.expand_w, b.expand_b, 1, 1));
      y = relu(conv1d_temporal(y, b.dw_w, b.dw_b, b.stride, e));
      y = conv1d_temporal(y, b.project_w, b.project_b, 1, 1);
      h = b.stride == 1 ? add(h, y) : y;
    }
    Output out;
    out.embedding = mean_over_time(h);
    out.logits = linear(out.embedding, fc_w, fc_b);
    if (x.ndim() == 2) {
      out.embedding = reshape(out.embedding, {opt_.channels});
      out.logits = reshape(out.logits, {opt_.num_classes});
    }
    return out;
  }

  std::vector<NamedParam> parameters() const {
    std::vector<NamedParam> p = {{"tenet.stem.weight", stem_w}, {"tenet.stem.bias", stem_b}};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string l = "tenet.block" + std::to_string(i + 1) + "_";
      const auto& b = blocks[i];
      p.push_back({l + "expand.weight", b.expand_w});
      p.push_back({l + "expand.bias", b.expand_b});
      p.push_back({l + "depthwise.weight", b.dw_w});
      p.push_back({l + "depthwise.bias", b.dw_b});
      p.push_back({l + "project.weight", b.project_w});
      p.push_back({l + "project.bias", b.project_b});
    }
    p.push_back({"tenet.fc.weight", fc_w});
    p.push_back({"tenet.fc.bias", fc_b});
    return p;
  }

  FlopCount flops(std::size_t t) const {
    const std::size_t c = opt_.channels, e = opt_.channels * opt_.expansion;
    FlopCount f = detail::conv_cost(opt_.stem_kernel, kFeatureDim, c, t, 1, true);
    f.elementwise += c * t;
    for (const auto& b : blocks) {
      const std::size_t t_out = same_out_len(t, b.stride);
      f += detail::conv_cost(1, c, e, t, 1, true);
      f.elementwise += e * t;
      f += detail::conv_cost(opt_.depthwise_kernel, e, e, t_out, e, true);
      f.elementwise += e * t_out;
      f += detail::conv_cost(1, e, c, t_out, 1, true);
      if (b.stride == 1) f.elementwise += c * t_out;
      t = t_out;
    }
    f.elementwise += c * t;
    f += detail::fc_cost(c, opt_.num_classes, true);
    return f;
  }

  const TenetOptions& options() const { return opt_; }

  Tensor stem_w, stem_b;
  std::vector<Block> blocks;
  Tensor fc_w, fc_b;

 private:
  TenetOptions opt_;
};

// ---------------------------------------------------------------------------

struct ModelOptions {
  bool dynamic_filter = true;  // false gives the plain classifier
  bool embedding = true;       // training-only branch
  TenetOptions tenet;
};

/// Front-end filter, classifier, and the training-only embedding branch.
///
/// Each network draws its initial weights from its own stream, so building
/// with or without the embedding branch leaves the other weights unchanged.
class KwsModel {
 public:
  struct Output {
    Tensor filtered;   // [B x 40 x T]
    Tensor embedding;  // [B x 32]
    Tensor logits;     // [B x classes]
    std::optional<Tensor> dynamic;  // [B x 128] when requested
  };

  KwsModel(const ModelOptions& opt, std::uint64_t seed) : opt_(opt) {
    Rng filter_rng = make_rng(seed, Stream::kInit, 0);
    Rng tenet_rng = make_rng(seed, Stream::kInit, 1);
    Rng embed_rng = make_rng(seed, Stream::kInit, 2);
    if (opt.dynamic_filter) filter_.emplace(filter_rng);
    tenet_.emplace(opt.tenet, tenet_rng);
    if (opt.embedding) embedding_.emplace(embed_rng);
  }

  Output forward(const Tensor& x, bool with_embedding = false) const {
    Tensor xb = detail::as_batch(x, kFeatureDim, "model");
    Output out;
    out.filtered = filter_ ? filter_->forward(xb) : xb;
    auto t = tenet_->forward(out.filtered);
    out.embedding = t.embedding;
    out.logits = t.logits;
    if (with_embedding) {
      if (!embedding_) throw ConfigError("model was built without the embedding branch");
      out.dynamic = embedding_->forward(out.filtered);
    }
    return out;
  }

  std::vector<NamedParam> parameters(bool inference_only = false) const {
    std::vector<NamedParam> p;
    if (filter_) {
      for (auto& n : filter_->parameters()) p.push_back(std::move(n));
    }
    for (auto& n : tenet_->parameters()) p.push_back(std::move(n));
    if (embedding_ && !inference_only) {
      for (auto& n : embedding_->parameters()) p.push_back(std::move(n));
    }
    return p;
  }

  std::vector<Tensor> tensors(bool inference_only = false) const {
    std::vector<Tensor> t;
    for (auto& n : parameters(inference_only)) t.push_back(n.value);
    return t;
  }

  FlopCount flops(std::size_t t, bool inference_only = true) const {
    FlopCount f;
    if (filter_) f += DynamicFilter::flops(t);
    f += tenet_->flops(t);
    if (embedding_ && !inference_only) f += DynamicEmbedding::flops(t);
    return f;
  }

  const ModelOptions& options() const { return opt_; }
  std::size_t num_classes() const { return opt_.tenet.num_classes; }
  bool has_embedding() const { return embedding_.has_value(); }
  const TenetClassifier& classifier() const { return *tenet_; }
  const DynamicFilter* filter() const { return filter_ ? &*filter_ : nullptr; }
  const DynamicEmbedding* embedding() const { return embedding_ ? &*embedding_ : nullptr; }

 private:
  ModelOptions opt_;
  std::optional<DynamicFilter> filter_;
  std::optional<TenetClassifier> tenet_;
  std::optional<DynamicEmbedding> embedding_;
};

inline std::size_t count_params(const std::vector<NamedParam>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

inline std::size_t count_params(const KwsModel& m, bool inference_only = true) {
  return count_params(m.parameters(inference_only));
}

inline std::uint64_t count_flops(const KwsModel& m, std::size_t t, bool inference_only = true) {
  return m.flops(t, inference_only).flops();
}

/// Named configurations accepted by the command line.
inline std::optional<ModelOptions> model_by_name(const std::string& name) {
  ModelOptions o;
  if (name == "tenet12") {
    o.dynamic_filter = false;
    return o;
  }
  if (name == "ldy-tenet12") return o;
  return std::nullopt;
}

}  // namespace orthokws

#endif  // ORTHOKWS_MODELS_HPP_
