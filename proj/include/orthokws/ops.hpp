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

// Differentiable operations over Tensor. No broadcasting beyond the bias and
// per-sample kernel cases the networks need.

#ifndef ORTHOKWS_OPS_HPP_
#define ORTHOKWS_OPS_HPP_

#include <cblas.h>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orthokws/tensor.hpp"

namespace orthokws {
namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data,
                          const char* op,
                          std::vector<std::shared_ptr<Node>> inputs,
                          std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (any) {
    node->requires_grad = true;
    node->grad.assign(node->data.size(), 0.0);
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
  }
}

inline void require_ndim(const Tensor& a, std::size_t n, const char* op) {
  if (a.ndim() != n) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(n) +
                         "-d tensor, got " + shape_str(a.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return make_result(a.shape(), std::move(out), op, {a.node()},
                     [deriv](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         in.grad[i] += self.grad[i] *
                                       deriv(in.data[i], self.data[i]);
                       }
                     });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), "add",
                             {a.node(), b.node()}, [](detail::Node& self) {
                               for (auto& in : self.inputs) {
                                 if (!in->requires_grad) continue;
                                 for (std::size_t i = 0; i < self.grad.size();
                                      ++i) {
                                   in->grad[i] += self.grad[i];
                                 }
                               }
                             });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(
      a.shape(), std::move(out), "sub", {a.node(), b.node()},
      [](detail::Node& self) {
        detail::Node& x = *self.inputs[0];
        detail::Node& y = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (x.requires_grad) x.grad[i] += self.grad[i];
          if (y.requires_grad) y.grad[i] -= self.grad[i];
        }
      });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(
      a.shape(), std::move(out), "mul", {a.node(), b.node()},
      [](detail::Node& self) {
        detail::Node& x = *self.inputs[0];
        detail::Node& y = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (x.requires_grad) x.grad[i] += self.grad[i] * y.data[i];
          if (y.requires_grad) y.grad[i] += self.grad[i] * x.data[i];
        }
      });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(
      a, "scale", [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(
      a, "add_scalar", [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

/// max(0, x); the subgradient at exactly 0 is 0.
inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline Tensor sqrt(const Tensor& a) {
  return detail::unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

/// Sum of all elements as a scalar.
inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::make_result(Shape{}, {s}, "sum", {a.node()},
                             [](detail::Node& self) {
                               detail::Node& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               for (double& g : in.grad) g += self.grad[0];
                             });
}

inline Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

/// a / s for a scalar tensor s.
inline Tensor div_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("div_scalar: divisor must be scalar, got " +
                         shape_str(s.shape()));
  }
  const double d = s.item();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / d;
  return detail::make_result(
      a.shape(), std::move(out), "div_scalar", {a.node(), s.node()},
      [](detail::Node& self) {
        detail::Node& x = *self.inputs[0];
        detail::Node& y = *self.inputs[1];
        const double d = y.data[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (x.requires_grad) x.grad[i] += self.grad[i] / d;
          acc += self.grad[i] * self.data[i];
        }
        if (y.requires_grad) y.grad[0] -= acc / d;
      });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result(std::move(shape), std::move(out), "reshape",
                             {a.node()}, [](detail::Node& self) {
                               detail::Node& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               for (std::size_t i = 0; i < self.grad.size();
                                    ++i) {
                                 in.grad[i] += self.grad[i];
                               }
                             });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_ndim(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return detail::make_result(Shape{n, m}, std::move(out), "transpose",
                             {a.node()}, [m, n](detail::Node& self) {
                               detail::Node& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < n; ++j) {
                                   in.grad[i * n + j] += self.grad[j * m + i];
                                 }
                               }
                             });
}

/// [M x K] x [K x N] -> [M x N].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double v = x[i * k + p];
      const double* brow = &y[p * n];
      for (std::size_t j = 0; j < n; ++j) row[j] += v * brow[j];
    }
  }
  return detail::make_result(
      Shape{m, n}, std::move(out), "matmul", {a.node(), b.node()},
      [m, k, n](detail::Node& self) {
        detail::Node& x = *self.inputs[0];
        detail::Node& y = *self.inputs[1];
        const double* g = self.grad.data();
        if (x.requires_grad) {
          // dA = G B^T
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* brow = &y.data[p * n];
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
              x.grad[i * k + p] += acc;
            }
          }
        }
        if (y.requires_grad) {
          // dB = A^T G
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double v = x.data[i * k + p];
              double* grow = &y.grad[p * n];
              for (std::size_t j = 0; j < n; ++j) grow[j] += v * g[i * n + j];
            }
          }
        }
      });
}

/// x [M x K] times w [K x N] plus bias [N] broadcast over rows.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (bias.ndim() != 1 || bias.dim(0) != w.dim(1)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t m = y.dim(0), n = y.dim(1);
  std::vector<double> out(y.data().begin(), y.data().end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  }
  return detail::make_result(Shape{m, n}, std::move(out), "add_bias",
                             {y.node(), bias.node()},
                             [m, n](detail::Node& self) {
                               detail::Node& in = *self.inputs[0];
                               detail::Node& b = *self.inputs[1];
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < n; ++j) {
                                   const double g = self.grad[i * n + j];
                                   if (in.requires_grad) in.grad[i * n + j] += g;
                                   if (b.requires_grad) b.grad[j] += g;
                                 }
                               }
                             });
}

/// Mean along the last axis: [.. x T] -> [..].
inline Tensor mean_over_time(const Tensor& x) {
  if (x.ndim() < 1) throw DimensionError("mean_over_time: scalar input");
  const std::size_t t = x.shape().back();
  if (x.ndim() == 1 && t == 0) throw DimensionError("mean_over_time: T = 0");
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  const std::size_t rows = x.numel() / t;
  std::vector<double> out(rows);
  auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < t; ++i) s += v[r * t + i];
    out[r] = s / static_cast<double>(t);
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), "mean_over_time", {x.node()},
      [rows, t](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const double inv = 1.0 / static_cast<double>(t);
        for (std::size_t r = 0; r < rows; ++r) {
          const double g = self.grad[r] * inv;
          for (std::size_t i = 0; i < t; ++i) in.grad[r * t + i] += g;
        }
      });
}

/// Row-wise softmax of [M x N].
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_ndim(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(x[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return detail::make_result(
      Shape{m, n}, std::move(out), "softmax_rows", {x.node()},
      [m, n](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dot += self.grad[i * n + j] * self.data[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            in.grad[i * n + j] +=
                self.data[i * n + j] * (self.grad[i * n + j] - dot);
          }
        }
      });
}

/// Mean over rows of -log softmax(logits)[label].
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    std::span<const int> labels) {
  detail::require_ndim(logits, 2, "softmax_cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (labels.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(m) +
                         " rows but " + std::to_string(labels.size()) +
                         " labels");
  }
  std::vector<double> prob(m * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(labels[i]) + " outside [0, " +
                              std::to_string(c) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      prob[i * c + j] = std::exp(logits[i * c + j] - mx);
      z += prob[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] /= z;
    loss += std::log(z) + mx - logits[i * c + static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<double>(m);
  std::vector<int> lab(labels.begin(), labels.end());
  return detail::make_result(
      Shape{}, {loss}, "softmax_cross_entropy", {logits.node()},
      [m, c, prob = std::move(prob), lab = std::move(lab)](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const double g = self.grad[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot =
                static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0;
            in.grad[i * c + j] += g * (prob[i * c + j] - onehot);
          }
        }
      });
}

/// Output length of a same-padded convolution.
inline std::size_t same_out_len(std::size_t t, std::size_t stride) {
  return (t + stride - 1) / stride;
}

namespace detail {

/// Column matrix [(K * Cin) x t_out] of one example: row (j, c) holds
/// x[c][to * stride + j - pad], zero outside the input.
inline void im2col(const double* x, std::size_t cin, std::size_t t_in, std::size_t k,
                   std::size_t stride, std::ptrdiff_t pad, std::size_t t_out, double* col) {
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < cin; ++c) {
      double* row = col + (j * cin + c) * t_out;
      const double* xr = x + c * t_in;
      for (std::size_t to = 0; to < t_out; ++to) {
        const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * stride + j) - pad;
        row[to] = (ti >= 0 && ti < static_cast<std::ptrdiff_t>(t_in)) ? xr[ti] : 0.0;
      }
    }
  }
}

inline void col2im_add(const double* col, std::size_t cin, std::size_t t_in, std::size_t k,
                       std::size_t stride, std::ptrdiff_t pad, std::size_t t_out, double* x) {
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < cin; ++c) {
      const double* row = col + (j * cin + c) * t_out;
      double* xr = x + c * t_in;
      for (std::size_t to = 0; to < t_out; ++to) {
        const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * stride + j) - pad;
        if (ti >= 0 && ti < static_cast<std::ptrdiff_t>(t_in)) xr[ti] += row[to];
      }
    }
  }
}

/// Ungrouped convolution as one GEMM per example. A pointwise stride-1
/// layer reads the input directly; other shapes go through im2col.
inline Tensor conv1d_dense(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
                           std::size_t stride, std::ptrdiff_t pad, std::size_t t_out,
                           bool batched) {
  const std::size_t nb = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t t_in = x.shape().back();
  const std::size_t k = w.dim(0), cout = w.dim(2);
  const std::size_t rows = k * cin;
  const bool direct = k == 1 && stride == 1;
  std::vector<double> out(nb * cout * t_out, 0.0);
  std::vector<double> col(direct ? 0 : rows * t_out);
  auto xv = x.data();
  auto wv = w.data();
  for (std::size_t b = 0; b < nb; ++b) {
    const double* xb = &xv[b * cin * t_in];
    if (!direct) im2col(xb, cin, t_in, k, stride, pad, t_out, col.data());
    double* ob = &out[b * cout * t_out];
    if (bias) {
      for (std::size_t co = 0; co < cout; ++co) {
        std::fill(ob + co * t_out, ob + (co + 1) * t_out, (*bias)[co]);
      }
    }
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(cout),
                static_cast<int>(t_out), static_cast<int>(rows), 1.0, wv.data(),
                static_cast<int>(cout), direct ? xb : col.data(), static_cast<int>(t_out),
                bias ? 1.0 : 0.0, ob, static_cast<int>(t_out));
  }
  Shape out_shape = batched ? Shape{nb, cout, t_out} : Shape{cout, t_out};
  std::vector<std::shared_ptr<Node>> inputs{x.node(), w.node()};
  if (bias) inputs.push_back(bias->node());
  return make_result(
      std::move(out_shape), std::move(out), "conv1d_temporal", std::move(inputs),
      [=](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        std::vector<double> col(direct ? 0 : rows * t_out);
        std::vector<double> dcol(direct ? 0 : rows * t_out);
        for (std::size_t b = 0; b < nb; ++b) {
          const double* gb = &self.grad[b * cout * t_out];
          const double* xb = &xn.data[b * cin * t_in];
          if (bn && bn->requires_grad) {
            for (std::size_t co = 0; co < cout; ++co) {
              double acc = 0.0;
              for (std::size_t to = 0; to < t_out; ++to) acc += gb[co * t_out + to];
              bn->grad[co] += acc;
            }
          }
          if (wn.requires_grad) {
            if (!direct) im2col(xb, cin, t_in, k, stride, pad, t_out, col.data());
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(rows),
                        static_cast<int>(cout), static_cast<int>(t_out), 1.0,
                        direct ? xb : col.data(), static_cast<int>(t_out), gb,
                        static_cast<int>(t_out), 1.0, wn.grad.data(), static_cast<int>(cout));
          }
          if (xn.requires_grad) {
            double* gx = &xn.grad[b * cin * t_in];
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(rows),
                        static_cast<int>(t_out), static_cast<int>(cout), 1.0, wn.data.data(),
                        static_cast<int>(cout), gb, static_cast<int>(t_out), direct ? 1.0 : 0.0,
                        direct ? gx : dcol.data(), static_cast<int>(t_out));
            if (!direct) col2im_add(dcol.data(), cin, t_in, k, stride, pad, t_out, gx);
          }
        }
      });
}

}  // namespace detail

/// Temporal cross-correlation with zero "same" padding.
///
/// x is [Cin x T] or [B x Cin x T]; w is [K x Cin/groups x Cout]; bias, when
/// given, is [Cout]. Output length is ceil(T / stride); with an even padding
/// total the extra zero goes to the right edge.
inline Tensor conv1d_temporal(const Tensor& x, const Tensor& w,
                              std::optional<Tensor> bias, std::size_t stride,
                              std::size_t groups) {
  if (stride == 0 || groups == 0) {
    throw ConfigError("conv1d_temporal: stride and groups must be positive");
  }
  if (x.ndim() != 2 && x.ndim() != 3) {
    throw DimensionError("conv1d_temporal: input must be [Cin x T] or "
                         "[B x Cin x T], got " + shape_str(x.shape()));
  }
  detail::require_ndim(w, 3, "conv1d_temporal weight");
  const bool batched = x.ndim() == 3;
  const std::size_t nb = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t t_in = x.shape().back();
  const std::size_t k = w.dim(0), cin_g = w.dim(1), cout = w.dim(2);
  if (cin % groups != 0 || cout % groups != 0) {
    throw ConfigError("conv1d_temporal: groups=" + std::to_string(groups) +
                      " must divide Cin=" + std::to_string(cin) +
                      " and Cout=" + std::to_string(cout));
  }
  if (cin_g != cin / groups) {
    throw DimensionError("conv1d_temporal: weight " + shape_str(w.shape()) +
                         " does not fit input " + shape_str(x.shape()) +
                         " with groups=" + std::to_string(groups));
  }
  if (bias && (bias->ndim() != 1 || bias->dim(0) != cout)) {
    throw DimensionError("conv1d_temporal: bias " + shape_str(bias->shape()) +
                         " does not match Cout=" + std::to_string(cout));
  }
  const std::size_t t_out = same_out_len(t_in, stride);
  const std::size_t pad_total =
      std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>((t_out - 1) * stride + k) -
                                   static_cast<std::ptrdiff_t>(t_in),
                               0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(pad_total / 2);
  const std::size_t cout_g = cout / groups;

  // Valid output range for tap j: 0 <= to*stride + j - pad < t_in.
  auto range = [=](std::size_t j) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(t_in) - 1 - off);
    hi = hi < 0 ? -1 : hi / s;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(t_out) - 1);
    return std::pair<std::ptrdiff_t, std::ptrdiff_t>{lo, hi};
  };

  if (groups == 1) {
    return detail::conv1d_dense(x, w, bias, stride, pad, t_out, batched);
  }
  std::vector<double> out(nb * cout * t_out, 0.0);
  auto xv = x.data();
  auto wv = w.data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t g = co / cout_g;
      double* orow = &out[(b * cout + co) * t_out];
      if (bias) std::fill(orow, orow + t_out, (*bias)[co]);
      for (std::size_t j = 0; j < k; ++j) {
        const auto [lo, hi] = range(j);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
        for (std::size_t cl = 0; cl < cin_g; ++cl) {
          const double wt = wv[(j * cin_g + cl) * cout + co];
          const double* xrow = &xv[(b * cin + g * cin_g + cl) * t_in];
          for (std::ptrdiff_t to = lo; to <= hi; ++to) {
            orow[to] += wt * xrow[to * static_cast<std::ptrdiff_t>(stride) + off];
          }
        }
      }
    }
  }

  Shape out_shape = batched ? Shape{nb, cout, t_out} : Shape{cout, t_out};
  std::vector<std::shared_ptr<detail::Node>> inputs{x.node(), w.node()};
  if (bias) inputs.push_back(bias->node());
  return detail::make_result(
      std::move(out_shape), std::move(out), "conv1d_temporal",
      std::move(inputs),
      [=](detail::Node& self) {
        detail::Node& xn = *self.inputs[0];
        detail::Node& wn = *self.inputs[1];
        detail::Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t co = 0; co < cout; ++co) {
            const std::size_t g = co / cout_g;
            const double* grow = &self.grad[(b * cout + co) * t_out];
            if (bn && bn->requires_grad) {
              double acc = 0.0;
              for (std::size_t to = 0; to < t_out; ++to) acc += grow[to];
              bn->grad[co] += acc;
            }
            for (std::size_t j = 0; j < k; ++j) {
              const auto [lo, hi] = range(j);
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
              for (std::size_t cl = 0; cl < cin_g; ++cl) {
                const std::size_t widx = (j * cin_g + cl) * cout + co;
                const std::size_t xoff = (b * cin + g * cin_g + cl) * t_in;
                if (wn.requires_grad) {
                  const double* xrow = &xn.data[xoff];
                  double acc = 0.0;
                  for (std::ptrdiff_t to = lo; to <= hi; ++to) {
                    acc += grow[to] * xrow[to * s + off];
                  }
                  wn.grad[widx] += acc;
                }
                if (xn.requires_grad) {
                  const double wt = wn.data[widx];
                  double* gx = &xn.grad[xoff];
                  for (std::ptrdiff_t to = lo; to <= hi; ++to) {
                    gx[to * s + off] += wt * grow[to];
                  }
                }
              }
            }
          }
        }
      });
}

/// Same-padded 3x3 cross-correlation of each map in x [B x F x T].
///
/// kernels is [B x 9] (one kernel per sample) or [1 x 9] (shared), taps in
/// row-major (frequency, time) order.
inline Tensor conv2d_3x3(const Tensor& x, const Tensor& kernels) {
  detail::require_ndim(x, 3, "conv2d_3x3");
  detail::require_ndim(kernels, 2, "conv2d_3x3 kernels");
  const std::size_t nb = x.dim(0), nf = x.dim(1), nt = x.dim(2);
  if (kernels.dim(1) != 9 || (kernels.dim(0) != 1 && kernels.dim(0) != nb)) {
    throw DimensionError("conv2d_3x3: kernels " + shape_str(kernels.shape()) +
                         " do not match batch of " + std::to_string(nb));
  }
  const bool shared = kernels.dim(0) == 1;
  std::vector<double> out(x.numel(), 0.0);
  auto xv = x.data();
  auto kv = kernels.data();
  auto taps = [nf, nt](std::size_t f, std::size_t t, int df, int dt,
                       std::size_t& idx) {
    const std::ptrdiff_t ff = static_cast<std::ptrdiff_t>(f) + df;
    const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t) + dt;
    if (ff < 0 || tt < 0 || ff >= static_cast<std::ptrdiff_t>(nf) ||
        tt >= static_cast<std::ptrdiff_t>(nt)) {
      return false;
    }
    idx = static_cast<std::size_t>(ff) * nt + static_cast<std::size_t>(tt);
    return true;
  };
  for (std::size_t b = 0; b < nb; ++b) {
    const double* kb = &kv[(shared ? 0 : b) * 9];
    const double* xb = &xv[b * nf * nt];
    double* ob = &out[b * nf * nt];
    for (std::size_t f = 0; f < nf; ++f) {
      for (std::size_t t = 0; t < nt; ++t) {
        double acc = 0.0;
        for (int df = -1; df <= 1; ++df) {
          for (int dt = -1; dt <= 1; ++dt) {
            std::size_t idx;
            if (taps(f, t, df, dt, idx)) acc += kb[(df + 1) * 3 + dt + 1] * xb[idx];
          }
        }
        ob[f * nt + t] = acc;
      }
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), "conv2d_3x3", {x.node(), kernels.node()},
      [=](detail::Node& self) {
        detail::Node& xn = *self.inputs[0];
        detail::Node& kn = *self.inputs[1];
        for (std::size_t b = 0; b < nb; ++b) {
          const std::size_t krow = (shared ? 0 : b) * 9;
          const double* xb = &xn.data[b * nf * nt];
          const double* gb = &self.grad[b * nf * nt];
          for (std::size_t f = 0; f < nf; ++f) {
            for (std::size_t t = 0; t < nt; ++t) {
              const double g = gb[f * nt + t];
              for (int df = -1; df <= 1; ++df) {
                for (int dt = -1; dt <= 1; ++dt) {
                  std::size_t idx;
                  if (!taps(f, t, df, dt, idx)) continue;
                  const std::size_t tap = krow + (df + 1) * 3 + dt + 1;
                  if (kn.requires_grad) kn.grad[tap] += g * xb[idx];
                  if (xn.requires_grad) {
                    xn.grad[b * nf * nt + idx] += g * kn.data[tap];
                  }
                }
              }
            }
          }
        }
      });
}

/// Squared Euclidean distances between the rows of x [C x D] -> [C x C].
inline Tensor pairwise_sq_dist(const Tensor& x) {
  detail::require_ndim(x, 2, "pairwise_sq_dist");
  const std::size_t c = x.dim(0), d = x.dim(1);
  std::vector<double> out(c * c, 0.0);
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a + 1; b < c; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = x[a * d + i] - x[b * d + i];
        s += diff * diff;
      }
      out[a * c + b] = s;
      out[b * c + a] = s;
    }
  }
  return detail::make_result(
      Shape{c, c}, std::move(out), "pairwise_sq_dist", {x.node()},
      [c, d](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t a = 0; a < c; ++a) {
          for (std::size_t b = 0; b < c; ++b) {
            if (a == b) continue;
            const double g = 2.0 * self.grad[a * c + b];
            for (std::size_t i = 0; i < d; ++i) {
              const double diff = in.data[a * d + i] - in.data[b * d + i];
              in.grad[a * d + i] += g * diff;
              in.grad[b * d + i] -= g * diff;
            }
          }
        }
      });
}

}  // namespace orthokws

#endif  // ORTHOKWS_OPS_HPP_
