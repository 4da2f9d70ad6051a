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

// Central finite differences against backward().

#ifndef ORTHOKWS_GRADCHECK_HPP_
#define ORTHOKWS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "orthokws/tensor.hpp"

namespace orthokws {

/// (parameter index, flat element index) of one probed coordinate.
using Coordinate = std::pair<std::size_t, std::size_t>;

namespace detail {

inline double checked_value(const Tensor& y) {
  const double v = y.item();
  if (!std::isfinite(v)) {
    throw NumericError("finite_diff_check: loss evaluated to " +
                       std::to_string(v));
  }
  return v;
}

}  // namespace detail

/// Max over coords of |autodiff - central| / max(1, |central|).
///
/// `loss` rebuilds the graph from the current parameter values on every call.
inline double finite_diff_check(const std::function<Tensor()>& loss,
                                std::vector<Tensor> params,
                                const std::vector<Coordinate>& coords,
                                double h) {
  for (auto& p : params) {
    if (!p.requires_grad()) {
      throw std::logic_error("finite_diff_check: parameter without grad");
    }
    p.zero_grad();
  }
  Tensor y = loss();
  detail::checked_value(y);
  backward(y);
  double worst = 0.0;
  for (const auto& [pi, ei] : coords) {
    Tensor& p = params.at(pi);
    const double analytic = p.grad()[ei];
    auto w = p.mutable_data();
    const double saved = w[ei];
    w[ei] = saved + h;
    const double fp = detail::checked_value(loss());
    w[ei] = saved - h;
    const double fm = detail::checked_value(loss());
    w[ei] = saved;
    const double central = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic - central) /
                                std::max(1.0, std::abs(central)));
  }
  return worst;
}

/// Every coordinate of a single leaf x, with f applied to it.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                const Tensor& x, double h) {
  std::vector<Coordinate> coords;
  for (std::size_t i = 0; i < x.numel(); ++i) coords.emplace_back(0, i);
  return finite_diff_check([&] { return f(x); }, {x}, coords, h);
}

}  // namespace orthokws

#endif  // ORTHOKWS_GRADCHECK_HPP_
