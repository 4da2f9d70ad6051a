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

#ifndef ORTHOKWS_RANDOM_HPP_
#define ORTHOKWS_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace orthokws {

using Rng = std::mt19937_64;

/// Independent generator families derived from one user seed.
enum class Stream : std::uint32_t { kInit = 1, kData = 2, kNoise = 3, kEval = 4 };

/// Child generator for (seed, stream, index). Different triples give
/// unrelated sequences; the same triple always gives the same one.
inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), index};
  return Rng(seq);
}

}  // namespace orthokws

#endif  // ORTHOKWS_RANDOM_HPP_
