// Copyright 2026 The dsgg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DSGG_NUMERICS_RNG_HPP_
#define DSGG_NUMERICS_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

#include "dsgg/numerics/tensor.hpp"

namespace dsgg::numerics {

// Seed derivation: one SplitMix64 step over (seed + stream * golden gamma).
// Used to give every video, module and phase its own independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Bit-reproducible generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions are implemented here
// because the standard library's are implementation-defined.
//   uniform(): top 53 bits of one draw scaled by 2^-53, in [0, 1)
//   normal():  Box-Muller on two uniforms, cosine branch only
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  Tensor normal_tensor(Shape shape, double stddev);
  Tensor uniform_tensor(Shape shape, double lo, double hi);
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_RNG_HPP_
