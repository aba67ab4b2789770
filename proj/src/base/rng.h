// base/rng.h

// Copyright 2026  Accnorm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ACCNORM_BASE_RNG_H_
#define ACCNORM_BASE_RNG_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace accnorm {

// Deterministic RNG. The raw stream comes from std::mt19937_64; the
// real-valued transforms are written out explicitly instead of using
// std::*_distribution, whose output is implementation-defined. This keeps
// draws identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t bits() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(bits() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here:
  // n is tiny relative to 2^64, the bias is < 2^-50.
  uint64_t uniform_int(uint64_t n) { return bits() % n; }

  // Standard normal via Box-Muller (one value per call, no caching so the
  // stream position is easy to reason about).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Index draw from unnormalized nonnegative weights.
  int categorical(const std::vector<double>& weights);

  // Fisher-Yates shuffle of indices [0, n).
  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 gen_;
};

// Stable seed derivation for per-item child streams (corpus items, batch
// lanes, noise draws). FNV-1a over the parts, then splitmix64 finalization.
uint64_t DeriveSeed(uint64_t root, uint64_t a, uint64_t b = 0, uint64_t c = 0);

}  // namespace accnorm

#endif  // ACCNORM_BASE_RNG_H_
