/*
 * Copyright 2026 The wavemeta Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Hand-rolled generators for the property tests.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "wavemeta/function_space.hpp"

namespace wavemeta::testing {

constexpr double kPi = 3.14159265358979323846;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& engine() { return rng_; }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>()(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  // Coefficients with energy in the first `band` modes and a k^-2 roll-off.
  Vec band_limited(int modes, int band, double scale = 1.0) {
    Vec c = Vec::Zero(modes);
    for (int k = 1; k <= std::min(band, modes); ++k) c[k - 1] = scale * normal() / (k * k);
    return c;
  }

  StateE state(const GridPtr& grid, int band, double scale = 1.0) {
    return StateE(grid, band_limited(grid->modes(), band, scale), band_limited(grid->modes(), band, scale));
  }

 private:
  std::mt19937_64 rng_;
};

inline Vec unit(int modes, int k, double value = 1.0) {
  Vec c = Vec::Zero(modes);
  c[k - 1] = value;
  return c;
}

}  // namespace wavemeta::testing
