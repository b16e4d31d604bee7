// Copyright 2026 The partsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <variant>

#include "partsel/accounting.hpp"
#include "partsel/rng.hpp"

namespace partsel {

struct GaussianNoise {
  double sigma = 0.0;
};

struct LaplaceNoise {
  double scale = 0.0;
};

using NoiseKind = std::variant<GaussianNoise, LaplaceNoise>;

/// N(0, sigma^2) variate by inverse-CDF transform of one uniform draw. One
/// draw per variate keeps the counter-keyed per-item streams aligned.
inline double gaussian_from_unit(double u, double sigma) {
  return sigma * accounting::inverse_normal_cdf(u);
}

/// Laplace(scale) variate by inverse CDF; u = 1/2 maps to the median.
inline double laplace_from_unit(double u, double scale) {
  const double c = u - 0.5;
  return (c < 0.0 ? scale : -scale) * std::log1p(-2.0 * std::abs(c));
}

/// One noise draw from 64 pre-drawn bits (the counter-based per-item path).
inline double noise_from_bits(const NoiseKind& kind, std::uint64_t bits) {
  const double u = unit_from_bits(bits);
  if (const auto* g = std::get_if<GaussianNoise>(&kind))
    return gaussian_from_unit(u, g->sigma);
  return laplace_from_unit(u, std::get<LaplaceNoise>(kind).scale);
}

/// One noise draw from a sequential stream.
inline double sample_noise(const NoiseKind& kind, CounterRng& rng) {
  return noise_from_bits(kind, rng());
}

}  // namespace partsel
