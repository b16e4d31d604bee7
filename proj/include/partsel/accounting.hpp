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
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "partsel/core.hpp"

namespace partsel::accounting {

/// Gaussian standard deviation calibrated for a zCDP budget.
struct NoiseScale {
  double sigma = 0.0;
};

/// Release cutoff for noisy histogram weights.
struct Threshold {
  double value = 0.0;
};

/// Minimizer of the zCDP -> approximate-DP conversion objective, together
/// with the attained infimum value.
struct ConversionPoint {
  double alpha = 0.0;
  double delta_prime = 0.0;
};

/// Raised when a parameter inversion has no solution.
struct InfeasibleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

// Rational approximation for the standard normal quantile (Wichura's
// algorithm AS 241, PPND16 variant). Callers pass both tail masses so the
// small one is used at full precision; q must equal 1 - p.
inline double ppnd16(double p, double q) {
  const double diff = p - 0.5;
  if (std::abs(diff) <= 0.425) {
    const double r = 0.180625 - diff * diff;
    return diff *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  double r = (diff < 0.0) ? p : q;
  r = std::sqrt(-std::log(r));
  double z;
  if (r <= 5.0) {
    r -= 1.6;
    z = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) *
                 r +
             1.27045825245236838258e+0) *
                r +
            3.64784832476320460504e+0) *
               r +
           5.76949722146069140550e+0) *
              r +
          4.63033784615654529590e+0) *
             r +
         1.42343711074968357734e+0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) *
                 r +
             1.48103976427480074590e-1) *
                r +
            6.89767334985100004550e-1) *
               r +
           1.67638483018380384940e+0) *
              r +
          2.05319162663775882187e+0) *
             r +
         1.0);
  } else {
    r -= 5.0;
    z = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) *
                 r +
             2.65321895265761230930e-2) *
                r +
            2.96560571828504891230e-1) *
               r +
           1.78482653991729133580e+0) *
              r +
          5.46378491116411436990e+0) *
             r +
         6.65790464350110377720e+0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) *
                 r +
             7.86869131145613259100e-4) *
                r +
            1.48753612908506148525e-2) *
               r +
           1.36929880922735805310e-1) *
              r +
          5.99832206555887937690e-1) *
             r +
         1.0);
  }
  return (diff < 0.0) ? -z : z;
}

}  // namespace detail

/// Standard normal CDF.
inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Standard normal quantile; |Phi(result) - p| <= 1e-12 over
/// p in [1e-12, 1 - 1e-12].
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("inverse_normal_cdf: p must lie in (0, 1)");
  return detail::ppnd16(p, 1.0 - p);
}

/// Phi^{-1}(1 - q) evaluated from the upper-tail mass itself, keeping full
/// precision when q is below the double-spacing of 1.
inline double inverse_normal_cdf_upper(double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("inverse_normal_cdf_upper: q must lie in (0, 1)");
  return -detail::ppnd16(q, 1.0 - q);
}

/// Gaussian scale for an l2-sensitive function under a zCDP budget:
/// sigma = sensitivity / sqrt(2 rho).
inline NoiseScale gaussian_sigma(const PrivacyBudget& budget,
                                 double l2_sensitivity) {
  if (!(budget.rho > 0.0))
    throw std::invalid_argument("gaussian_sigma: rho must be positive");
  if (!(l2_sensitivity > 0.0))
    throw std::invalid_argument("gaussian_sigma: sensitivity must be positive");
  return {l2_sensitivity / std::sqrt(2.0 * budget.rho)};
}

struct ThresholdScan {
  double value = 0.0;
  int arg_k = 0;  // contribution count attaining the max
};

inline constexpr int kMaxDelta0 = 1'000'000;

/// Exhaustive scan of max_{k in [delta0]} { 1/sqrt(k) +
/// sigma * Phi^{-1}((1-delta)^{1/k}) } with sigma for unit sensitivity.
/// The per-k quantile argument is evaluated through expm1/log1p so tail
/// masses far below DBL_EPSILON stay exact.
inline ThresholdScan release_threshold_scan(const PrivacyBudget& budget,
                                            int delta0) {
  if (!(budget.rho > 0.0))
    throw std::invalid_argument("release_threshold: rho must be positive");
  if (!(budget.delta > 0.0 && budget.delta < 1.0))
    throw std::invalid_argument("release_threshold: delta must lie in (0, 1)");
  if (delta0 < 1 || delta0 > kMaxDelta0)
    throw std::invalid_argument("release_threshold: delta0 out of range");
  const double sigma = gaussian_sigma(budget, 1.0).sigma;
  const double log1m_delta = std::log1p(-budget.delta);
  ThresholdScan best{-std::numeric_limits<double>::infinity(), 0};
  for (int k = 1; k <= delta0; ++k) {
    const double tail = -std::expm1(log1m_delta / k);  // 1 - (1-delta)^{1/k}
    const double t =
        1.0 / std::sqrt(static_cast<double>(k)) +
        sigma * inverse_normal_cdf_upper(tail);
    if (t > best.value) best = {t, k};
  }
  return best;
}

inline Threshold release_threshold(const PrivacyBudget& budget, int delta0) {
  return {release_threshold_scan(budget, delta0).value};
}

/// Adaptive composition of approximate zCDP guarantees:
/// (rho, delta) + (rho', delta') -> (rho + rho', delta + delta' - delta delta').
inline PrivacyBudget compose(const PrivacyBudget& a, const PrivacyBudget& b) {
  return {a.rho + b.rho, a.delta + b.delta - a.delta * b.delta};
}

/// Log of the zCDP -> DP conversion objective
///   exp((alpha-1)(alpha rho - eps)) / (alpha-1) * (1 - 1/alpha)^alpha,
/// kept in log space so infima near 1e-300 survive.
inline double log_conversion_objective(double rho, double epsilon,
                                       double alpha) {
  return (alpha - 1.0) * (alpha * rho - epsilon) - std::log(alpha - 1.0) +
         alpha * std::log1p(-1.0 / alpha);
}

namespace detail {

// Minimizes log_conversion_objective over alpha in (1, inf). A geometric scan
// over u = alpha - 1 brackets the minimum (the objective diverges at both
// ends), then golden-section search on log(u) refines it.
inline ConversionPoint minimize_conversion_objective(double rho,
                                                     double epsilon) {
  const auto g = [&](double t) {
    return log_conversion_objective(rho, epsilon, 1.0 + std::exp(t));
  };
  constexpr double kLogLo = -20.8;  // u = 1e-9
  constexpr double kLogHi = 27.7;   // u = 1e12
  constexpr double kStep = 0.6931471805599453;  // factor-2 scan
  double best_t = kLogLo, best_g = g(kLogLo);
  for (double t = kLogLo + kStep; t <= kLogHi; t += kStep) {
    const double v = g(t);
    if (v < best_g) {
      best_g = v;
      best_t = t;
    }
  }
  double lo = best_t - kStep, hi = best_t + kStep;
  constexpr double kInvPhi = 0.6180339887498949;
  double t1 = hi - kInvPhi * (hi - lo), t2 = lo + kInvPhi * (hi - lo);
  double g1 = g(t1), g2 = g(t2);
  while (hi - lo > 1e-9) {
    if (g1 < g2) {
      hi = t2;
      t2 = t1;
      g2 = g1;
      t1 = hi - kInvPhi * (hi - lo);
      g1 = g(t1);
    } else {
      lo = t1;
      t1 = t2;
      g1 = g2;
      t2 = lo + kInvPhi * (hi - lo);
      g2 = g(t2);
    }
  }
  const double t = 0.5 * (lo + hi);
  const double alpha = 1.0 + std::exp(t);
  const double delta_prime = std::exp(g(t));
  return {alpha, delta_prime < 1.0 ? delta_prime : 1.0};
}

}  // namespace detail

/// Tight conversion from delta-approximate rho-zCDP to (epsilon, delta_dp)
/// approximate DP; also returns the minimizing alpha. Relative error of the
/// infimum is below 1e-4.
inline std::pair<ApproxDpParams, ConversionPoint> zcdp_to_dp(
    const PrivacyBudget& budget, double epsilon) {
  if (!(budget.rho > 0.0))
    throw std::invalid_argument("zcdp_to_dp: rho must be positive");
  if (!(budget.delta >= 0.0 && budget.delta <= 1.0))
    throw std::invalid_argument("zcdp_to_dp: delta must lie in [0, 1]");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("zcdp_to_dp: epsilon must be positive");
  const ConversionPoint point =
      detail::minimize_conversion_objective(budget.rho, epsilon);
  const double delta_dp =
      budget.delta + (1.0 - budget.delta) * point.delta_prime;
  return {ApproxDpParams{epsilon, delta_dp}, point};
}

/// Smallest epsilon (within 1e-4 relative) whose conversion meets
/// target_delta_dp. delta_dp is strictly decreasing in epsilon, so monotone
/// bisection applies. Infeasible when the target does not exceed delta_cdp.
inline double dp_epsilon_for_delta(const PrivacyBudget& budget,
                                   double target_delta_dp) {
  if (!(target_delta_dp > budget.delta))
    throw InfeasibleError(
        "dp_epsilon_for_delta: target delta_dp must exceed delta_cdp");
  const auto delta_at = [&](double eps) {
    return zcdp_to_dp(budget, eps).first.delta_dp;
  };
  double lo = 0.0, hi = 1.0;
  while (delta_at(hi) > target_delta_dp) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e9)
      throw InfeasibleError("dp_epsilon_for_delta: no epsilon below 1e9 fits");
  }
  while (hi - lo > 1e-5 * hi) {
    const double mid = 0.5 * (lo + hi);
    (delta_at(mid) <= target_delta_dp ? hi : lo) = mid;
  }
  return hi;
}

/// Geometric budget split across `iterations` rounds with allocation factor
/// `ratio`: part i is proportional to ratio^{I-1-i}, so later rounds receive
/// more budget for ratio < 1 and the parts sum back to the input budget.
/// Normalizing by the directly summed geometric series keeps the sums exact
/// to a few ulps even when ratio is within 1e-13 of 1.
inline std::vector<PrivacyBudget> split_budget(const PrivacyBudget& budget,
                                               int iterations, double ratio) {
  if (iterations < 1)
    throw std::invalid_argument("split_budget: iterations must be >= 1");
  if (!(ratio > 0.0))
    throw std::invalid_argument("split_budget: ratio must be positive");
  std::vector<double> powers(static_cast<std::size_t>(iterations));
  powers[0] = 1.0;
  for (int j = 1; j < iterations; ++j) powers[j] = powers[j - 1] * ratio;
  double norm = 0.0;
  for (double p : powers) norm += p;
  std::vector<PrivacyBudget> parts(static_cast<std::size_t>(iterations));
  for (int i = 0; i < iterations; ++i) {
    const double f = powers[iterations - 1 - i] / norm;
    parts[i] = {budget.rho * f, budget.delta * f};
  }
  return parts;
}

}  // namespace partsel::accounting
