//
// Copyright 2026 The Fed-SGM Authors
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
//

#ifndef FEDSGM_ACCOUNTANT_HPP_
#define FEDSGM_ACCOUNTANT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedsgm/errors.hpp"
#include "fedsgm/mechanism.hpp"

namespace fedsgm {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// (alpha, epsilon)-RDP guarantee.
struct RdpPoint {
  double alpha = 2.0;
  double epsilon = 0.0;

  void Validate() const {
    internal::Require(alpha > 1.0, "RdpPoint: alpha must be > 1");
    internal::Require(epsilon >= 0.0, "RdpPoint: epsilon must be >= 0");
  }
};

// (epsilon, delta)-DP guarantee. epsilon may be +inf (no privacy).
struct DpPoint {
  double epsilon = 0.0;
  double delta = 1e-5;

  void Validate() const {
    internal::Require(epsilon >= 0.0, "DpPoint: epsilon must be >= 0");
    internal::Require(delta > 0.0 && delta < 1.0,
                      "DpPoint: delta must lie in (0, 1)");
  }
};

// Inputs of the end-to-end SGM accountant: q = sampling ratio (N/C for
// Fed-SGM, m/n for centralized training), T = number of releases.
struct AccountantParams {
  double q = 1.0;
  std::int64_t T = 1;
  double tau = 1.0;
  std::size_t b = 1;
  double sigma_g = 1.0;

  void Validate() const {
    internal::Require(q > 0.0 && q <= 1.0, "AccountantParams: q must lie in (0, 1]");
    internal::Require(T >= 1, "AccountantParams: T must be >= 1");
    internal::Require(tau > 0.0 && std::isfinite(tau),
                      "AccountantParams: tau must be finite and > 0");
    internal::Require(b >= 1, "AccountantParams: b must be >= 1");
    internal::Require(sigma_g >= 0.0 && std::isfinite(sigma_g),
                      "AccountantParams: sigma_g must be finite and >= 0");
  }

  bool regime_ok() const {
    return sigma_g > 0.0 && RegimeRatio(tau, b, sigma_g) < 1.0;
  }
};

// How the target delta is divided between the per-step conversion and
// strong composition. The default gives half to each:
// delta0 = delta / (2 q T), delta' = delta / 2.
struct DeltaSplit {
  double composition_fraction = 0.5;

  void Validate() const {
    internal::Require(composition_fraction > 0.0 && composition_fraction < 1.0,
                      "DeltaSplit: composition_fraction must lie in (0, 1)");
  }
};

struct PipelineStage {
  std::string name;
  double epsilon = 0.0;
  double delta = 0.0;
};

struct AccountantResult {
  std::string mechanism;
  AccountantParams params;
  double target_delta = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;  // total delta actually spent, <= target_delta
  double alpha_star = 0.0;
  bool regime_ok = false;
  std::vector<PipelineStage> trace;
};

// f_alpha(x) = log x + log(x^2 / (alpha x^2 + 1 - alpha)) / (2 (alpha - 1)),
// the per-coordinate Renyi divergence of order alpha between N(0, s^2) and
// N(0, x^2 s^2).
namespace internal {

// log1p(t) - t without cancellation for small |t|.
inline double Log1pMinusIdentity(double t) {
  if (std::abs(t) > 0.05) return std::log1p(t) - t;
  double term = t, sum = 0.0;
  for (int k = 2; k < 40; ++k) {
    term *= -t;
    sum += term / k;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

// f_alpha written in u = x^2 - 1:
// (alpha log1p(u) - log1p(alpha u)) / (2 (alpha - 1)).
inline double FAlphaOfExcess(double alpha, double u) {
  const double den = 1.0 + alpha * u;
  if (!(den > 0.0)) {
    throw DomainError("f_alpha: alpha*x^2 + 1 - alpha = " +
                      std::to_string(den) +
                      " <= 0; alpha is too large for this variance ratio");
  }
  const double num = alpha * Log1pMinusIdentity(u) -
                     Log1pMinusIdentity(alpha * u);
  return num / (2.0 * (alpha - 1.0));
}

}  // namespace internal

inline double FAlpha(double alpha, double x) {
  internal::Require(alpha > 1.0, "f_alpha: alpha must be > 1");
  internal::Require(x > 0.0, "f_alpha: x must be > 0");
  return internal::FAlphaOfExcess(alpha, (x - 1.0) * (x + 1.0));
}

// Exact D_alpha(SG(gamma(D)) || SG(gamma(D'))) given the two aggregate norms,
// the number m of aggregated noise draws and the sketch dimension b.
inline double RenyiDivergenceSgm(double alpha, double norm_d, double norm_dp,
                                 std::int64_t m, std::size_t b,
                                 double sigma_g) {
  internal::Require(norm_d >= 0.0 && norm_dp >= 0.0,
                    "renyi_divergence_sgm: norms must be >= 0");
  internal::Require(m >= 1, "renyi_divergence_sgm: m must be >= 1");
  internal::Require(b >= 1, "renyi_divergence_sgm: b must be >= 1");
  internal::Require(sigma_g > 0.0, "renyi_divergence_sgm: sigma_g must be > 0");
  if (norm_d == norm_dp) return 0.0;
  const double c2 =
      static_cast<double>(m) * static_cast<double>(b) * sigma_g * sigma_g;
  internal::Require(alpha > 1.0, "renyi_divergence_sgm: alpha must be > 1");
  // x^2 - 1 taken directly from the norms
  const double u = (norm_dp - norm_d) * (norm_dp + norm_d) / (norm_d * norm_d + c2);
  return static_cast<double>(b) * internal::FAlphaOfExcess(alpha, u);
}

inline void RequireRegime(double tau, std::size_t b, double sigma_g) {
  internal::Require(sigma_g > 0.0, "sigma_g must be > 0");
  const double r = RegimeRatio(tau, b, sigma_g);
  if (!(r < 1.0)) {
    throw RegimeError("SGM accountant requires 2*tau^2/(b*sigma_g^2) < 1, got " +
                      std::to_string(r) + "; increase b or sigma_g");
  }
}

// SGM is (alpha, alpha^2 tau^4 / ((alpha - 1) b sigma_g^4))-RDP.
inline double SgmRdpBound(double alpha, double tau, std::size_t b,
                          double sigma_g) {
  internal::Require(alpha > 1.0, "sgm_rdp_bound: alpha must be > 1");
  internal::Require(tau >= 0.0, "sgm_rdp_bound: tau must be >= 0");
  internal::Require(b >= 1, "sgm_rdp_bound: b must be >= 1");
  RequireRegime(tau, b, sigma_g);
  const double t2 = tau * tau;
  const double s2 = sigma_g * sigma_g;
  return alpha * alpha * t2 * t2 /
         ((alpha - 1.0) * static_cast<double>(b) * s2 * s2);
}

inline DpPoint RdpToDp(const RdpPoint& point, double delta) {
  point.Validate();
  internal::Require(delta > 0.0 && delta < 1.0,
                    "rdp_to_dp: delta must lie in (0, 1)");
  return {point.epsilon + std::log(1.0 / delta) / (point.alpha - 1.0), delta};
}

// Minimizer over alpha of SgmRdpBound(alpha) + log(1/delta0)/(alpha - 1).
inline double SgmOptimalAlpha(double tau, std::size_t b, double sigma_g,
                              double delta0) {
  const double t4 = tau * tau * tau * tau;
  const double s4 = sigma_g * sigma_g * sigma_g * sigma_g;
  return 1.0 + std::sqrt(1.0 + static_cast<double>(b) * s4 *
                                   std::log(1.0 / delta0) / t4);
}

struct SgmStepResult {
  DpPoint dp;
  double alpha_star = 0.0;
};

// Per-release (eps0, delta0)-DP of SGM at the closed-form optimal order.
inline SgmStepResult SgmStepDpWithAlpha(double tau, std::size_t b,
                                        double sigma_g, double delta0) {
  internal::Require(tau > 0.0, "sgm_step_dp: tau must be > 0");
  internal::Require(delta0 > 0.0 && delta0 < 1.0,
                    "sgm_step_dp: delta0 must lie in (0, 1)");
  RequireRegime(tau, b, sigma_g);
  const double alpha = SgmOptimalAlpha(tau, b, sigma_g, delta0);
  const RdpPoint rdp{alpha, SgmRdpBound(alpha, tau, b, sigma_g)};
  return {RdpToDp(rdp, delta0), alpha};
}

inline DpPoint SgmStepDp(double tau, std::size_t b, double sigma_g,
                         double delta0) {
  return SgmStepDpWithAlpha(tau, b, sigma_g, delta0).dp;
}

// Amplification by sampling a p-fraction: eps' = log(1 + p (e^eps - 1)),
// delta' = p delta.
inline DpPoint SubsampleDp(const DpPoint& point, double p) {
  point.Validate();
  internal::Require(p > 0.0 && p <= 1.0, "subsample_dp: p must lie in (0, 1]");
  if (p == 1.0) return point;
  double eps;
  if (std::isinf(point.epsilon)) {
    eps = kInfinity;
  } else if (point.epsilon > 30.0) {
    // log(1 + p(e^eps - 1)) = eps + log(p + (1 - p) e^-eps), overflow-free.
    eps = point.epsilon + std::log(p + (1.0 - p) * std::exp(-point.epsilon));
  } else {
    eps = std::log1p(p * std::expm1(point.epsilon));
  }
  return {eps, p * point.delta};
}

// k-fold adaptive composition:
// eps' = sqrt(2k log(1/delta')) eps + k eps (e^eps - 1), delta = k delta + delta'.
inline DpPoint StrongCompose(const DpPoint& point, std::int64_t k,
                             double delta_prime) {
  internal::Require(point.epsilon >= 0.0, "strong_compose: epsilon must be >= 0");
  internal::Require(point.delta >= 0.0, "strong_compose: delta must be >= 0");
  internal::Require(k >= 1, "strong_compose: k must be >= 1");
  internal::Require(delta_prime > 0.0 && delta_prime < 1.0,
                    "strong_compose: delta_prime must lie in (0, 1)");
  const double kd = static_cast<double>(k);
  const double eps = point.epsilon;
  const double out =
      eps == 0.0 ? 0.0
                 : std::sqrt(2.0 * kd * std::log(1.0 / delta_prime)) * eps +
                       kd * eps * std::expm1(eps);
  return {out, kd * point.delta + delta_prime};
}

namespace internal {

struct DeltaBudget {
  double delta0 = 0.0;       // per-release delta before subsampling
  double delta_prime = 0.0;  // slack of strong composition
};

// delta0 and delta' such that T * (q * delta0) + delta' <= delta in floating
// point, with the same evaluation order used by the pipeline.
inline DeltaBudget SplitDelta(double delta, double q, std::int64_t T,
                              const DeltaSplit& split) {
  split.Validate();
  const double td = static_cast<double>(T);
  DeltaBudget out;
  out.delta_prime = split.composition_fraction * delta;
  out.delta0 = (delta - out.delta_prime) / (q * td);
  if (!(out.delta0 > 0.0 && out.delta0 < 1.0)) {
    throw RegimeError("delta budget infeasible: per-step delta0 = " +
                      std::to_string(out.delta0) + " is outside (0, 1)");
  }
  while (td * (q * out.delta0) + out.delta_prime > delta) {
    out.delta0 = std::nextafter(out.delta0, 0.0);
  }
  return out;
}

}  // namespace internal

// End-to-end (eps, delta) of T subsampled SGM releases: closed-form optimal
// per-step conversion, amplification by subsampling, strong composition.
// sigma_g == 0 reports eps = +inf; an invalid regime throws RegimeError.
inline AccountantResult SgmEpsilon(const AccountantParams& params,
                                   double delta,
                                   const DeltaSplit& split = {}) {
  params.Validate();
  internal::Require(delta > 0.0 && delta < 1.0,
                    "sgm_epsilon: delta must lie in (0, 1)");
  AccountantResult result;
  result.mechanism = "sgm";
  result.params = params;
  result.target_delta = delta;

  const internal::DeltaBudget budget =
      internal::SplitDelta(delta, params.q, params.T, split);

  if (params.sigma_g == 0.0) {
    result.epsilon = kInfinity;
    result.delta = static_cast<double>(params.T) * (params.q * budget.delta0) +
                   budget.delta_prime;
    result.alpha_star = kInfinity;
    result.regime_ok = false;
    return result;
  }
  RequireRegime(params.tau, params.b, params.sigma_g);
  result.regime_ok = true;

  const SgmStepResult step =
      SgmStepDpWithAlpha(params.tau, params.b, params.sigma_g, budget.delta0);
  const DpPoint sampled = SubsampleDp(step.dp, params.q);
  const DpPoint composed = StrongCompose(sampled, params.T, budget.delta_prime);

  result.alpha_star = step.alpha_star;
  result.epsilon = composed.epsilon;
  result.delta = composed.delta;
  result.trace = {{"step", step.dp.epsilon, step.dp.delta},
                  {"subsample", sampled.epsilon, sampled.delta},
                  {"compose", composed.epsilon, composed.delta}};
  return result;
}

// Smallest sigma_g (relative tolerance 1e-4) whose SgmEpsilon is <= target.
// The bracket starts at the regime floor sqrt(2) tau / sqrt(b) and doubles
// until feasible.
inline double CalibrateSgmSigma(const DpPoint& target, double q,
                                std::int64_t T, double tau, std::size_t b,
                                const DeltaSplit& split = {}) {
  internal::Require(target.delta > 0.0 && target.delta < 1.0,
                    "calibrate: delta must lie in (0, 1)");
  if (!(target.epsilon > 0.0) || !std::isfinite(target.epsilon)) {
    throw CalibrationError("calibrate: target epsilon must be finite and > 0, got " +
                           std::to_string(target.epsilon));
  }
  AccountantParams params{q, T, tau, b, 0.0};
  auto feasible = [&](double sigma) {
    params.sigma_g = sigma;
    if (!params.regime_ok()) return false;
    return SgmEpsilon(params, target.delta, split).epsilon <= target.epsilon;
  };

  constexpr double kRelTol = 1e-4;
  double lo = std::sqrt(2.0) * tau / std::sqrt(static_cast<double>(b));
  double hi = 2.0 * lo;
  for (int doublings = 0; !feasible(hi); ++doublings) {
    if (doublings >= 200 || !std::isfinite(hi)) {
      throw CalibrationError(
          "calibrate: no sigma_g reaches epsilon " +
          std::to_string(target.epsilon) + " (searched up to sigma_g = " +
          std::to_string(hi) + ")");
    }
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > kRelTol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// Noise lower bound of the moments-accountant style analysis, with the
// unspecified constant c2 supplied by the caller. Qualitative only: the
// constant is unknown, so the value supports comparisons and plots, never
// calibration. b may be +inf.
inline double MaNoiseBound(double c2, double tau, std::int64_t m,
                           std::int64_t T, double b, std::int64_t n,
                           double eps, double delta) {
  internal::Require(c2 > 0.0 && tau > 0.0 && m >= 1 && T >= 1 && b > 0.0 &&
                        n >= 1 && eps > 0.0 && delta > 0.0 && delta < 1.0,
                    "ma_noise_bound: all arguments must be positive");
  const double mt = static_cast<double>(m) * static_cast<double>(T);
  const double jl = std::pow(std::log(2.0 * mt / delta), 1.5) / std::sqrt(b);
  return c2 * tau * std::sqrt((1.0 + jl) * mt * std::log(2.0 / delta)) /
         (static_cast<double>(n) * eps);
}

// RDP of the Poisson-subsampled Gaussian mechanism (noise multiplier sigma)
// at integer order alpha >= 2:
//   1/(alpha-1) log sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp((k^2 - k)/(2 sigma^2)).
inline double SampledGaussianRdp(double q, double sigma, int alpha) {
  internal::Require(q > 0.0 && q <= 1.0, "sampled_gaussian_rdp: q must lie in (0, 1]");
  internal::Require(sigma > 0.0, "sampled_gaussian_rdp: sigma must be > 0");
  internal::Require(alpha >= 2, "sampled_gaussian_rdp: alpha must be >= 2");
  const double a = static_cast<double>(alpha);
  if (q == 1.0) return a / (2.0 * sigma * sigma);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms(static_cast<std::size_t>(alpha) + 1);
  double max_term = -kInfinity;
  for (int k = 0; k <= alpha; ++k) {
    const double kd = static_cast<double>(k);
    const double log_binom =
        std::lgamma(a + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(a - kd + 1.0);
    const double t = log_binom + (a - kd) * log_1mq + kd * log_q +
                     (kd * kd - kd) / (2.0 * sigma * sigma);
    terms[static_cast<std::size_t>(k)] = t;
    max_term = std::max(max_term, t);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  return (max_term + std::log(sum)) / (a - 1.0);
}

inline constexpr int kBaselineMinOrder = 2;
inline constexpr int kBaselineMaxOrder = 256;

// Baseline accountant: T-fold composition of the subsampled Gaussian
// mechanism in RDP over integer orders [2, 256], converted with
// eps + log(1/delta)/(alpha-1) and minimized over the order.
inline AccountantResult BaselineGmEpsilon(double q, double sigma,
                                          std::int64_t T, double delta) {
  internal::Require(sigma > 0.0, "baseline_gm_epsilon: sigma must be > 0");
  internal::Require(T >= 1, "baseline_gm_epsilon: T must be >= 1");
  internal::Require(delta > 0.0 && delta < 1.0,
                    "baseline_gm_epsilon: delta must lie in (0, 1)");
  AccountantResult result;
  result.mechanism = "subsampled-gaussian-rdp-integer-orders";
  result.params = {q, T, 1.0, 1, sigma};
  result.target_delta = delta;
  result.delta = delta;
  result.regime_ok = true;
  result.epsilon = kInfinity;
  double best_rdp = 0.0;
  for (int alpha = kBaselineMinOrder; alpha <= kBaselineMaxOrder; ++alpha) {
    const double rdp = static_cast<double>(T) * SampledGaussianRdp(q, sigma, alpha);
    const double eps = RdpToDp({static_cast<double>(alpha), rdp}, delta).epsilon;
    if (eps < result.epsilon) {
      result.epsilon = eps;
      result.alpha_star = alpha;
      best_rdp = rdp;
    }
  }
  result.trace = {{"rdp", best_rdp, 0.0}, {"convert", result.epsilon, delta}};
  return result;
}

// Smallest baseline noise multiplier (relative tolerance 1e-4) whose
// BaselineGmEpsilon is <= target.
inline double CalibrateBaselineSigma(const DpPoint& target, double q,
                                     std::int64_t T) {
  if (!(target.epsilon > 0.0) || !std::isfinite(target.epsilon)) {
    throw CalibrationError("calibrate baseline: target epsilon must be finite and > 0");
  }
  auto feasible = [&](double s) {
    return BaselineGmEpsilon(q, s, T, target.delta).epsilon <= target.epsilon;
  };
  double lo = 1e-3;
  while (feasible(lo)) {
    lo *= 0.5;
    if (lo < 1e-12) return lo;
  }
  double hi = 2.0 * lo;
  for (int doublings = 0; !feasible(hi); ++doublings) {
    if (doublings >= 200) {
      throw CalibrationError("calibrate baseline: target epsilon unreachable");
    }
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-4 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace fedsgm

#endif  // FEDSGM_ACCOUNTANT_HPP_
