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

#ifndef FEDSGM_MECHANISM_HPP_
#define FEDSGM_MECHANISM_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include "fedsgm/errors.hpp"
#include "fedsgm/random.hpp"
#include "fedsgm/sketch.hpp"
#include "fedsgm/vector.hpp"

namespace fedsgm {

// Hyperparameters of the Sketched Gaussian Mechanism. tau may be +inf
// (clipping disabled); sigma_g == 0 is the non-private ablation.
struct MechanismConfig {
  double tau = 1.0;
  double sigma_g = 0.0;
  std::size_t b = 1;
  std::uint64_t noise_seed = 0;

  void Validate() const {
    internal::Require(tau > 0.0, "MechanismConfig: tau must be > 0");
    internal::Require(sigma_g >= 0.0 && std::isfinite(sigma_g),
                      "MechanismConfig: sigma_g must be finite and >= 0");
    internal::Require(b >= 1, "MechanismConfig: b must be >= 1");
  }

  bool is_private() const { return sigma_g > 0.0; }
};

// v * min{1, tau / ||v||}. Vectors already inside the ball are returned
// untouched (bitwise).
inline Vector Clip(const Vector& v, double tau) {
  internal::Require(tau > 0.0, "clip: tau must be > 0");
  const double norm = v.norm();
  if (norm <= tau) return v;
  return v * (tau / norm);
}

inline bool ClipActivates(const Vector& v, double tau) {
  return v.norm() > tau;
}

// Noise substream for one client in one round. Independent of every other
// (client, round) pair and of the order in which clients run.
inline RandomStream NoiseStream(std::uint64_t noise_seed,
                                std::uint64_t client_id, std::uint64_t round) {
  return RandomStream(rng::DeriveKey(
      rng::DeriveKey(rng::DeriveKey(noise_seed, "sgm-noise"), client_id),
      round));
}

// Isotropic Gaussian noise of dimension n and standard deviation sigma.
inline Vector GaussianNoise(Eigen::Index n, double sigma, RandomStream& rng) {
  Vector xi(n);
  for (Eigen::Index i = 0; i < n; ++i) xi[i] = sigma * rng.NextNormal();
  return xi;
}

// SG(x; R, xi) = R x + xi with xi ~ N(0, sigma_g^2 I_b). The caller is
// responsible for clipping x first.
inline Vector SgmApply(const Vector& x_clipped, const Compressor& r,
                       double sigma_g, RandomStream& rng) {
  internal::Require(sigma_g >= 0.0, "sgm_apply: sigma_g must be >= 0");
  Vector y = r.Compress(x_clipped);
  if (sigma_g > 0.0) y += GaussianNoise(y.size(), sigma_g, rng);
  return y;
}

inline Vector SgmApply(const Vector& x_clipped, const SketchMatrix& r,
                       double sigma_g, RandomStream& rng) {
  internal::Require(sigma_g >= 0.0, "sgm_apply: sigma_g must be >= 0");
  Vector y = r.Apply(x_clipped);
  if (sigma_g > 0.0) y += GaussianNoise(y.size(), sigma_g, rng);
  return y;
}

struct RatioSensitivityBounds {
  double lower = 1.0;  // bound on 1 / rsens
  double upper = 1.0;  // bound on rsens
};

// 2 tau^2 / (b sigma_g^2); the accountant is valid only while this is < 1.
inline double RegimeRatio(double tau, std::size_t b, double sigma_g) {
  return 2.0 * tau * tau / (static_cast<double>(b) * sigma_g * sigma_g);
}

// sqrt(1 - 2 tau^2/(b sigma^2)) <= 1/rsens <= 1 <= rsens <= sqrt(1 + 2 tau^2/(b sigma^2))
inline RatioSensitivityBounds RatioSensitivity(double tau, std::size_t b,
                                               double sigma_g) {
  internal::Require(sigma_g > 0.0, "ratio_sensitivity: sigma_g must be > 0");
  internal::Require(tau >= 0.0, "ratio_sensitivity: tau must be >= 0");
  internal::Require(b >= 1, "ratio_sensitivity: b must be >= 1");
  const double r = RegimeRatio(tau, b, sigma_g);
  if (!(r < 1.0)) {
    throw RegimeError("ratio sensitivity undefined: 2*tau^2/(b*sigma_g^2) = " +
                      std::to_string(r) +
                      " >= 1; increase the sketch dimension b or sigma_g");
  }
  return {std::sqrt(1.0 - r), std::sqrt(1.0 + r)};
}

}  // namespace fedsgm

#endif  // FEDSGM_MECHANISM_HPP_
