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

#ifndef FEDSGM_OPTIM_HPP_
#define FEDSGM_OPTIM_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <variant>

#include "fedsgm/errors.hpp"
#include "fedsgm/vector.hpp"

namespace fedsgm {

// Server-side GLOBAL_OPT rules. Each consumes the desketched aggregated
// update (a descent direction: theta moves against it).

struct GdConfig {
  double eta_global = 1.0;

  void Validate() const {
    internal::Require(eta_global > 0.0 && std::isfinite(eta_global),
                      "GdConfig: eta_global must be finite and > 0");
  }
};

inline Vector GdStep(const Vector& theta, const Vector& update,
                     const GdConfig& cfg) {
  cfg.Validate();
  internal::RequireSize(update, theta.size(), "gd_step");
  return theta - cfg.eta_global * update;
}

struct MomentConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  // Skip the 1/(sqrt(v) + eps) preconditioner; with beta1 = 0 this is GD.
  bool raw = false;

  void Validate() const {
    internal::Require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
    internal::Require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
    internal::Require(eps > 0.0, "eps must be > 0");
  }
};

// AMSGrad moments. No bias correction; m and v start at zero.
struct AmsGradState {
  Vector m;
  Vector v;      // running elementwise max of v_hat
  Vector v_hat;  // latest second-moment estimate
  MomentConfig config;

  static AmsGradState Zero(Eigen::Index d, const MomentConfig& config = {}) {
    config.Validate();
    return {Vector::Zero(d), Vector::Zero(d), Vector::Zero(d), config};
  }
};

// m_t = b1 m + (1 - b1) u; v_hat_t = b2 v + (1 - b2) u^2; v_t = max(v_hat_t, v);
// theta' = theta - eta m_t / (sqrt(v_t) + eps).
//
// Uses the current-step moments (m_t, v_t) in the parameter update.
inline std::pair<Vector, AmsGradState> AmsGradStep(const Vector& theta,
                                                   const Vector& update,
                                                   const AmsGradState& state,
                                                   double eta_global) {
  const MomentConfig& c = state.config;
  c.Validate();
  internal::Require(eta_global > 0.0, "amsgrad_step: eta_global must be > 0");
  internal::RequireSize(update, theta.size(), "amsgrad_step");
  internal::RequireSize(state.m, theta.size(), "amsgrad_step state");
  internal::RequireSize(state.v, theta.size(), "amsgrad_step state");

  AmsGradState next;
  next.config = c;
  next.m = c.beta1 * state.m + (1.0 - c.beta1) * update;
  next.v_hat = c.beta2 * state.v + (1.0 - c.beta2) * update.cwiseProduct(update);
  next.v = next.v_hat.cwiseMax(state.v);
  if (c.raw) return {theta - eta_global * next.m, std::move(next)};
  Vector step = next.m.array() / (next.v.array().sqrt() + c.eps);
  return {theta - eta_global * step, std::move(next)};
}

// Adam without bias correction: AMSGrad minus the running max.
struct AdamState {
  Vector m;
  Vector v;
  MomentConfig config;

  static AdamState Zero(Eigen::Index d, const MomentConfig& config = {}) {
    config.Validate();
    return {Vector::Zero(d), Vector::Zero(d), config};
  }
};

inline std::pair<Vector, AdamState> AdamStep(const Vector& theta,
                                             const Vector& update,
                                             const AdamState& state,
                                             double eta_global) {
  const MomentConfig& c = state.config;
  c.Validate();
  internal::Require(eta_global > 0.0, "adam_step: eta_global must be > 0");
  internal::RequireSize(update, theta.size(), "adam_step");
  internal::RequireSize(state.m, theta.size(), "adam_step state");
  internal::RequireSize(state.v, theta.size(), "adam_step state");

  AdamState next;
  next.config = c;
  next.m = c.beta1 * state.m + (1.0 - c.beta1) * update;
  next.v = c.beta2 * state.v + (1.0 - c.beta2) * update.cwiseProduct(update);
  if (c.raw) return {theta - eta_global * next.m, std::move(next)};
  Vector step = next.m.array() / (next.v.array().sqrt() + c.eps);
  return {theta - eta_global * step, std::move(next)};
}

enum class OptimizerKind { kGd, kAmsGrad, kAdam };

inline const char* ToString(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kGd: return "gd";
    case OptimizerKind::kAmsGrad: return "amsgrad";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

inline OptimizerKind ParseOptimizerKind(const std::string& name) {
  if (name == "gd") return OptimizerKind::kGd;
  if (name == "amsgrad") return OptimizerKind::kAmsGrad;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name +
                    "' (expected gd, amsgrad or adam)");
}

// Stateful wrapper used by the federation loop.
class GlobalOptimizer {
 public:
  GlobalOptimizer(OptimizerKind kind, Eigen::Index d, double eta_global,
                  const MomentConfig& moments = {})
      : kind_(kind), gd_{eta_global} {
    gd_.Validate();
    switch (kind) {
      case OptimizerKind::kGd: state_ = std::monostate{}; break;
      case OptimizerKind::kAmsGrad: state_ = AmsGradState::Zero(d, moments); break;
      case OptimizerKind::kAdam: state_ = AdamState::Zero(d, moments); break;
    }
  }

  OptimizerKind kind() const { return kind_; }

  Vector Step(const Vector& theta, const Vector& update) {
    if (auto* s = std::get_if<AmsGradState>(&state_)) {
      auto [next, st] = AmsGradStep(theta, update, *s, gd_.eta_global);
      *s = std::move(st);
      return next;
    }
    if (auto* s = std::get_if<AdamState>(&state_)) {
      auto [next, st] = AdamStep(theta, update, *s, gd_.eta_global);
      *s = std::move(st);
      return next;
    }
    return GdStep(theta, update, gd_);
  }

 private:
  OptimizerKind kind_;
  GdConfig gd_;
  std::variant<std::monostate, AmsGradState, AdamState> state_;
};

}  // namespace fedsgm

#endif  // FEDSGM_OPTIM_HPP_
