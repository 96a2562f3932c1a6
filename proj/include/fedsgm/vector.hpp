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

#ifndef FEDSGM_VECTOR_HPP_
#define FEDSGM_VECTOR_HPP_

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "fedsgm/errors.hpp"

namespace fedsgm {

// Dense 64-bit vector used for parameters, updates and sketched payloads.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace internal {

inline void RequireSize(const Vector& v, Eigen::Index expected,
                        const char* what) {
  if (v.size() != expected) {
    throw ContractError(std::string(what) + ": expected length " +
                        std::to_string(expected) + ", got " +
                        std::to_string(v.size()));
  }
}

inline void RequireFinite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw ContractError(std::string(what) + ": vector has non-finite entries");
  }
}

// Sequential left-to-right sum. Used wherever the summation order must be
// pinned for bitwise reproducibility.
inline double OrderedDot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace internal
}  // namespace fedsgm

#endif  // FEDSGM_VECTOR_HPP_
