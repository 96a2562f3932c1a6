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

#ifndef FEDSGM_ERRORS_HPP_
#define FEDSGM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fedsgm {

// Base of every error raised by the library. Each subclass maps onto one
// failure category; the CLI turns categories into exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an API contract: dimension mismatch, non-finite input,
// out-of-range argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A formula was evaluated outside its mathematical domain
// (e.g. f_alpha with alpha*x^2 + 1 - alpha <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Privacy parameters fall outside the region where the SGM accountant bound
// holds (2 tau^2 / (b sigma_g^2) >= 1), or the delta budget cannot be split.
class RegimeError : public Error {
 public:
  using Error::Error;
};

// No noise scale satisfies the requested privacy target.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Requested object would not fit in memory.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (schema violation, unknown key, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace internal {

template <typename E = ContractError>
inline void Require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace internal
}  // namespace fedsgm

#endif  // FEDSGM_ERRORS_HPP_
