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

#ifndef FEDSGM_SKETCH_HPP_
#define FEDSGM_SKETCH_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsgm/errors.hpp"
#include "fedsgm/random.hpp"
#include "fedsgm/vector.hpp"

namespace fedsgm {

// Identifies one Gaussian sketching matrix R of shape b x d.
struct SketchSpec {
  std::uint64_t seed = 0;
  std::size_t b = 1;  // sketch (output) dimension
  std::size_t d = 1;  // ambient (input) dimension

  void Validate() const {
    internal::Require(b >= 1, "SketchSpec: b must be >= 1");
    internal::Require(d >= 1, "SketchSpec: d must be >= 1");
  }

  friend bool operator==(const SketchSpec&, const SketchSpec&) = default;
};

enum class SketchStorage {
  kAuto,       // dense when b*d <= kAutoDenseEntries, otherwise streaming
  kDense,      // materialize all entries (b*d <= kMaxDenseEntries)
  kStreaming,  // regenerate rows on demand, O(1) memory
};

inline constexpr std::size_t kMaxDenseEntries = 100'000'000;
inline constexpr std::size_t kAutoDenseEntries = std::size_t{1} << 22;

// R with entries i.i.d. N(0, 1/b), so that E[R^T R] = I_d.
//
// Entry (i, j) is a pure function of (seed, i, j): dense and streaming
// storage produce bit-identical entries and bit-identical products, because
// both use the same fixed summation order.
class SketchMatrix {
 public:
  explicit SketchMatrix(const SketchSpec& spec,
                        SketchStorage storage = SketchStorage::kAuto)
      : spec_(spec) {
    spec_.Validate();
    key_ = rng::DeriveKey(spec_.seed, "gaussian-sketch");
    scale_ = 1.0 / std::sqrt(static_cast<double>(spec_.b));

    const bool overflow =
        spec_.b > std::numeric_limits<std::size_t>::max() / spec_.d;
    const std::size_t entries = overflow ? 0 : spec_.b * spec_.d;
    bool dense = false;
    switch (storage) {
      case SketchStorage::kDense:
        if (overflow || entries > kMaxDenseEntries) {
          throw ResourceError("SketchMatrix: dense storage of " +
                              std::to_string(spec_.b) + "x" +
                              std::to_string(spec_.d) +
                              " exceeds the dense limit; use streaming");
        }
        dense = true;
        break;
      case SketchStorage::kAuto:
        dense = !overflow && entries <= kAutoDenseEntries;
        break;
      case SketchStorage::kStreaming:
        break;
    }
    if (dense) {
      entries_.resize(entries);
      for (std::size_t i = 0; i < spec_.b; ++i)
        for (std::size_t j = 0; j < spec_.d; ++j)
          entries_[i * spec_.d + j] = Generate(i, j);
    }
  }

  const SketchSpec& spec() const { return spec_; }
  std::size_t rows() const { return spec_.b; }
  std::size_t cols() const { return spec_.d; }
  bool is_dense() const { return !entries_.empty(); }

  double operator()(std::size_t i, std::size_t j) const {
    if (is_dense()) return entries_[i * spec_.d + j];
    return Generate(i, j);
  }

  // Writes row i into `out` (length d).
  void Row(std::size_t i, std::span<double> out) const {
    if (is_dense()) {
      const double* src = entries_.data() + i * spec_.d;
      std::copy(src, src + spec_.d, out.begin());
      return;
    }
    for (std::size_t j = 0; j < spec_.d; ++j) out[j] = Generate(i, j);
  }

  // R x
  Vector Apply(const Vector& x) const {
    internal::RequireSize(x, static_cast<Eigen::Index>(spec_.d), "sketch");
    Vector y(static_cast<Eigen::Index>(spec_.b));
    ForEachRow([&](std::size_t i, const double* row) {
      y[static_cast<Eigen::Index>(i)] =
          internal::OrderedDot(row, x.data(), spec_.d);
    });
    return y;
  }

  // R^T y
  Vector ApplyTranspose(const Vector& y) const {
    internal::RequireSize(y, static_cast<Eigen::Index>(spec_.b), "desketch");
    Vector z = Vector::Zero(static_cast<Eigen::Index>(spec_.d));
    double* out = z.data();
    ForEachRow([&](std::size_t i, const double* row) {
      const double yi = y[static_cast<Eigen::Index>(i)];
      for (std::size_t j = 0; j < spec_.d; ++j) out[j] += row[j] * yi;
    });
    return z;
  }

  Matrix ToDense() const {
    Matrix m(static_cast<Eigen::Index>(spec_.b),
             static_cast<Eigen::Index>(spec_.d));
    for (std::size_t i = 0; i < spec_.b; ++i)
      for (std::size_t j = 0; j < spec_.d; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            (*this)(i, j);
    return m;
  }

 private:
  double Generate(std::size_t i, std::size_t j) const {
    return rng::NormalAt(key_, static_cast<std::uint64_t>(i) * spec_.d + j) *
           scale_;
  }

  template <typename F>
  void ForEachRow(F&& f) const {
    if (is_dense()) {
      for (std::size_t i = 0; i < spec_.b; ++i)
        f(i, entries_.data() + i * spec_.d);
      return;
    }
    std::vector<double> row(spec_.d);
    for (std::size_t i = 0; i < spec_.b; ++i) {
      Row(i, row);
      f(i, row.data());
    }
  }

  SketchSpec spec_;
  std::uint64_t key_ = 0;
  double scale_ = 1.0;
  std::vector<double> entries_;
};

inline SketchMatrix SampleSketch(const SketchSpec& spec,
                                 SketchStorage storage = SketchStorage::kAuto) {
  return SketchMatrix(spec, storage);
}

inline Vector Sketch(const SketchMatrix& r, const Vector& x) {
  return r.Apply(x);
}

inline Vector Desketch(const SketchMatrix& r, const Vector& y) {
  return r.ApplyTranspose(y);
}

inline Vector IdentityCompressor(const Vector& x) { return x; }

// Seed of the matrix shared by all clients in round t.
inline std::uint64_t RoundSketchSeed(std::uint64_t master_seed,
                                     std::uint64_t round) {
  return rng::DeriveKey(rng::DeriveKey(master_seed, "round-sketch"), round);
}

// Either a Gaussian sketch or the identity map. Fed-SGM is written against
// this so that the identity mode reproduces unsketched FedAvg bit for bit.
class Compressor {
 public:
  static Compressor Identity(std::size_t d) {
    internal::Require(d >= 1, "Compressor: d must be >= 1");
    return Compressor(d, std::nullopt);
  }
  static Compressor Gaussian(const SketchSpec& spec,
                             SketchStorage storage = SketchStorage::kAuto) {
    return Compressor(spec.d, SketchMatrix(spec, storage));
  }

  bool is_identity() const { return !matrix_.has_value(); }
  std::size_t input_dim() const { return d_; }
  std::size_t output_dim() const { return matrix_ ? matrix_->rows() : d_; }
  // Ambient dimension over payload dimension; 1.0 for the identity.
  double compression_ratio() const {
    return static_cast<double>(d_) / static_cast<double>(output_dim());
  }
  const SketchMatrix* matrix() const {
    return matrix_ ? &*matrix_ : nullptr;
  }

  Vector Compress(const Vector& x) const {
    if (!matrix_) {
      internal::RequireSize(x, static_cast<Eigen::Index>(d_), "compress");
      return IdentityCompressor(x);
    }
    return matrix_->Apply(x);
  }

  Vector Decompress(const Vector& y) const {
    if (!matrix_) {
      internal::RequireSize(y, static_cast<Eigen::Index>(d_), "decompress");
      return IdentityCompressor(y);
    }
    return matrix_->ApplyTranspose(y);
  }

 private:
  Compressor(std::size_t d, std::optional<SketchMatrix> m)
      : d_(d), matrix_(std::move(m)) {}

  std::size_t d_;
  std::optional<SketchMatrix> matrix_;
};

}  // namespace fedsgm

#endif  // FEDSGM_SKETCH_HPP_
