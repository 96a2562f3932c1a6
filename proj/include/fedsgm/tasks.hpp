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

#ifndef FEDSGM_TASKS_HPP_
#define FEDSGM_TASKS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fedsgm/errors.hpp"
#include "fedsgm/random.hpp"
#include "fedsgm/vector.hpp"

namespace fedsgm {

using IndexList = std::vector<std::size_t>;

// Largest dimension for which tasks expose an exact Hessian.
inline constexpr std::size_t kMaxExactHessianDim = 500;

// A differentiable empirical loss L(theta) = (1/n) sum_i l(theta; i) over n
// samples. Batch methods average over the given sample indices.
// Implementations are immutable after construction and safe to evaluate
// from several threads.
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t num_samples() const = 0;

  virtual double Loss(const Vector& theta, std::span<const std::size_t> batch) const = 0;
  virtual Vector Grad(const Vector& theta, std::span<const std::size_t> batch) const = 0;

  virtual double FullLoss(const Vector& theta) const {
    return Loss(theta, AllIndices());
  }
  virtual Vector FullGrad(const Vector& theta) const {
    return Grad(theta, AllIndices());
  }

  // Exact Hessian of the full loss; nullopt when dim() > kMaxExactHessianDim.
  virtual std::optional<Matrix> Hessian(const Vector& theta) const = 0;

  // L*, when known.
  virtual std::optional<double> MinimumValue() const { return std::nullopt; }

  // Held-out quality measure recorded per round (accuracy or suboptimality).
  virtual double TestMetric(const Vector& theta) const = 0;
  virtual std::string test_metric_name() const = 0;

  virtual const Vector& initial_theta() const = 0;

  const IndexList& AllIndices() const {
    if (all_.size() != num_samples()) {
      all_.resize(num_samples());
      std::iota(all_.begin(), all_.end(), std::size_t{0});
    }
    return all_;
  }

 protected:
  // Subclasses call this at the end of construction so AllIndices() never
  // mutates after the task is shared.
  void InitIndices() {
    all_.resize(num_samples());
    std::iota(all_.begin(), all_.end(), std::size_t{0});
  }

 private:
  mutable IndexList all_;
};

// ---------------------------------------------------------------------------
// Quadratic task

// Per-sample loss l_i(theta) = 1/2 (theta - theta*)^T H (theta - theta*)
//                              + a_i^T (theta - theta*),
// with the shifts a_i centred so that the full loss is the pure quadratic
// (minimum L* = 0 at theta* when H is PSD). The shifts model minibatch noise
// and client heterogeneity; zero shifts give a deterministic task.
class QuadraticTask final : public Task {
 public:
  QuadraticTask(Matrix hessian, Vector optimum, Matrix shifts, Vector init,
                std::vector<double> spectrum = {})
      : h_(std::move(hessian)),
        opt_(std::move(optimum)),
        shifts_(std::move(shifts)),
        init_(std::move(init)),
        spectrum_(std::move(spectrum)) {
    internal::Require(h_.rows() == h_.cols(), "QuadraticTask: Hessian must be square");
    internal::Require(h_.rows() >= 1, "QuadraticTask: dimension must be >= 1");
    internal::RequireSize(opt_, h_.rows(), "QuadraticTask optimum");
    internal::RequireSize(init_, h_.rows(), "QuadraticTask init");
    internal::Require(shifts_.rows() == h_.rows() && shifts_.cols() >= 1,
                      "QuadraticTask: shifts must be d x n with n >= 1");
    mean_shift_ = shifts_.rowwise().mean();
    InitIndices();
  }

  std::string name() const override { return "quadratic"; }
  std::size_t dim() const override { return static_cast<std::size_t>(h_.rows()); }
  std::size_t num_samples() const override {
    return static_cast<std::size_t>(shifts_.cols());
  }

  double Loss(const Vector& theta, std::span<const std::size_t> batch) const override {
    internal::Require(!batch.empty(), "quadratic loss: empty batch");
    const Vector e = theta - opt_;
    return 0.5 * e.dot(h_ * e) + BatchShift(batch).dot(e);
  }

  Vector Grad(const Vector& theta, std::span<const std::size_t> batch) const override {
    internal::Require(!batch.empty(), "quadratic grad: empty batch");
    return h_ * (theta - opt_) + BatchShift(batch);
  }

  double FullLoss(const Vector& theta) const override {
    const Vector e = theta - opt_;
    return 0.5 * e.dot(h_ * e) + mean_shift_.dot(e);
  }
  Vector FullGrad(const Vector& theta) const override {
    return h_ * (theta - opt_) + mean_shift_;
  }

  std::optional<Matrix> Hessian(const Vector&) const override {
    if (dim() > kMaxExactHessianDim) return std::nullopt;
    return h_;
  }

  std::optional<double> MinimumValue() const override {
    if (!min_known_) return std::nullopt;
    return 0.0;
  }

  // L(theta) - L*, or L(theta) when L* is unknown.
  double TestMetric(const Vector& theta) const override {
    return FullLoss(theta) - MinimumValue().value_or(0.0);
  }
  std::string test_metric_name() const override { return "suboptimality"; }

  const Vector& initial_theta() const override { return init_; }
  const Vector& optimum() const { return opt_; }
  const Matrix& hessian() const { return h_; }
  const std::vector<double>& spectrum() const { return spectrum_; }

  void set_minimum_known(bool known) { min_known_ = known; }

 private:
  Vector BatchShift(std::span<const std::size_t> batch) const {
    Vector s = Vector::Zero(h_.rows());
    for (std::size_t i : batch) {
      internal::Require(i < num_samples(), "quadratic: sample index out of range");
      s += shifts_.col(static_cast<Eigen::Index>(i));
    }
    return s / static_cast<double>(batch.size());
  }

  Matrix h_;
  Vector opt_;
  Matrix shifts_;
  Vector mean_shift_;
  Vector init_;
  std::vector<double> spectrum_;
  bool min_known_ = false;
};

// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the sign
// of R's diagonal folded into Q).
inline Matrix RandomOrthogonal(Eigen::Index d, RandomStream& rng) {
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.NextNormal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

struct QuadraticOptions {
  std::size_t num_samples = 1;  // per-sample shifts (>= number of clients)
  double sample_noise = 0.0;    // std of the per-sample shift entries
  double init_scale = 1.0;      // theta0 = theta* + init_scale * N(0, I)
};

// L(theta) = 1/2 (theta - theta*)^T Q diag(spectrum) Q^T (theta - theta*)
// with Haar-random Q, so the Hessian spectrum is exactly `spectrum`.
inline QuadraticTask MakeQuadratic(const std::vector<double>& spectrum,
                                   std::uint64_t seed,
                                   const QuadraticOptions& opts = {}) {
  internal::Require(!spectrum.empty(), "make_quadratic: empty spectrum");
  internal::Require(opts.num_samples >= 1, "make_quadratic: need >= 1 sample");
  double max_lambda = -std::numeric_limits<double>::infinity();
  for (double l : spectrum) {
    internal::Require(std::isfinite(l), "make_quadratic: non-finite eigenvalue");
    max_lambda = std::max(max_lambda, l);
  }
  if (!(max_lambda > 0.0)) {
    throw ConfigError("make_quadratic: spectrum needs a positive eigenvalue");
  }
  const auto d = static_cast<Eigen::Index>(spectrum.size());
  RandomStream rng(rng::DeriveKey(seed, "quadratic"));
  RandomStream q_rng = rng.Fork("basis");
  RandomStream opt_rng = rng.Fork("optimum");
  RandomStream init_rng = rng.Fork("init");
  RandomStream shift_rng = rng.Fork("shifts");

  const Matrix q = RandomOrthogonal(d, q_rng);
  const Vector lambda = Eigen::Map<const Vector>(spectrum.data(), d);
  Matrix h = q * lambda.asDiagonal() * q.transpose();
  h = 0.5 * (h + h.transpose()).eval();

  Vector opt(d);
  for (Eigen::Index i = 0; i < d; ++i) opt[i] = opt_rng.NextNormal();
  Vector init(d);
  for (Eigen::Index i = 0; i < d; ++i)
    init[i] = opt[i] + opts.init_scale * init_rng.NextNormal();

  const auto n = static_cast<Eigen::Index>(opts.num_samples);
  Matrix shifts = Matrix::Zero(d, n);
  if (opts.sample_noise > 0.0) {
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < d; ++i)
        shifts(i, j) = opts.sample_noise * shift_rng.NextNormal();
    const Vector mean = shifts.rowwise().mean();
    shifts.colwise() -= mean;
  }
  QuadraticTask task(std::move(h), std::move(opt), std::move(shifts),
                     std::move(init), spectrum);
  const bool psd = std::all_of(spectrum.begin(), spectrum.end(),
                               [](double l) { return l >= 0.0; });
  task.set_minimum_known(psd);
  return task;
}

inline std::vector<double> PowerLawSpectrum(std::size_t d, double exponent) {
  std::vector<double> s(d);
  for (std::size_t i = 0; i < d; ++i)
    s[i] = std::pow(static_cast<double>(i + 1), -exponent);
  return s;
}

// ---------------------------------------------------------------------------
// Logistic regression task

struct Dataset {
  Matrix x;  // n x d
  Vector y;  // labels in {-1, +1}
};

// Mean logistic loss log(1 + exp(-y x^T theta)) + reg/2 ||theta||^2.
class LogRegTask final : public Task {
 public:
  LogRegTask(Dataset train, Dataset test, double reg, Vector init)
      : train_(std::move(train)), test_(std::move(test)), reg_(reg),
        init_(std::move(init)) {
    internal::Require(train_.x.rows() >= 1, "LogRegTask: empty training set");
    internal::Require(train_.y.size() == train_.x.rows(),
                      "LogRegTask: label count mismatch");
    internal::Require(reg_ >= 0.0, "LogRegTask: reg must be >= 0");
    internal::RequireSize(init_, train_.x.cols(), "LogRegTask init");
    InitIndices();
  }

  std::string name() const override { return "logreg"; }
  std::size_t dim() const override { return static_cast<std::size_t>(train_.x.cols()); }
  std::size_t num_samples() const override {
    return static_cast<std::size_t>(train_.x.rows());
  }

  double Loss(const Vector& theta, std::span<const std::size_t> batch) const override {
    internal::Require(!batch.empty(), "logreg loss: empty batch");
    double acc = 0.0;
    for (std::size_t i : batch) {
      const auto r = static_cast<Eigen::Index>(i);
      acc += Softplus(-train_.y[r] * train_.x.row(r).dot(theta));
    }
    return acc / static_cast<double>(batch.size()) + 0.5 * reg_ * theta.squaredNorm();
  }

  Vector Grad(const Vector& theta, std::span<const std::size_t> batch) const override {
    internal::Require(!batch.empty(), "logreg grad: empty batch");
    Vector g = Vector::Zero(theta.size());
    for (std::size_t i : batch) {
      const auto r = static_cast<Eigen::Index>(i);
      const double margin = train_.y[r] * train_.x.row(r).dot(theta);
      g -= (train_.y[r] * Sigmoid(-margin)) * train_.x.row(r).transpose();
    }
    return g / static_cast<double>(batch.size()) + reg_ * theta;
  }

  std::optional<Matrix> Hessian(const Vector& theta) const override {
    if (dim() > kMaxExactHessianDim) return std::nullopt;
    const auto d = static_cast<Eigen::Index>(dim());
    Matrix h = Matrix::Zero(d, d);
    for (Eigen::Index r = 0; r < train_.x.rows(); ++r) {
      const double s = Sigmoid(train_.x.row(r).dot(theta));
      h.noalias() += (s * (1.0 - s)) * train_.x.row(r).transpose() * train_.x.row(r);
    }
    h /= static_cast<double>(train_.x.rows());
    h.diagonal().array() += reg_;
    return h;
  }

  double Accuracy(const Dataset& data, const Vector& theta) const {
    if (data.x.rows() == 0) return 0.0;
    const Vector margins = data.x * theta;
    Eigen::Index correct = 0;
    for (Eigen::Index r = 0; r < data.x.rows(); ++r)
      if (margins[r] * data.y[r] > 0.0) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.x.rows());
  }

  double TrainAccuracy(const Vector& theta) const { return Accuracy(train_, theta); }
  double TestMetric(const Vector& theta) const override {
    return Accuracy(test_, theta);
  }
  std::string test_metric_name() const override { return "test_accuracy"; }

  const Vector& initial_theta() const override { return init_; }
  const Dataset& train() const { return train_; }
  const Dataset& test() const { return test_; }
  double reg() const { return reg_; }

  static double Sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }
  static double Softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

 private:
  Dataset train_;
  Dataset test_;
  double reg_;
  Vector init_;
};

// ---------------------------------------------------------------------------
// Client partitions

enum class PartitionMode { kIid, kLabelSkew };

// Disjoint, covering assignment of sample indices to clients.
struct Partition {
  std::vector<IndexList> clients;
  PartitionMode mode = PartitionMode::kIid;
  double skew_concentration = 0.0;

  std::size_t num_clients() const { return clients.size(); }

  std::size_t num_samples() const {
    std::size_t n = 0;
    for (const auto& c : clients) n += c.size();
    return n;
  }

  // Throws unless every index in [0, n) appears exactly once.
  void Validate(std::size_t n) const {
    std::vector<char> seen(n, 0);
    for (const auto& c : clients) {
      for (std::size_t i : c) {
        internal::Require(i < n, "Partition: sample index out of range");
        internal::Require(!seen[i], "Partition: sample assigned twice");
        seen[i] = 1;
      }
    }
    internal::Require(std::all_of(seen.begin(), seen.end(), [](char s) { return s; }),
                      "Partition: some samples are unassigned");
  }
};

namespace internal {

inline void Shuffle(IndexList& v, RandomStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.NextBelow(i);
    std::swap(v[i - 1], v[j]);
  }
}

// Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1.
inline double SampleGamma(double shape, RandomStream& rng) {
  if (shape < 1.0) {
    const double u = rng.NextUniform();
    return SampleGamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.NextNormal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.NextUniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

inline std::vector<std::size_t> ShardSizes(std::size_t n, std::size_t clients) {
  std::vector<std::size_t> sizes(clients, n / clients);
  for (std::size_t c = 0; c < n % clients; ++c) ++sizes[c];
  return sizes;
}

}  // namespace internal

// Equal shards (sizes differ by at most one) of a random permutation.
inline Partition PartitionIid(std::size_t n, std::size_t clients,
                              std::uint64_t seed) {
  internal::Require(clients >= 1 && n >= clients,
                    "partition: need 1 <= clients <= samples");
  IndexList perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RandomStream rng(rng::DeriveKey(seed, "partition-iid"));
  internal::Shuffle(perm, rng);
  Partition p;
  p.mode = PartitionMode::kIid;
  std::size_t pos = 0;
  for (std::size_t size : internal::ShardSizes(n, clients)) {
    p.clients.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                           perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return p;
}

// Binary label skew with equal shard sizes: each client's share of positive
// labels is drawn from Beta(concentration, concentration) (the two-class
// Dirichlet), then rebalanced to the available label counts. Small
// concentration means strong skew.
inline Partition PartitionLabelSkew(const Vector& labels, std::size_t clients,
                                    double concentration, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(labels.size());
  internal::Require(clients >= 1 && n >= clients,
                    "partition: need 1 <= clients <= samples");
  internal::Require(concentration > 0.0, "partition: concentration must be > 0");
  RandomStream rng(rng::DeriveKey(seed, "partition-label-skew"));
  IndexList pos_idx, neg_idx;
  for (std::size_t i = 0; i < n; ++i)
    (labels[static_cast<Eigen::Index>(i)] > 0 ? pos_idx : neg_idx).push_back(i);
  internal::Shuffle(pos_idx, rng);
  internal::Shuffle(neg_idx, rng);

  const auto sizes = internal::ShardSizes(n, clients);
  std::vector<std::size_t> want(clients);
  std::size_t total = 0;
  for (std::size_t c = 0; c < clients; ++c) {
    const double a = internal::SampleGamma(concentration, rng);
    const double b = internal::SampleGamma(concentration, rng);
    const double share = (a + b) > 0.0 ? a / (a + b) : 0.5;
    want[c] = std::min(sizes[c], static_cast<std::size_t>(
                                     std::llround(share * static_cast<double>(sizes[c]))));
    total += want[c];
  }
  // Rebalance so that exactly pos_idx.size() positives are handed out.
  for (std::size_t c = 0; total > pos_idx.size(); c = (c + 1) % clients) {
    if (want[c] > 0) { --want[c]; --total; }
  }
  for (std::size_t c = 0; total < pos_idx.size(); c = (c + 1) % clients) {
    if (want[c] < sizes[c]) { ++want[c]; ++total; }
  }
  Partition p;
  p.mode = PartitionMode::kLabelSkew;
  p.skew_concentration = concentration;
  std::size_t pi = 0, ni = 0;
  for (std::size_t c = 0; c < clients; ++c) {
    IndexList shard;
    for (std::size_t k = 0; k < want[c]; ++k) shard.push_back(pos_idx[pi++]);
    for (std::size_t k = want[c]; k < sizes[c]; ++k) shard.push_back(neg_idx[ni++]);
    std::sort(shard.begin(), shard.end());
    p.clients.push_back(std::move(shard));
  }
  return p;
}

struct LogRegOptions {
  std::size_t test_samples = 1000;
  double label_noise = 0.02;  // probability of flipping a label
  double reg = 1e-4;
  PartitionMode partition = PartitionMode::kIid;
  double skew_concentration = 0.5;
};

namespace internal {

inline Dataset SampleLogRegData(std::size_t n, const Vector& w_star,
                                double label_noise, RandomStream& rng) {
  const Eigen::Index d = w_star.size();
  Dataset data{Matrix(static_cast<Eigen::Index>(n), d),
               Vector(static_cast<Eigen::Index>(n))};
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(n); ++r) {
    for (Eigen::Index j = 0; j < d; ++j) data.x(r, j) = rng.NextNormal();
    double label = data.x.row(r).dot(w_star) >= 0.0 ? 1.0 : -1.0;
    if (rng.NextUniform() < label_noise) label = -label;
    data.y[r] = label;
  }
  return data;
}

}  // namespace internal

// Synthetic binary classification: Gaussian features, labels from a random
// unit separator with a fraction of flipped labels.
inline std::pair<LogRegTask, Partition> MakeLogReg(std::size_t n, std::size_t d,
                                                   std::size_t clients,
                                                   std::uint64_t seed,
                                                   const LogRegOptions& opts = {}) {
  internal::Require(d >= 1, "make_logreg: d must be >= 1");
  internal::Require(clients >= 1 && n >= clients, "make_logreg: need n >= C >= 1");
  internal::Require(opts.label_noise >= 0.0 && opts.label_noise < 0.5,
                    "make_logreg: label_noise must lie in [0, 0.5)");
  RandomStream rng(rng::DeriveKey(seed, "logreg"));
  RandomStream w_rng = rng.Fork("separator");
  RandomStream train_rng = rng.Fork("train");
  RandomStream test_rng = rng.Fork("test");

  Vector w(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = w_rng.NextNormal();
  w /= w.norm();
  Dataset train = internal::SampleLogRegData(n, w, opts.label_noise, train_rng);
  Dataset test = internal::SampleLogRegData(opts.test_samples, w, opts.label_noise, test_rng);
  Partition p = opts.partition == PartitionMode::kIid
                    ? PartitionIid(n, clients, seed)
                    : PartitionLabelSkew(train.y, clients, opts.skew_concentration, seed);
  LogRegTask task(std::move(train), std::move(test), opts.reg,
                  Vector::Zero(static_cast<Eigen::Index>(d)));
  return {std::move(task), std::move(p)};
}

// ---------------------------------------------------------------------------
// Diagnostics

// Absolute intrinsic dimension sum_i |lambda_i| / max_i lambda_i of a
// symmetric matrix.
inline double IntrinsicDimension(const Matrix& hessian) {
  internal::Require(hessian.rows() == hessian.cols() && hessian.rows() >= 1,
                    "intrinsic_dimension: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian, Eigen::EigenvaluesOnly);
  internal::Require(eig.info() == Eigen::Success,
                    "intrinsic_dimension: eigendecomposition failed");
  const Vector& lambda = eig.eigenvalues();
  const double max_lambda = lambda.maxCoeff();
  if (!(max_lambda > 0.0)) {
    throw DomainError("intrinsic_dimension: largest eigenvalue is <= 0, ratio undefined");
  }
  return lambda.cwiseAbs().sum() / max_lambda;
}

inline double IntrinsicDimension(const Task& task, const Vector& theta) {
  const auto h = task.Hessian(theta);
  if (!h) {
    throw ResourceError("intrinsic_dimension: exact Hessian unavailable for d = " +
                        std::to_string(task.dim()) + " > " +
                        std::to_string(kMaxExactHessianDim));
  }
  return IntrinsicDimension(*h);
}

inline double IntrinsicDimension(const std::vector<double>& spectrum) {
  double max_lambda = -std::numeric_limits<double>::infinity();
  double abs_sum = 0.0;
  for (double l : spectrum) {
    max_lambda = std::max(max_lambda, l);
    abs_sum += std::abs(l);
  }
  if (!(max_lambda > 0.0)) {
    throw DomainError("intrinsic_dimension: largest eigenvalue is <= 0, ratio undefined");
  }
  return abs_sum / max_lambda;
}

struct GradientStats {
  double g_est = 0.0;        // max ||grad L_c(theta)|| over samples and clients
  double sigma_s_est = 0.0;  // sub-Gaussian scale of ||grad L_c - g_c||
  std::size_t deviations = 0;
};

// G from the largest full client gradient norm; sigma_s by matching the
// empirical 97.5th percentile q of minibatch deviations to the tail
// 2 exp(-q^2 / sigma_s^2) = 0.025. The sigma_s fit is a heuristic.
inline GradientStats EstimateGAndSigmaS(const Task& task, const Partition& partition,
                                        std::span<const Vector> theta_samples,
                                        std::size_t batch_size,
                                        std::size_t batches_per_point,
                                        std::uint64_t seed) {
  internal::Require(!theta_samples.empty(), "estimate_G: need >= 1 sample point");
  RandomStream rng(rng::DeriveKey(seed, "gradient-stats"));
  GradientStats out;
  std::vector<double> dev;
  for (const Vector& theta : theta_samples) {
    for (const IndexList& client : partition.clients) {
      if (client.empty()) continue;
      const Vector full = task.Grad(theta, client);
      out.g_est = std::max(out.g_est, full.norm());
      const std::size_t bs =
          (batch_size == 0 || batch_size >= client.size()) ? client.size() : batch_size;
      IndexList shuffled = client;
      for (std::size_t k = 0; k < batches_per_point; ++k) {
        if (bs == client.size()) {
          dev.push_back(0.0);
          continue;
        }
        internal::Shuffle(shuffled, rng);
        const Vector g = task.Grad(theta, std::span<const std::size_t>(shuffled.data(), bs));
        dev.push_back((full - g).norm());
      }
    }
  }
  out.deviations = dev.size();
  if (!dev.empty()) {
    std::sort(dev.begin(), dev.end());
    const auto k = static_cast<std::size_t>(
        std::ceil(0.975 * static_cast<double>(dev.size()))) - 1;
    const double q = dev[std::min(k, dev.size() - 1)];
    out.sigma_s_est = q / std::sqrt(std::log(2.0 / 0.025));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Snapshots. Plain whitespace-separated columns with a '#' header line.

inline void WritePartition(std::ostream& out, const Partition& p) {
  out << "# client sample\n";
  for (std::size_t c = 0; c < p.clients.size(); ++c)
    for (std::size_t i : p.clients[c]) out << c << ' ' << i << '\n';
}

inline Partition ReadPartition(std::istream& in, std::size_t clients) {
  Partition p;
  p.clients.resize(clients);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t c = 0, i = 0;
    if (!(ls >> c >> i) || c >= clients) {
      throw ConfigError("partition file: malformed line '" + line + "'");
    }
    p.clients[c].push_back(i);
  }
  return p;
}

inline void WriteDataset(std::ostream& out, const Dataset& data) {
  out.precision(17);
  out << "# label x0..x" << (data.x.cols() - 1) << '\n';
  for (Eigen::Index r = 0; r < data.x.rows(); ++r) {
    out << data.y[r];
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << ' ' << data.x(r, j);
    out << '\n';
  }
}

inline Dataset ReadDataset(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (row.size() < 2 || (!rows.empty() && row.size() != rows.front().size())) {
      throw ConfigError("dataset file: malformed line '" + line + "'");
    }
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = n == 0 ? 0 : static_cast<Eigen::Index>(rows.front().size() - 1);
  Dataset data{Matrix(n, d), Vector(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    data.y[r] = row[0];
    for (Eigen::Index j = 0; j < d; ++j) data.x(r, j) = row[static_cast<std::size_t>(j) + 1];
  }
  return data;
}

}  // namespace fedsgm

#endif  // FEDSGM_TASKS_HPP_
