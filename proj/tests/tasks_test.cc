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

#include "fedsgm/tasks.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

namespace fedsgm {
namespace {

// Central-difference directional derivative versus Grad, relative error.
void ExpectGradientMatchesFiniteDifferences(const Task& task, const Vector& theta,
                                            std::uint64_t seed) {
  RandomStream rng(seed);
  const auto& all = task.AllIndices();
  const Vector g = task.Grad(theta, all);
  for (int k = 0; k < 20; ++k) {
    Vector dir(theta.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.NextNormal();
    dir /= dir.norm();
    const double h = 1e-6;
    const double fd = (task.Loss(theta + h * dir, all) - task.Loss(theta - h * dir, all)) / (2 * h);
    const double an = g.dot(dir);
    EXPECT_LE(std::abs(fd - an), 1e-5 * std::max(1.0, std::abs(an))) << "direction " << k;
  }
}

TEST(QuadraticTest, IdentitySpectrumHasIntrinsicDimensionD) {
  const auto task = MakeQuadratic(std::vector<double>(10, 1.0), 1);
  EXPECT_NEAR(IntrinsicDimension(task, task.initial_theta()), 10.0, 1e-10);
}

TEST(QuadraticTest, IndefiniteSpectrumExample) {
  std::vector<double> spec(8, 0.0);
  spec[0] = 4.0;
  spec[1] = 1.0;
  spec[2] = -1.0;
  const auto task = MakeQuadratic(spec, 2);
  EXPECT_NEAR(IntrinsicDimension(task, task.initial_theta()), 1.5, 1e-10);
  EXPECT_FALSE(task.MinimumValue().has_value());
}

TEST(QuadraticTest, PowerLawIntrinsicDimension) {
  const auto task = MakeQuadratic(PowerLawSpectrum(100, 2.0), 3);
  EXPECT_NEAR(IntrinsicDimension(task, task.initial_theta()), 1.6349839001848923, 1e-9);
  EXPECT_NEAR(IntrinsicDimension(PowerLawSpectrum(100, 2.0)), 1.6349839001848923, 1e-14);
}

TEST(QuadraticTest, HessianEigenvaluesMatchSpectrum) {
  std::vector<double> spec = PowerLawSpectrum(40, 1.0);
  spec[7] = -0.3;
  const auto task = MakeQuadratic(spec, 4);
  const Matrix h = *task.Hessian(task.initial_theta());
  EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  std::vector<double> sorted = spec;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    EXPECT_NEAR(eig.eigenvalues()[static_cast<Eigen::Index>(i)], sorted[i], 1e-8);
  }
}

TEST(QuadraticTest, MinimumAtOptimum) {
  const auto task = MakeQuadratic(PowerLawSpectrum(20, 1.0), 5);
  ASSERT_TRUE(task.MinimumValue().has_value());
  EXPECT_EQ(*task.MinimumValue(), 0.0);
  EXPECT_NEAR(task.FullLoss(task.optimum()), 0.0, 1e-15);
  EXPECT_NEAR(task.FullGrad(task.optimum()).norm(), 0.0, 1e-14);
  EXPECT_GT(task.FullLoss(task.initial_theta()), 0.0);
}

TEST(QuadraticTest, AllZeroSpectrumIsConfigError) {
  EXPECT_THROW(MakeQuadratic(std::vector<double>(5, 0.0), 1), ConfigError);
  EXPECT_THROW(MakeQuadratic({-1.0, -2.0}, 1), ConfigError);
}

TEST(QuadraticTest, GradientMatchesFiniteDifferences) {
  QuadraticOptions opts;
  opts.num_samples = 16;
  opts.sample_noise = 0.5;
  const auto task = MakeQuadratic(PowerLawSpectrum(30, 1.0), 6, opts);
  ExpectGradientMatchesFiniteDifferences(task, task.initial_theta(), 11);
  // Per-sample shifts average out over the full sample set.
  EXPECT_NEAR(task.FullGrad(task.optimum()).norm(), 0.0, 1e-12);
}

TEST(QuadraticTest, SameSeedSameTask) {
  const auto a = MakeQuadratic(PowerLawSpectrum(10, 1.0), 7);
  const auto b = MakeQuadratic(PowerLawSpectrum(10, 1.0), 7);
  const auto c = MakeQuadratic(PowerLawSpectrum(10, 1.0), 8);
  EXPECT_EQ(a.hessian(), b.hessian());
  EXPECT_EQ(a.initial_theta(), b.initial_theta());
  EXPECT_NE(a.hessian(), c.hessian());
}

TEST(IntrinsicDimensionTest, InvariantUnderOrthogonalConjugation) {
  Matrix h = Matrix::Zero(6, 6);
  const double diag[] = {3.0, 1.0, -0.5, 0.25, 0.0, 2.0};
  for (int i = 0; i < 6; ++i) h(i, i) = diag[i];
  RandomStream rng(12);
  const Matrix q = RandomOrthogonal(6, rng);
  const double a = IntrinsicDimension(h);
  const double b = IntrinsicDimension(Matrix(q * h * q.transpose()));
  EXPECT_NEAR(b, a, 1e-8 * a);
  EXPECT_NEAR(a, 6.75 / 3.0, 1e-15);
}

TEST(IntrinsicDimensionTest, RangeWhenTopEigenvalueDominates) {
  RandomStream rng(13);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> spec(12);
    for (auto& l : spec) l = rng.NextUniform();
    const double id = IntrinsicDimension(spec);
    EXPECT_GE(id, 1.0);
    EXPECT_LE(id, 12.0);
  }
}

TEST(IntrinsicDimensionTest, Errors) {
  EXPECT_THROW(IntrinsicDimension(Matrix(Matrix::Identity(3, 3) * -1.0)), DomainError);
  EXPECT_THROW(IntrinsicDimension(std::vector<double>{0.0, -1.0}), DomainError);
  auto [task, part] = MakeLogReg(20, kMaxExactHessianDim + 1, 1, 1);
  EXPECT_THROW(IntrinsicDimension(task, task.initial_theta()), ResourceError);
}

TEST(LogRegTest, SingleClientHoldsEverything) {
  auto [task, part] = MakeLogReg(100, 5, 1, 21);
  ASSERT_EQ(part.num_clients(), 1u);
  EXPECT_EQ(part.clients[0].size(), 100u);
  part.Validate(100);
}

TEST(LogRegTest, ClientGradientsAverageToGlobal) {
  auto [task, part] = MakeLogReg(400, 8, 8, 22);
  RandomStream rng(1);
  Vector theta(8);
  for (int i = 0; i < 8; ++i) theta[i] = rng.NextNormal();
  Vector mean = Vector::Zero(8);
  double loss = 0.0;
  for (const auto& c : part.clients) {
    mean += task.Grad(theta, c);
    loss += task.Loss(theta, c);
  }
  mean /= 8.0;
  loss /= 8.0;
  EXPECT_NEAR((mean - task.FullGrad(theta)).norm(), 0.0, 1e-13);
  EXPECT_NEAR(loss, task.FullLoss(theta), 1e-13);
}

TEST(LogRegTest, GradientAndHessianConsistency) {
  auto [task, part] = MakeLogReg(200, 6, 4, 23);
  RandomStream rng(2);
  Vector theta(6);
  for (int i = 0; i < 6; ++i) theta[i] = rng.NextNormal();
  ExpectGradientMatchesFiniteDifferences(task, theta, 24);
  const Matrix h = *task.Hessian(theta);
  EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  // Hessian column j against finite differences of the gradient.
  for (int j = 0; j < 6; ++j) {
    Vector e = Vector::Zero(6);
    e[j] = 1e-6;
    const Vector fd = (task.FullGrad(theta + e) - task.FullGrad(theta - e)) / 2e-6;
    EXPECT_LE((fd - h.col(j)).norm(), 1e-5 * std::max(1.0, h.col(j).norm()));
  }
}

TEST(LogRegTest, FullBatchGdReachesHighAccuracy) {
  auto [task, part] = MakeLogReg(1000, 10, 4, 25);
  Vector theta = task.initial_theta();
  for (int t = 0; t < 500; ++t) theta -= 0.5 * task.FullGrad(theta);
  EXPECT_GE(task.TrainAccuracy(theta), 0.95);
  EXPECT_GE(task.TestMetric(theta), 0.9);
}

TEST(PartitionTest, IidIsDisjointCoveringAndBalanced) {
  const Partition p = PartitionIid(103, 10, 5);
  p.Validate(103);
  for (const auto& c : p.clients) {
    EXPECT_GE(c.size(), 10u);
    EXPECT_LE(c.size(), 11u);
  }
}

TEST(PartitionTest, LabelSkewIsDisjointCoveringAndSkewed) {
  auto [task, part] = MakeLogReg(1000, 5, 10, 26,
                                 {1000, 0.02, 1e-4, PartitionMode::kLabelSkew, 0.1});
  part.Validate(1000);
  EXPECT_EQ(part.mode, PartitionMode::kLabelSkew);
  double max_dev = 0.0;
  double global = 0.0;
  for (Eigen::Index i = 0; i < task.train().y.size(); ++i) global += task.train().y[i] > 0;
  global /= 1000.0;
  for (const auto& c : part.clients) {
    EXPECT_EQ(c.size(), 100u);
    double pos = 0.0;
    for (std::size_t i : c) pos += task.train().y[static_cast<Eigen::Index>(i)] > 0;
    max_dev = std::max(max_dev, std::abs(pos / c.size() - global));
  }
  EXPECT_GT(max_dev, 0.2);
}

TEST(PartitionTest, EqualShardsPreserveGlobalLoss) {
  for (auto mode : {PartitionMode::kIid, PartitionMode::kLabelSkew}) {
    auto [task, part] = MakeLogReg(600, 4, 6, 27, {100, 0.02, 1e-4, mode, 0.3});
    const Vector theta = Vector::Constant(4, 0.3);
    double weighted = 0.0;
    for (const auto& c : part.clients) weighted += c.size() / 600.0 * task.Loss(theta, c);
    EXPECT_NEAR(weighted, task.FullLoss(theta), 1e-13);
  }
}

TEST(PartitionTest, ValidateRejectsOverlapAndGaps) {
  Partition p;
  p.clients = {{0, 1}, {1, 2}};
  EXPECT_THROW(p.Validate(3), ContractError);
  p.clients = {{0}, {2}};
  EXPECT_THROW(p.Validate(3), ContractError);
}

TEST(GradientStatsTest, ZeroLossGivesZeros) {
  QuadraticOptions opts;
  opts.num_samples = 8;
  const auto task = MakeQuadratic(std::vector<double>(5, 1.0), 31, opts);
  const Partition part = PartitionIid(8, 2, 1);
  const std::vector<Vector> points{task.optimum()};
  const auto s = EstimateGAndSigmaS(task, part, points, 2, 10, 1);
  EXPECT_EQ(s.g_est, 0.0);
  EXPECT_EQ(s.sigma_s_est, 0.0);
}

TEST(GradientStatsTest, FullBatchHasNoSamplingNoise) {
  auto [task, part] = MakeLogReg(200, 5, 4, 32);
  const std::vector<Vector> points{task.initial_theta(), Vector::Constant(5, 0.5)};
  const auto s = EstimateGAndSigmaS(task, part, points, 0, 5, 2);
  EXPECT_GT(s.g_est, 0.0);
  EXPECT_EQ(s.sigma_s_est, 0.0);
  const auto s2 = EstimateGAndSigmaS(task, part, points, 5, 20, 2);
  EXPECT_GT(s2.sigma_s_est, 0.0);
  EXPECT_EQ(s2.g_est, s.g_est);
}

TEST(GradientStatsTest, QuadraticGradientBound) {
  QuadraticOptions opts;
  opts.num_samples = 4;
  const auto task = MakeQuadratic(PowerLawSpectrum(10, 1.0), 33, opts);
  const Partition part = PartitionIid(4, 1, 1);
  RandomStream rng(3);
  std::vector<Vector> points;
  double max_dist = 0.0;
  for (int k = 0; k < 30; ++k) {
    Vector theta = task.optimum();
    for (int i = 0; i < 10; ++i) theta[i] += 2.0 * rng.NextUniform() - 1.0;
    max_dist = std::max(max_dist, (theta - task.optimum()).norm());
    points.push_back(theta);
  }
  const auto s = EstimateGAndSigmaS(task, part, points, 0, 1, 3);
  EXPECT_LE(s.g_est, 1.0 * max_dist * (1 + 1e-12));
}

TEST(SnapshotTest, PartitionRoundTrip) {
  const Partition p = PartitionIid(37, 5, 9);
  std::stringstream ss;
  WritePartition(ss, p);
  const Partition q = ReadPartition(ss, 5);
  EXPECT_EQ(p.clients, q.clients);
}

TEST(SnapshotTest, DatasetRoundTripIsExact) {
  auto [task, part] = MakeLogReg(30, 3, 1, 41);
  std::stringstream ss;
  WriteDataset(ss, task.train());
  const Dataset d = ReadDataset(ss);
  EXPECT_EQ(d.x, task.train().x);
  EXPECT_EQ(d.y, task.train().y);
}

TEST(SnapshotTest, MalformedPartitionLine) {
  std::stringstream ss("0 1\nbogus\n");
  EXPECT_THROW(ReadPartition(ss, 2), ConfigError);
}

}  // namespace
}  // namespace fedsgm
