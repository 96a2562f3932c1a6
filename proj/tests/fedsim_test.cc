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

#include "fedsgm/fedsim.hpp"

#include <cmath>
#include <type_traits>

#include <gtest/gtest.h>

namespace fedsgm {
namespace {

static_assert(!std::is_constructible_v<PrivatizedUpdate, std::size_t, Vector, bool>,
              "server-side messages must come from ClientPrivatize");

QuadraticTask DiagQuadratic(std::initializer_list<double> diag, const Vector& init,
                            std::size_t samples = 1) {
  const auto d = static_cast<Eigen::Index>(diag.size());
  Matrix h = Matrix::Zero(d, d);
  Eigen::Index i = 0;
  for (double v : diag) { h(i, i) = v; ++i; }
  return QuadraticTask(h, Vector::Zero(d), Matrix::Zero(d, static_cast<Eigen::Index>(samples)),
                       init);
}

Partition WholeRange(std::size_t n, std::size_t clients) {
  Partition p;
  p.clients.resize(clients);
  for (std::size_t i = 0; i < n; ++i) p.clients[i * clients / n].push_back(i);
  return p;
}

FedConfig Plain(std::size_t C, std::size_t N, std::int64_t T) {
  FedConfig cfg;
  cfg.C = C;
  cfg.N = N;
  cfg.T = T;
  cfg.mechanism.tau = kInfinity;
  cfg.mechanism.sigma_g = 0.0;
  return cfg;
}

TEST(ClientLocalUpdateTest, OneFullBatchStepIsScaledGradient) {
  auto [task, part] = MakeLogReg(60, 4, 3, 1);
  const Vector theta = Vector::Constant(4, 0.2);
  const Vector delta = ClientLocalUpdate(theta, task, part.clients[1], 1, 0.3, 0, RandomStream(1));
  const Vector expected = 0.3 * task.Grad(theta, part.clients[1]);
  EXPECT_NEAR((delta - expected).norm(), 0.0, 1e-15);
}

TEST(ClientLocalUpdateTest, ZeroLearningRateGivesZero) {
  auto [task, part] = MakeLogReg(60, 4, 3, 1);
  const Vector delta =
      ClientLocalUpdate(Vector::Ones(4), task, part.clients[0], 5, 0.0, 4, RandomStream(1));
  EXPECT_EQ(delta, Vector::Zero(4));
}

TEST(ClientLocalUpdateTest, TwoStepQuadraticTrace) {
  Vector init(2);
  init << 1.0, 1.0;
  const auto task = DiagQuadratic({1.0, 2.0}, init);
  const Vector delta = ClientLocalUpdate(init, task, {0}, 2, 0.1, 0, RandomStream(1));
  EXPECT_NEAR(delta[0], 0.19, 1e-15);
  EXPECT_NEAR(delta[1], 0.36, 1e-15);
}

TEST(ClientLocalUpdateTest, EmptyClientIsConfigError) {
  auto [task, part] = MakeLogReg(10, 2, 1, 1);
  EXPECT_THROW(ClientLocalUpdate(Vector::Zero(2), task, {}, 1, 0.1, 0, RandomStream(1)),
               ConfigError);
}

TEST(ClientLocalUpdateTest, MinibatchesCoverClientWithoutReplacement) {
  // With batch 1 and K = n the client sees each sample once: on a task whose
  // gradient at theta is the per-sample shift, Delta sums all shifts.
  QuadraticOptions opts;
  opts.num_samples = 5;
  opts.sample_noise = 1.0;
  const auto task = MakeQuadratic({1e-300}, 3, opts);
  const IndexList all = task.AllIndices();
  const Vector delta =
      ClientLocalUpdate(task.optimum(), task, all, 5, 1.0, 1, RandomStream(7));
  EXPECT_NEAR(delta[0], 0.0, 1e-12);  // centred shifts sum to zero
}

TEST(ClientPrivatizeTest, IdentityNoNoiseReturnsDeltaExactly) {
  Vector delta(3);
  delta << 0.01, -0.02, 0.005;
  MechanismConfig mech{1.0, 0.0, 3, 0};
  RandomStream rng(1);
  const auto u = ClientPrivatize(4, delta, 0.1, mech, Compressor::Identity(3), rng);
  EXPECT_EQ(u.payload(), delta);
  EXPECT_FALSE(u.clip_activated());
  EXPECT_EQ(u.client_id(), 4u);
}

TEST(ClientPrivatizeTest, SaturatedClipHasNormEtaTau) {
  Vector delta(2);
  delta << 0.6, 0.8;  // ||delta / eta|| = 2 tau with eta = 0.5, tau = 1
  MechanismConfig mech{1.0, 0.0, 2, 0};
  RandomStream rng(1);
  const auto u = ClientPrivatize(0, delta, 0.5, mech, Compressor::Identity(2), rng);
  EXPECT_NEAR(u.payload().norm(), 0.5, 1e-15);
  EXPECT_TRUE(u.clip_activated());
}

TEST(ClientPrivatizeTest, ClipFlagThreshold) {
  MechanismConfig mech{2.0, 0.0, 1, 0};
  RandomStream rng(1);
  Vector at(1), above(1);
  at << 0.2;
  above << 0.2000001;
  EXPECT_FALSE(ClientPrivatize(0, at, 0.1, mech, Compressor::Identity(1), rng).clip_activated());
  EXPECT_TRUE(ClientPrivatize(0, above, 0.1, mech, Compressor::Identity(1), rng).clip_activated());
}

TEST(ClientPrivatizeTest, NoiseIsScaledByLearningRate) {
  MechanismConfig mech{1.0, 2.0, 4, 9};
  RandomStream a = NoiseStream(9, 1, 0), b = NoiseStream(9, 1, 0);
  const auto u = ClientPrivatize(1, Vector::Zero(4), 0.25, mech, Compressor::Identity(4), a);
  const Vector z = GaussianNoise(4, 2.0, b);
  EXPECT_NEAR((u.payload() - 0.25 * z).norm(), 0.0, 1e-15);
}

TEST(ServerRoundTest, ZeroUpdatesLeaveThetaUnchanged) {
  MechanismConfig mech{1.0, 0.0, 3, 0};
  RandomStream rng(1);
  std::vector<PrivatizedUpdate> ups;
  for (std::size_t c = 0; c < 3; ++c)
    ups.push_back(ClientPrivatize(c, Vector::Zero(3), 0.1, mech, Compressor::Identity(3), rng));
  GlobalOptimizer gd(OptimizerKind::kGd, 3, 1.0);
  const Vector theta = Vector::Constant(3, 0.7);
  EXPECT_EQ(ServerRound(theta, ups, 3, Compressor::Identity(3), gd), theta);
}

TEST(ServerRoundTest, SingleUpdateIsPassedThrough) {
  MechanismConfig mech{kInfinity, 0.0, 3, 0};
  RandomStream rng(1);
  Vector delta(3);
  delta << 0.5, -0.25, 0.125;
  std::vector<PrivatizedUpdate> ups{
      ClientPrivatize(2, delta, 1.0, mech, Compressor::Identity(3), rng)};
  GlobalOptimizer gd(OptimizerKind::kGd, 3, 1.0);
  EXPECT_EQ(ServerRound(Vector::Zero(3), ups, 1, Compressor::Identity(3), gd), -delta);
}

TEST(ServerRoundTest, PermutationInvariantBitwise) {
  const Compressor r = Compressor::Gaussian({77, 16, 40});
  MechanismConfig mech{1.0, 0.3, 16, 5};
  std::vector<PrivatizedUpdate> ups;
  RandomStream data(3);
  for (std::size_t c = 0; c < 7; ++c) {
    Vector delta(40);
    for (auto& x : delta) x = data.NextNormal() * 0.1;
    RandomStream noise = NoiseStream(5, c, 0);
    ups.push_back(ClientPrivatize(c, delta, 0.1, mech, r, noise));
  }
  GlobalOptimizer a(OptimizerKind::kAmsGrad, 40, 0.1);
  const Vector ta = ServerRound(Vector::Zero(40), ups, 7, r, a);
  std::reverse(ups.begin(), ups.end());
  std::swap(ups[1], ups[4]);
  GlobalOptimizer b(OptimizerKind::kAmsGrad, 40, 0.1);
  const Vector tb = ServerRound(Vector::Zero(40), ups, 7, r, b);
  EXPECT_EQ(ta, tb);
}

TEST(ServerRoundTest, WrongCountIsContractError) {
  MechanismConfig mech{1.0, 0.0, 2, 0};
  RandomStream rng(1);
  std::vector<PrivatizedUpdate> ups{
      ClientPrivatize(0, Vector::Zero(2), 0.1, mech, Compressor::Identity(2), rng)};
  GlobalOptimizer gd(OptimizerKind::kGd, 2, 1.0);
  EXPECT_THROW(ServerRound(Vector::Zero(2), ups, 2, Compressor::Identity(2), gd), ContractError);
}

TEST(ClientSamplerTest, FullParticipation) {
  const auto ids = ClientSampler(6, 6, 3, 1);
  EXPECT_EQ(ids, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(ClientSamplerTest, UniformSelectionFrequency) {
  const std::size_t C = 10, N = 3;
  const int rounds = 100000;
  std::vector<int> hits(C, 0);
  for (int t = 0; t < rounds; ++t) {
    const auto ids = ClientSampler(C, N, static_cast<std::uint64_t>(t), 2024);
    ASSERT_EQ(ids.size(), N);
    ASSERT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    ASSERT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
    for (auto c : ids) ++hits[c];
  }
  const double p = double(N) / C;
  const double se = std::sqrt(p * (1 - p) / rounds);
  for (std::size_t c = 0; c < C; ++c) {
    EXPECT_NEAR(hits[c] / double(rounds), p, 3 * se) << "client " << c;
  }
}

TEST(ClientSamplerTest, DeterministicAndSeedSensitive) {
  EXPECT_EQ(ClientSampler(100, 10, 5, 1), ClientSampler(100, 10, 5, 1));
  EXPECT_NE(ClientSampler(100, 10, 5, 1), ClientSampler(100, 10, 5, 2));
  EXPECT_NE(ClientSampler(100, 10, 5, 1), ClientSampler(100, 10, 6, 1));
}

TEST(RunFederationTest, MatchesPlainFedAvgOracle) {
  auto [task, part] = MakeLogReg(200, 6, 4, 11);
  FedConfig cfg = Plain(4, 4, 30);
  cfg.eta_local = 0.4;
  cfg.eta_global = 0.8;
  const RunResult run = RunFederation(cfg, task, part);

  // Independent oracle: theta <- theta - eta_g * mean_c eta_l grad L_c(theta).
  Vector theta = task.initial_theta();
  for (int t = 0; t < 30; ++t) {
    Vector avg = Vector::Zero(6);
    for (const auto& c : part.clients) avg += 0.4 * task.Grad(theta, c);
    theta -= 0.8 * (avg / 4.0);
    const double rel = (run.records[t].train_loss - task.FullLoss(theta)) / task.FullLoss(theta);
    EXPECT_LE(std::abs(rel), 1e-12);
  }
  EXPECT_LE((run.final_theta - theta).norm(), 1e-12 * theta.norm());
  EXPECT_EQ(run.records.size(), 30u);
  EXPECT_TRUE(std::isinf(run.records.back().epsilon_spent));
  EXPECT_FALSE(run.warnings.empty());
}

TEST(RunFederationTest, SketchedNoiselessConvergesOnStronglyConvexQuadratic) {
  std::vector<double> spec(20);
  for (std::size_t i = 0; i < 20; ++i) spec[i] = 0.2 + 0.8 * i / 19.0;
  QuadraticOptions opts;
  opts.num_samples = 8;
  const auto task = MakeQuadratic(spec, 12, opts);
  const Partition part = PartitionIid(8, 4, 1);
  FedConfig cfg = Plain(4, 2, 200);
  cfg.sketch_b = 10;
  cfg.mechanism.tau = 1e6;
  cfg.eta_local = 0.3;
  const RunResult run = RunFederation(cfg, task, part);
  EXPECT_LE(run.records.back().grad_norm_sq, 1e-3 * run.initial.grad_norm_sq);
}

TEST(RunFederationTest, DeterministicAcrossRunsAndThreadCounts) {
  auto [task, part] = MakeLogReg(300, 10, 6, 13);
  FedConfig cfg = Plain(6, 3, 15);
  cfg.sketch_b = 5;
  cfg.K = 3;
  cfg.batch_size = 8;
  cfg.mechanism = {0.5, 0.4, 5, 99};
  cfg.optimizer = OptimizerKind::kAmsGrad;
  cfg.eta_global = 0.05;
  cfg.master_seed = 42;
  const RunResult a = RunFederation(cfg, task, part);
  const RunResult b = RunFederation(cfg, task, part);
  cfg.threads = 4;
  const RunResult c = RunFederation(cfg, task, part);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    EXPECT_EQ(a.records[t].train_loss, b.records[t].train_loss);
    EXPECT_EQ(a.records[t].selected_clients, b.records[t].selected_clients);
    EXPECT_EQ(a.records[t].train_loss, c.records[t].train_loss);
  }
  EXPECT_EQ(a.final_theta, c.final_theta);
  cfg.master_seed = 43;
  EXPECT_NE(RunFederation(cfg, task, part).final_theta, a.final_theta);
}

TEST(RunFederationTest, EpsilonLedgerMatchesAccountant) {
  auto [task, part] = MakeLogReg(200, 40, 10, 14);
  FedConfig cfg = Plain(10, 2, 25);
  cfg.sketch_b = 20;
  cfg.mechanism = {0.5, 0.5, 20, 3};
  const RunResult run = RunFederation(cfg, task, part);
  double prev = 0.0;
  for (const auto& r : run.records) {
    EXPECT_GE(r.epsilon_spent, prev);
    prev = r.epsilon_spent;
  }
  const auto ref = SgmEpsilon({0.2, 25, 0.5, 20, 0.5}, cfg.delta);
  EXPECT_EQ(run.records.back().epsilon_spent, ref.epsilon);
  EXPECT_TRUE(run.warnings.empty());
}

TEST(RunFederationTest, RegimeViolationWarnsAndContinues) {
  auto [task, part] = MakeLogReg(100, 10, 4, 15);
  FedConfig cfg = Plain(4, 2, 3);
  cfg.sketch_b = 2;
  cfg.mechanism = {5.0, 0.1, 2, 1};
  const RunResult run = RunFederation(cfg, task, part);
  EXPECT_EQ(run.records.size(), 3u);
  EXPECT_TRUE(std::isinf(run.records.back().epsilon_spent));
  ASSERT_EQ(run.warnings.size(), 1u);
  EXPECT_NE(run.warnings[0].find("regime"), std::string::npos);
}

TEST(RunFederationTest, ClipActivationRegimes) {
  QuadraticOptions opts;
  opts.num_samples = 4;
  const auto task = MakeQuadratic(PowerLawSpectrum(8, 1.0), 16, opts);
  const Partition part = PartitionIid(4, 4, 1);
  FedConfig cfg = Plain(4, 4, 10);
  cfg.K = 3;
  cfg.eta_local = 0.2;

  cfg.mechanism.tau = 1e-12;
  for (const auto& r : RunFederation(cfg, task, part).records)
    EXPECT_EQ(r.clip_activation_rate, 1.0);

  const std::vector<Vector> at{task.initial_theta()};
  const double g = EstimateGAndSigmaS(task, part, at, 0, 1, 1).g_est;
  cfg.mechanism.tau = 3.0 * g;
  for (const auto& r : RunFederation(cfg, task, part).records)
    EXPECT_EQ(r.clip_activation_rate, 0.0);
}

TEST(RunFederationTest, InvalidConfigs) {
  auto [task, part] = MakeLogReg(40, 3, 4, 17);
  FedConfig cfg = Plain(4, 5, 1);
  EXPECT_THROW(RunFederation(cfg, task, part), ConfigError);
  cfg = Plain(5, 2, 1);
  EXPECT_THROW(RunFederation(cfg, task, part), ConfigError);
  cfg = Plain(4, 2, 0);
  EXPECT_THROW(RunFederation(cfg, task, part), ConfigError);
}

TEST(RunCentralTest, FullBatchNoiselessIsGradientDescent) {
  auto [task, part] = MakeLogReg(50, 5, 1, 18);
  CentralConfig cfg;
  cfg.m = 50;
  cfg.T = 20;
  cfg.eta = 0.7;
  cfg.mechanism = {kInfinity, 0.0, 5, 0};
  const RunResult run = RunCentralSgm(cfg, task);
  Vector theta = task.initial_theta();
  for (int t = 0; t < 20; ++t) theta -= 0.7 * task.FullGrad(theta);
  EXPECT_LE((run.final_theta - theta).norm(), 1e-12 * std::max(1.0, theta.norm()));
}

TEST(RunCentralTest, MinibatchNoiselessIsSgd) {
  auto [task, part] = MakeLogReg(50, 5, 1, 19);
  CentralConfig cfg;
  cfg.m = 7;
  cfg.T = 20;
  cfg.eta = 0.5;
  cfg.mechanism = {kInfinity, 0.0, 5, 0};
  const RunResult run = RunCentralSgm(cfg, task);
  Vector theta = task.initial_theta();
  for (const auto& rec : run.records) {
    ASSERT_EQ(rec.selected_clients.size(), 7u);
    Vector g = Vector::Zero(5);
    for (std::size_t i : rec.selected_clients) {
      const std::size_t one[1] = {i};
      g += task.Grad(theta, one);
    }
    theta -= 0.5 * (g / 7.0);
  }
  EXPECT_LE((run.final_theta - theta).norm(), 1e-12 * std::max(1.0, theta.norm()));
}

TEST(RunCentralTest, SingleExampleMatchesSingleClientFederation) {
  auto [task, part] = MakeLogReg(40, 30, 1, 20);
  CentralConfig c;
  c.m = 1;
  c.T = 10;
  c.eta = 0.3;
  c.sketch_b = 15;
  c.mechanism = {0.5, 0.4, 15, 8};
  c.master_seed = 5;
  FedConfig f = Plain(1, 1, 10);
  f.K = 1;
  f.batch_size = 1;
  f.eta_local = 0.3;
  f.eta_global = 1.0;
  f.sketch_b = 15;
  f.mechanism = c.mechanism;
  f.master_seed = 5;
  // Trajectories agree; the epsilon columns do not (q = m/n versus N/C = 1).
  const RunResult rc = RunCentralSgm(c, task);
  const RunResult rf = RunFederation(f, task, WholeRange(40, 1));
  for (std::size_t t = 0; t < 10; ++t) {
    EXPECT_NEAR(rc.records[t].train_loss, rf.records[t].train_loss,
                1e-12 * std::abs(rf.records[t].train_loss));
    EXPECT_EQ(rc.records[t].clip_activation_rate, rf.records[t].clip_activation_rate);
  }
  EXPECT_LE((rc.final_theta - rf.final_theta).norm(), 1e-12 * rf.final_theta.norm());
}

TEST(RunCentralTest, AggregateThenSketchEqualsSketchThenAggregate) {
  const SketchMatrix r = SampleSketch({3, 32, 100});
  RandomStream rng(4);
  std::vector<Vector> gs;
  Vector sum = Vector::Zero(100);
  for (int i = 0; i < 9; ++i) {
    Vector g(100);
    for (auto& x : g) x = rng.NextNormal();
    sum += g;
    gs.push_back(g);
  }
  Vector sketched_sum = Vector::Zero(32);
  for (const auto& g : gs) sketched_sum += r.Apply(g);
  const Vector a = r.Apply(sum / 9.0);
  const Vector b = sketched_sum / 9.0;
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
}

}  // namespace
}  // namespace fedsgm
