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

#ifndef FEDSGM_FEDSIM_HPP_
#define FEDSGM_FEDSIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fedsgm/accountant.hpp"
#include "fedsgm/errors.hpp"
#include "fedsgm/mechanism.hpp"
#include "fedsgm/optim.hpp"
#include "fedsgm/random.hpp"
#include "fedsgm/sketch.hpp"
#include "fedsgm/tasks.hpp"
#include "fedsgm/vector.hpp"

namespace fedsgm {

// Fed-SGM run configuration. sketch_b == 0 selects the identity compressor
// (unsketched FedAvg with the same clipping and noise path).
struct FedConfig {
  std::size_t C = 1;           // total clients
  std::size_t N = 1;           // clients per round
  std::size_t K = 1;           // local steps
  std::int64_t T = 1;          // rounds
  double eta_local = 0.1;
  double eta_global = 1.0;
  std::size_t batch_size = 0;  // 0 = full client batch
  MechanismConfig mechanism;   // mechanism.b mirrors sketch_b when sketching
  std::size_t sketch_b = 0;
  OptimizerKind optimizer = OptimizerKind::kGd;
  MomentConfig moments;
  std::uint64_t master_seed = 0;
  double delta = 1e-5;         // accountant target delta
  DeltaSplit delta_split;
  std::size_t threads = 1;     // client parallelism cap

  double q() const { return static_cast<double>(N) / static_cast<double>(C); }

  void Validate() const {
    internal::Require<ConfigError>(C >= 1, "federation: C must be >= 1");
    internal::Require<ConfigError>(N >= 1 && N <= C, "federation: need 1 <= N <= C");
    internal::Require<ConfigError>(K >= 1, "federation: K must be >= 1");
    internal::Require<ConfigError>(T >= 1, "federation: T must be >= 1");
    internal::Require<ConfigError>(eta_local > 0.0, "federation: eta_local must be > 0");
    internal::Require<ConfigError>(eta_global > 0.0, "optimizer: eta_global must be > 0");
    internal::Require<ConfigError>(delta > 0.0 && delta < 1.0,
                                   "accountant: delta must lie in (0, 1)");
    internal::Require<ConfigError>(mechanism.tau > 0.0, "mechanism: tau must be > 0");
    internal::Require<ConfigError>(mechanism.sigma_g >= 0.0 && std::isfinite(mechanism.sigma_g),
                                   "mechanism: sigma_g must be finite and >= 0");
    moments.Validate();
    delta_split.Validate();
  }
};

struct RoundRecord {
  std::int64_t round = 0;
  std::vector<std::size_t> selected_clients;
  double train_loss = 0.0;
  double grad_norm_sq = 0.0;  // ||grad L(theta_round)||^2
  double test_metric = 0.0;
  double clip_activation_rate = 0.0;
  double epsilon_spent = 0.0;
};

struct RunResult {
  RoundRecord initial;               // metrics at theta_0, round 0
  std::vector<RoundRecord> records;  // one per round, metrics after the update
  Vector final_theta;
  bool grad_norm_is_estimate = false;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Client side

namespace internal {

inline RandomStream LocalBatchStream(std::uint64_t master_seed, std::uint64_t client,
                                     std::uint64_t round) {
  return RandomStream(rng::DeriveKey(
      rng::DeriveKey(rng::DeriveKey(master_seed, "local-batches"), client), round));
}

// Without-replacement minibatches, reshuffled whenever the pass is exhausted.
class MinibatchCursor {
 public:
  MinibatchCursor(const IndexList& data, std::size_t batch_size, RandomStream rng)
      : order_(data), rng_(std::move(rng)) {
    batch_ = (batch_size == 0 || batch_size >= order_.size()) ? order_.size() : batch_size;
    full_ = batch_ == order_.size();
    if (!full_) Shuffle(order_, rng_);
  }

  std::span<const std::size_t> Next() {
    if (full_) return order_;
    if (pos_ + batch_ > order_.size()) {
      Shuffle(order_, rng_);
      pos_ = 0;
    }
    std::span<const std::size_t> out(order_.data() + pos_, batch_);
    pos_ += batch_;
    return out;
  }

 private:
  IndexList order_;
  RandomStream rng_;
  std::size_t batch_ = 0;
  std::size_t pos_ = 0;
  bool full_ = false;
};

}  // namespace internal

// K local SGD steps from theta; returns Delta = theta - theta_K.
inline Vector ClientLocalUpdate(const Vector& theta, const Task& task,
                                const IndexList& client_data, std::size_t K,
                                double eta_local, std::size_t batch_size,
                                RandomStream rng) {
  if (client_data.empty()) throw ConfigError("client has an empty dataset");
  internal::Require(K >= 1, "client_local_update: K must be >= 1");
  internal::MinibatchCursor cursor(client_data, batch_size, std::move(rng));
  Vector local = theta;
  for (std::size_t k = 0; k < K; ++k) {
    local -= eta_local * task.Grad(local, cursor.Next());
  }
  return theta - local;
}

// Sketched, noised client message. Only ClientPrivatize can create one, so
// server-side code never sees raw client updates.
class PrivatizedUpdate {
 public:
  std::size_t client_id() const { return client_id_; }
  const Vector& payload() const { return payload_; }
  bool clip_activated() const { return clipped_; }

 private:
  PrivatizedUpdate(std::size_t id, Vector payload, bool clipped)
      : client_id_(id), payload_(std::move(payload)), clipped_(clipped) {}

  friend PrivatizedUpdate ClientPrivatize(std::size_t, const Vector&, double,
                                          const MechanismConfig&, const Compressor&,
                                          RandomStream&);
  friend class CentralAggregator;

  std::size_t client_id_;
  Vector payload_;
  bool clipped_;
};

// eta_local * (R clip(Delta / eta_local, tau) + z), z ~ N(0, sigma_g^2 I_b).
// Evaluated as R(s * Delta) + eta_local z with s = min{1, tau / ||Delta / eta_local||},
// which is the same quantity and leaves an unclipped Delta bit-exact.
inline PrivatizedUpdate ClientPrivatize(std::size_t client_id, const Vector& delta,
                                        double eta_local, const MechanismConfig& mech,
                                        const Compressor& r, RandomStream& rng) {
  internal::Require(eta_local > 0.0, "client_privatize: eta_local must be > 0");
  internal::Require(mech.tau > 0.0, "client_privatize: tau must be > 0");
  const double norm = (delta / eta_local).norm();
  const bool clipped = norm > mech.tau;
  Vector payload = clipped ? r.Compress(delta * (mech.tau / norm)) : r.Compress(delta);
  if (mech.sigma_g > 0.0) {
    payload += eta_local * GaussianNoise(payload.size(), mech.sigma_g, rng);
  }
  return PrivatizedUpdate(client_id, std::move(payload), clipped);
}

// ---------------------------------------------------------------------------
// Server side

// Mean of the client payloads in ascending client-id order (independent of
// arrival order), desketched and handed to the global optimizer.
inline Vector ServerRound(const Vector& theta, std::span<const PrivatizedUpdate> updates,
                          std::size_t expected_count, const Compressor& r,
                          GlobalOptimizer& optimizer) {
  if (updates.size() != expected_count) {
    throw ContractError("server_round: expected " + std::to_string(expected_count) +
                        " updates, got " + std::to_string(updates.size()));
  }
  internal::Require(!updates.empty(), "server_round: no updates");
  std::vector<const PrivatizedUpdate*> ordered;
  ordered.reserve(updates.size());
  for (const auto& u : updates) {
    internal::RequireSize(u.payload(), static_cast<Eigen::Index>(r.output_dim()),
                          "server_round payload");
    ordered.push_back(&u);
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return a->client_id() < b->client_id();
  });
  Vector sum = ordered.front()->payload();
  for (std::size_t i = 1; i < ordered.size(); ++i) sum += ordered[i]->payload();
  const Vector mean = sum / static_cast<double>(ordered.size());
  return optimizer.Step(theta, r.Decompress(mean));
}

// Uniform size-N subset of [0, C) without replacement, sorted ascending;
// a pure function of (master_seed, round).
inline std::vector<std::size_t> ClientSampler(std::size_t C, std::size_t N,
                                              std::uint64_t round,
                                              std::uint64_t master_seed) {
  internal::Require(N >= 1 && N <= C, "client_sampler: need 1 <= N <= C");
  std::vector<std::size_t> ids(C);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (N < C) {
    RandomStream rng(
        rng::DeriveKey(rng::DeriveKey(master_seed, "client-sampler"), round));
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t j = i + rng.NextBelow(C - i);
      std::swap(ids[i], ids[j]);
    }
    ids.resize(N);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Metrics and accounting helpers

namespace internal {

// Full-data gradient when cheap; otherwise a fixed probe batch.
inline constexpr std::size_t kExactGradWork = 10'000'000;
inline constexpr std::size_t kProbeBatch = 1024;

struct MetricProbe {
  const Task& task;
  IndexList probe;
  bool estimate = false;

  explicit MetricProbe(const Task& t) : task(t) {
    estimate = t.dim() > 10'000 || t.dim() * t.num_samples() > kExactGradWork;
    if (estimate) {
      const std::size_t n = t.num_samples();
      const std::size_t m = std::min(n, kProbeBatch);
      for (std::size_t i = 0; i < m; ++i) probe.push_back(i * n / m);
    }
  }

  void Fill(const Vector& theta, RoundRecord& rec) const {
    if (estimate) {
      rec.train_loss = task.Loss(theta, probe);
      rec.grad_norm_sq = task.Grad(theta, probe).squaredNorm();
    } else {
      rec.train_loss = task.FullLoss(theta);
      rec.grad_norm_sq = task.FullGrad(theta).squaredNorm();
    }
    rec.test_metric = task.TestMetric(theta);
  }
};

// Epsilon after `rounds` releases; +inf when the run is not covered by the
// SGM accountant (no noise, no sketch, no clipping, or invalid regime).
inline double EpsilonAfter(double q, std::int64_t rounds, double tau, std::size_t b,
                           double sigma_g, double delta, const DeltaSplit& split,
                           bool sketched) {
  if (!sketched || sigma_g == 0.0 || !std::isfinite(tau)) return kInfinity;
  AccountantParams p{q, rounds, tau, b, sigma_g};
  if (!p.regime_ok()) return kInfinity;
  return SgmEpsilon(p, delta, split).epsilon;
}

inline std::vector<std::string> AccountantWarnings(double tau, std::size_t b,
                                                   double sigma_g, bool sketched) {
  std::vector<std::string> w;
  if (!sketched) {
    w.push_back("identity compressor: SGM accountant not applicable, epsilon reported as inf");
  } else if (sigma_g == 0.0) {
    w.push_back("sigma_g = 0: non-private run, epsilon reported as inf");
  } else if (!std::isfinite(tau)) {
    w.push_back("tau = inf: sensitivity unbounded, epsilon reported as inf");
  } else if (!(RegimeRatio(tau, b, sigma_g) < 1.0)) {
    w.push_back("accountant regime violated (2*tau^2/(b*sigma_g^2) >= 1): epsilon reported as inf");
  }
  return w;
}

inline std::size_t ResolveThreads(std::size_t requested) {
  std::size_t n = requested == 0 ? 1 : requested;
  if (const char* env = std::getenv("FED_SGM_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

// Runs f(i) for i in [0, count) on up to `threads` workers.
template <typename F>
void ParallelFor(std::size_t count, std::size_t threads, F&& f) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += threads) f(i);
    });
  }
}

}  // namespace internal

// Fed-SGM: per round, sample N clients, run K local steps each, clip and
// privatize with the round's shared sketch R_t, average, desketch and apply
// the global optimizer. Deterministic in cfg.master_seed and
// cfg.mechanism.noise_seed regardless of thread count.
inline RunResult RunFederation(const FedConfig& cfg, const Task& task,
                               const Partition& partition) {
  cfg.Validate();
  if (partition.num_clients() != cfg.C) {
    throw ConfigError("partition has " + std::to_string(partition.num_clients()) +
                      " clients, config expects C = " + std::to_string(cfg.C));
  }
  for (const auto& c : partition.clients)
    if (c.empty()) throw ConfigError("partition contains a client with no data");

  const auto d = static_cast<Eigen::Index>(task.dim());
  const bool sketched = cfg.sketch_b > 0;
  const std::size_t b = sketched ? cfg.sketch_b : task.dim();
  MechanismConfig mech = cfg.mechanism;
  mech.b = b;

  RunResult out;
  out.warnings = internal::AccountantWarnings(mech.tau, b, mech.sigma_g, sketched);
  internal::MetricProbe probe(task);
  out.grad_norm_is_estimate = probe.estimate;

  Vector theta = task.initial_theta();
  internal::RequireSize(theta, d, "initial theta");
  probe.Fill(theta, out.initial);

  GlobalOptimizer optimizer(cfg.optimizer, d, cfg.eta_global, cfg.moments);
  const std::size_t threads = internal::ResolveThreads(cfg.threads);

  for (std::int64_t t = 0; t < cfg.T; ++t) {
    const auto round = static_cast<std::uint64_t>(t);
    const auto selected = ClientSampler(cfg.C, cfg.N, round, cfg.master_seed);
    const Compressor r =
        sketched ? Compressor::Gaussian({RoundSketchSeed(cfg.master_seed, round), b, task.dim()})
                 : Compressor::Identity(task.dim());

    std::vector<std::optional<PrivatizedUpdate>> slots(selected.size());
    internal::ParallelFor(selected.size(), threads, [&](std::size_t i) {
      const std::size_t c = selected[i];
      const Vector delta = ClientLocalUpdate(
          theta, task, partition.clients[c], cfg.K, cfg.eta_local, cfg.batch_size,
          internal::LocalBatchStream(cfg.master_seed, c, round));
      RandomStream noise = NoiseStream(mech.noise_seed, c, round);
      slots[i].emplace(ClientPrivatize(c, delta, cfg.eta_local, mech, r, noise));
    });

    std::vector<PrivatizedUpdate> updates;
    updates.reserve(slots.size());
    std::size_t clipped = 0;
    for (auto& s : slots) {
      clipped += s->clip_activated() ? 1 : 0;
      updates.push_back(std::move(*s));
    }
    theta = ServerRound(theta, updates, cfg.N, r, optimizer);

    RoundRecord rec;
    rec.round = t + 1;
    rec.selected_clients = selected;
    rec.clip_activation_rate =
        static_cast<double>(clipped) / static_cast<double>(selected.size());
    rec.epsilon_spent = internal::EpsilonAfter(cfg.q(), t + 1, mech.tau, b, mech.sigma_g,
                                               cfg.delta, cfg.delta_split, sketched);
    probe.Fill(theta, rec);
    if (!theta.allFinite()) {
      throw ContractError("federation diverged: non-finite parameters at round " +
                          std::to_string(t + 1));
    }
    out.records.push_back(std::move(rec));
  }
  out.final_theta = std::move(theta);
  return out;
}

// ---------------------------------------------------------------------------
// Centralized SGM training (one logical dataset, per-example clipping)

struct CentralConfig {
  std::size_t m = 1;       // examples per step
  std::int64_t T = 1;      // steps
  double eta = 0.1;        // learning rate handed to the optimizer
  MechanismConfig mechanism;
  std::size_t sketch_b = 0;  // 0 = identity
  OptimizerKind optimizer = OptimizerKind::kGd;
  MomentConfig moments;
  std::uint64_t master_seed = 0;
  double delta = 1e-5;
  DeltaSplit delta_split;
};

// Builds privatized per-example messages for the centralized loop.
class CentralAggregator {
 public:
  static PrivatizedUpdate Make(std::size_t slot, const Vector& g, const MechanismConfig& mech,
                               const Compressor& r, RandomStream& rng) {
    const bool clipped = ClipActivates(g, mech.tau);
    Vector y = SgmApply(Clip(g, mech.tau), r, mech.sigma_g, rng);
    return PrivatizedUpdate(slot, std::move(y), clipped);
  }
};

// Per step: draw m examples without replacement (q = m / n), clip each
// gradient, apply SGM with the step's shared R_t and per-example noise,
// average, desketch, optimizer step with eta.
inline RunResult RunCentralSgm(const CentralConfig& cfg, const Task& task) {
  const std::size_t n = task.num_samples();
  internal::Require<ConfigError>(cfg.m >= 1 && cfg.m <= n, "central: need 1 <= m <= n");
  internal::Require<ConfigError>(cfg.T >= 1, "central: T must be >= 1");
  internal::Require<ConfigError>(cfg.eta > 0.0, "central: eta must be > 0");
  internal::Require<ConfigError>(cfg.mechanism.tau > 0.0, "central: tau must be > 0");

  const auto d = static_cast<Eigen::Index>(task.dim());
  const bool sketched = cfg.sketch_b > 0;
  const std::size_t b = sketched ? cfg.sketch_b : task.dim();
  MechanismConfig mech = cfg.mechanism;
  mech.b = b;
  const double q = static_cast<double>(cfg.m) / static_cast<double>(n);

  RunResult out;
  out.warnings = internal::AccountantWarnings(mech.tau, b, mech.sigma_g, sketched);
  internal::MetricProbe probe(task);
  out.grad_norm_is_estimate = probe.estimate;

  Vector theta = task.initial_theta();
  probe.Fill(theta, out.initial);
  GlobalOptimizer optimizer(cfg.optimizer, d, cfg.eta, cfg.moments);

  for (std::int64_t t = 0; t < cfg.T; ++t) {
    const auto round = static_cast<std::uint64_t>(t);
    const Compressor r =
        sketched ? Compressor::Gaussian({RoundSketchSeed(cfg.master_seed, round), b, task.dim()})
                 : Compressor::Identity(task.dim());
    // Same minibatch stream as client 0 of a federation holding all data.
    internal::MinibatchCursor cursor(task.AllIndices(), cfg.m,
                                     internal::LocalBatchStream(cfg.master_seed, 0, round));
    const auto batch = cursor.Next();

    std::vector<PrivatizedUpdate> msgs;
    msgs.reserve(batch.size());
    std::size_t clipped = 0;
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
      const std::size_t one[1] = {batch[slot]};
      const Vector g = task.Grad(theta, one);
      RandomStream noise = NoiseStream(mech.noise_seed, slot, round);
      msgs.push_back(CentralAggregator::Make(slot, g, mech, r, noise));
      clipped += msgs.back().clip_activated() ? 1 : 0;
    }
    theta = ServerRound(theta, msgs, batch.size(), r, optimizer);

    RoundRecord rec;
    rec.round = t + 1;
    rec.selected_clients.assign(batch.begin(), batch.end());
    rec.clip_activation_rate = static_cast<double>(clipped) / static_cast<double>(batch.size());
    rec.epsilon_spent = internal::EpsilonAfter(q, t + 1, mech.tau, b, mech.sigma_g, cfg.delta,
                                               cfg.delta_split, sketched);
    probe.Fill(theta, rec);
    out.records.push_back(std::move(rec));
  }
  out.final_theta = std::move(theta);
  return out;
}

}  // namespace fedsgm

#endif  // FEDSGM_FEDSIM_HPP_
