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

#ifndef FEDSGM_CLI_HPP_
#define FEDSGM_CLI_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsgm/accountant.hpp"
#include "fedsgm/config.hpp"
#include "fedsgm/errors.hpp"
#include "fedsgm/fedsim.hpp"
#include "fedsgm/io.hpp"
#include "fedsgm/tasks.hpp"

namespace fedsgm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInfeasible = 2;

namespace cli {

// Integer that may be written in exponent form, e.g. 4e5.
inline std::size_t ParseCount(const std::string& flag, double v) {
  if (!(v >= 1.0) || std::floor(v) != v || v > 9007199254740992.0) {
    throw ConfigError(flag + " must be a positive integer, got " + FormatDouble(v));
  }
  return static_cast<std::size_t>(v);
}

// Calibrates sigma_g in place when the config asks for it; returns the
// calibration record for the manifest (null when not calibrated).
inline Json ResolveSigma(RunConfig& cfg) {
  if (!cfg.calibrate_sigma) return cfg.calibration;
  FedConfig& fed = cfg.fed;
  if (fed.sketch_b == 0) {
    throw CalibrationError("sigma_g = \"calibrate\" needs a sketch (sketch.b > 0)");
  }
  if (!std::isfinite(fed.mechanism.tau)) {
    throw CalibrationError("sigma_g = \"calibrate\" needs a finite mechanism.tau");
  }
  const double sigma = CalibrateSgmSigma({*cfg.target_epsilon, fed.delta}, fed.q(), fed.T,
                                         fed.mechanism.tau, fed.sketch_b, fed.delta_split);
  fed.mechanism.sigma_g = sigma;
  cfg.resolved["mechanism"]["sigma_g"] = sigma;
  Json rec;
  rec["target_epsilon"] = *cfg.target_epsilon;
  rec["delta"] = fed.delta;
  rec["sigma_g"] = sigma;
  return rec;
}

inline AccountantResult RunAccountant(const FedConfig& fed) {
  AccountantParams p{fed.q(), fed.T, fed.mechanism.tau, fed.sketch_b, fed.mechanism.sigma_g};
  const bool covered = fed.sketch_b > 0 && fed.mechanism.sigma_g > 0.0 &&
                       std::isfinite(fed.mechanism.tau) && p.regime_ok();
  if (covered) return SgmEpsilon(p, fed.delta, fed.delta_split);
  AccountantResult r;
  r.mechanism = "sgm";
  r.params = p;
  r.target_delta = fed.delta;
  r.epsilon = kInfinity;
  r.delta = fed.delta;
  r.alpha_star = kInfinity;
  r.regime_ok = false;
  return r;
}

struct SimulationOutput {
  RunResult run;
  AccountantResult accountant;
  Json manifest;
  std::string csv;
};

inline SimulationOutput Simulate(RunConfig& cfg) {
  Json calibration = ResolveSigma(cfg);
  BuiltTask built = BuildTask(cfg.task, cfg.fed.C);
  SimulationOutput out;
  out.run = RunFederation(cfg.fed, *built.task, built.partition);
  out.accountant = RunAccountant(cfg.fed);
  out.csv = RoundsCsv(out.run);

  Json m;
  m["format"] = kManifestFormat;
  m["version"] = kVersion;
  m["config"] = ManifestConfig(cfg);
  m["overrides"] = cfg.overrides;
  m["calibration"] = calibration;
  m["seeds"] = {{"task", cfg.task.seed},
                {"master", cfg.fed.master_seed},
                {"noise", cfg.fed.mechanism.noise_seed}};
  m["accountant"] = AccountantJson(out.accountant);
  m["warnings"] = out.run.warnings;
  m["grad_norm_is_estimate"] = out.run.grad_norm_is_estimate;
  m["outputs"] = {{"rounds_csv", cfg.output_prefix + ".csv"}};
  out.manifest = std::move(m);
  return out;
}

inline RunConfig LoadConfigFile(const std::string& path, const std::vector<std::string>& overrides) {
  const std::string text = ReadFile(path);
  return LoadRunConfig(text, path, overrides);
}

inline double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double StdErr(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

inline std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct CalibrateArgs {
  double eps = 0, delta = 0, q = 0, T = 0, tau = 0, b = 0;
  bool json = false;
};

inline int CmdCalibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto T = static_cast<std::int64_t>(ParseCount("--T", a.T));
  const std::size_t b = ParseCount("--b", a.b);
  const DpPoint target{a.eps, a.delta};
  const double sigma = CalibrateSgmSigma(target, a.q, T, a.tau, b);
  const double baseline = CalibrateBaselineSigma(target, a.q, T);
  const auto achieved = SgmEpsilon({a.q, T, a.tau, b, sigma}, a.delta);
  if (a.json) {
    Json j;
    j["target_epsilon"] = a.eps;
    j["delta"] = a.delta;
    j["sgm_sigma_g"] = sigma;
    j["sgm_epsilon"] = achieved.epsilon;
    j["baseline_sigma"] = baseline;
    j["baseline_mechanism"] = BaselineGmEpsilon(a.q, baseline, T, a.delta).mechanism;
    j["sigma_ratio"] = sigma / baseline;
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  out << "target_epsilon  " << FormatDouble(a.eps) << '\n'
      << "delta           " << FormatDouble(a.delta) << '\n'
      << "sgm_sigma_g     " << FormatDouble(sigma) << '\n'
      << "sgm_epsilon     " << FormatDouble(achieved.epsilon) << '\n'
      << "baseline_sigma  " << FormatDouble(baseline) << '\n'
      << "sigma_ratio     " << FormatDouble(sigma / baseline) << '\n';
  return kExitOk;
}

struct AccountantArgs {
  double sigma = 0, delta = 0, q = 0, T = 0, tau = 0, b = 0;
  bool baseline = false;
  bool json = false;
};

inline int CmdAccountant(const AccountantArgs& a, std::ostream& out) {
  const auto T = static_cast<std::int64_t>(ParseCount("--T", a.T));
  AccountantResult r;
  if (a.baseline) {
    r = BaselineGmEpsilon(a.q, a.sigma, T, a.delta);
  } else {
    r = SgmEpsilon({a.q, T, a.tau, ParseCount("--b", a.b), a.sigma}, a.delta);
    if (!r.regime_ok) throw RegimeError("sigma_g must be > 0 for the SGM accountant");
  }
  if (a.json) {
    out << AccountantJson(r).dump(2) << '\n';
    return kExitOk;
  }
  out << "mechanism   " << r.mechanism << '\n';
  for (const auto& s : r.trace) {
    out << std::left << std::setw(12) << s.name << "epsilon " << FormatDouble(s.epsilon)
        << "  delta " << FormatDouble(s.delta) << '\n';
  }
  out << "alpha_star  " << FormatDouble(r.alpha_star) << '\n'
      << "epsilon     " << FormatDouble(r.epsilon) << '\n'
      << "delta       " << FormatDouble(r.delta) << '\n';
  return kExitOk;
}

struct SimulateArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir;
};

inline int CmdSimulate(const SimulateArgs& a, std::ostream& out) {
  RunConfig cfg = LoadConfigFile(a.config, a.overrides);
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
  SimulationOutput sim = Simulate(cfg);
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  const fs::path csv = dir / (cfg.output_prefix + ".csv");
  const fs::path manifest = dir / (cfg.output_prefix + ".manifest.json");
  WriteFileAtomic(csv, sim.csv);
  WriteFileAtomic(manifest, sim.manifest.dump(2) + "\n");
  for (const auto& w : sim.run.warnings) out << "warning: " << w << '\n';
  const RoundRecord& last = sim.run.records.back();
  out << "rounds          " << last.round << '\n'
      << "sigma_g         " << FormatDouble(cfg.fed.mechanism.sigma_g) << '\n'
      << "train_loss      " << FormatDouble(last.train_loss) << '\n'
      << "grad_norm_sq    " << FormatDouble(last.grad_norm_sq) << '\n'
      << "test_metric     " << FormatDouble(last.test_metric) << '\n'
      << "epsilon         " << FormatDouble(sim.accountant.epsilon) << '\n'
      << "wrote           " << csv.string() << '\n'
      << "wrote           " << manifest.string() << '\n';
  return kExitOk;
}

struct SweepArgs {
  std::string config;
  std::string axis;
  std::string values;
  std::size_t reps = 1;
  std::vector<std::string> overrides;
  std::string out_dir;
};

inline int CmdSweep(const SweepArgs& a, std::ostream& out) {
  const auto dot = a.axis.find('.');
  const Field* field = dot == std::string::npos
                           ? nullptr
                           : FindField(a.axis.substr(0, dot), a.axis.substr(dot + 1));
  if (field == nullptr || std::string(field->section) == "output") {
    throw ConfigError("sweep: '" + a.axis + "' is not a sweepable config key");
  }
  const std::vector<std::string> values = SplitList(a.values);
  if (values.empty()) throw ConfigError("sweep: --values is empty");
  if (a.reps < 1) throw ConfigError("sweep: --reps must be >= 1");

  const RunConfig base = LoadConfigFile(a.config, a.overrides);
  const bool eps_axis = a.axis == "accountant.target_epsilon";

  std::ostringstream rows, summary;
  rows << kSweepCsvHeader << '\n'
       << "axis,value,rep,sigma_g,epsilon,train_loss,grad_norm_sq,test_metric,clip_rate\n";
  summary << kSweepCsvHeader << '\n'
          << "axis,value,reps,sigma_g,epsilon,train_loss_mean,train_loss_stderr,"
             "grad_norm_sq_mean,grad_norm_sq_stderr,test_metric_mean,test_metric_stderr\n";
  out << std::left << std::setw(14) << "value" << std::setw(24) << "sigma_g" << std::setw(24)
      << "epsilon" << "train_loss_mean\n";

  for (const auto& value : values) {
    std::vector<double> loss, grad, metric;
    double sigma = 0.0, eps = 0.0;
    for (std::size_t rep = 0; rep < a.reps; ++rep) {
      std::vector<std::string> ov = a.overrides;
      ov.push_back(a.axis + "=" + value);
      if (eps_axis) ov.push_back("mechanism.sigma_g=\"calibrate\"");
      ov.push_back("federation.master_seed=" + std::to_string(base.fed.master_seed + rep));
      ov.push_back("mechanism.noise_seed=" + std::to_string(base.fed.mechanism.noise_seed + rep));
      RunConfig cfg = LoadConfigFile(a.config, ov);
      SimulationOutput sim = Simulate(cfg);
      const RoundRecord& last = sim.run.records.back();
      double clip = 0.0;
      for (const auto& r : sim.run.records) clip += r.clip_activation_rate;
      clip /= static_cast<double>(sim.run.records.size());
      sigma = cfg.fed.mechanism.sigma_g;
      eps = sim.accountant.epsilon;
      loss.push_back(last.train_loss);
      grad.push_back(last.grad_norm_sq);
      metric.push_back(last.test_metric);
      rows << a.axis << ',' << value << ',' << rep << ',' << FormatDouble(sigma) << ','
           << FormatDouble(eps) << ',' << FormatDouble(last.train_loss) << ','
           << FormatDouble(last.grad_norm_sq) << ',' << FormatDouble(last.test_metric) << ','
           << FormatDouble(clip) << '\n';
    }
    summary << a.axis << ',' << value << ',' << a.reps << ',' << FormatDouble(sigma) << ','
            << FormatDouble(eps) << ',' << FormatDouble(Mean(loss)) << ','
            << FormatDouble(StdErr(loss)) << ',' << FormatDouble(Mean(grad)) << ','
            << FormatDouble(StdErr(grad)) << ',' << FormatDouble(Mean(metric)) << ','
            << FormatDouble(StdErr(metric)) << '\n';
    out << std::left << std::setw(14) << value << std::setw(24) << FormatDouble(sigma)
        << std::setw(24) << FormatDouble(eps) << FormatDouble(Mean(loss)) << '\n';
  }
  namespace fs = std::filesystem;
  const fs::path dir(a.out_dir.empty() ? base.output_dir : a.out_dir);
  const fs::path rows_path = dir / (base.output_prefix + ".sweep.csv");
  const fs::path summary_path = dir / (base.output_prefix + ".sweep_summary.csv");
  WriteFileAtomic(rows_path, rows.str());
  WriteFileAtomic(summary_path, summary.str());
  out << "wrote " << rows_path.string() << '\n' << "wrote " << summary_path.string() << '\n';
  return kExitOk;
}

struct DiagnoseArgs {
  std::string config;
  std::vector<std::string> overrides;
};

inline int CmdDiagnose(const DiagnoseArgs& a, std::ostream& out) {
  RunConfig cfg = LoadConfigFile(a.config, a.overrides);
  if (cfg.task.d > kMaxExactHessianDim) {
    throw ResourceError("diagnose: task.d = " + std::to_string(cfg.task.d) +
                        " exceeds the exact-Hessian limit " +
                        std::to_string(kMaxExactHessianDim) +
                        "; a stochastic spectrum estimate would be needed, reduce task.d");
  }
  ResolveSigma(cfg);
  const FedConfig& fed = cfg.fed;
  BuiltTask built = BuildTask(cfg.task, fed.C);
  const Task& task = *built.task;
  const Vector theta0 = task.initial_theta();

  const Matrix h = *task.Hessian(theta0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
  const double lambda_max = eig.eigenvalues().maxCoeff();
  const double lambda_min = eig.eigenvalues().minCoeff();
  const double intrinsic = IntrinsicDimension(h);

  // Sample points: theta_0 and four random perturbations of radius 0.5.
  std::vector<Vector> points{theta0};
  RandomStream rng(rng::DeriveKey(fed.master_seed, "diagnose"));
  for (int k = 0; k < 4; ++k) {
    Vector u(theta0.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.NextNormal();
    points.push_back(theta0 + 0.5 * u / u.norm());
  }
  const auto stats = EstimateGAndSigmaS(task, built.partition, points, fed.batch_size, 20,
                                        fed.master_seed);
  const double K = static_cast<double>(fed.K);
  const double kg = K * stats.g_est;
  const double tau = fed.mechanism.tau;
  const double eta = fed.eta_global * fed.eta_local;
  const double Td = static_cast<double>(fed.T);
  const double Nd = static_cast<double>(fed.N);
  const double b = static_cast<double>(fed.mechanism.b);

  std::string regime;
  if (tau >= kg) {
    regime = "none (tau >= K*G_est)";
  } else if (tau < 0.1 * kg) {
    regime = "heavy (tau < 0.1*K*G_est)";
  } else {
    regime = "partial (tau < K*G_est)";
  }
  const auto opt = task.MinimumValue();
  const double gap = task.FullLoss(theta0) - (opt ? *opt : 0.0);

  auto row = [&](const std::string& k, const std::string& v) {
    out << std::left << std::setw(32) << k << v << '\n';
  };
  row("task", task.name());
  row("d", std::to_string(task.dim()));
  row("lambda_max", FormatDouble(lambda_max));
  row("lambda_min", FormatDouble(lambda_min));
  row("intrinsic_dimension", FormatDouble(intrinsic));
  row("G_est", FormatDouble(stats.g_est));
  row("sigma_s_est", FormatDouble(stats.sigma_s_est));
  row("tau", FormatDouble(tau));
  row("K*G_est", FormatDouble(kg));
  row("clip_regime", regime);
  row("sigma_g", FormatDouble(fed.mechanism.sigma_g));
  out << "# error-term shapes (orders of magnitude; constants and log factors omitted)\n";
  row("init_gap/(eta*T*K)", opt ? FormatDouble(gap / (eta * Td * K)) : "unknown (L* not known)");
  row("1/sqrt(N*T)", FormatDouble(1.0 / std::sqrt(Nd * Td)));
  row("eta_local*K", FormatDouble(fed.eta_local * K));
  row("tau/(sqrt(b*T)*K)", FormatDouble(tau / (std::sqrt(b * Td) * K)));
  row("eta*I*tau^2/K", FormatDouble(eta * intrinsic * tau * tau / K));
  row("clip: max(0,G(KG-tau)/K)", FormatDouble(std::max(0.0, stats.g_est * (kg - tau) / K)));
  row("noise: eta*I*sigma_g^2/(N*K)",
      FormatDouble(eta * intrinsic * fed.mechanism.sigma_g * fed.mechanism.sigma_g / (Nd * K)));
  return kExitOk;
}

}  // namespace cli

// Entry point shared by the executable and the tests.
inline int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated learning with the sketched Gaussian mechanism", "fedsgm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  cli::CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "smallest sigma_g reaching a target epsilon");
  calibrate->add_option("--eps", ca.eps, "target epsilon")->required();
  calibrate->add_option("--delta", ca.delta, "target delta")->required();
  calibrate->add_option("--q", ca.q, "client sampling rate N/C")->required();
  calibrate->add_option("--T", ca.T, "rounds")->required();
  calibrate->add_option("--tau", ca.tau, "clip threshold")->required();
  calibrate->add_option("--b", ca.b, "sketch dimension")->required();
  calibrate->add_flag("--json", ca.json, "JSON output");

  cli::AccountantArgs aa;
  auto* accountant = app.add_subcommand("accountant", "epsilon for a given sigma_g");
  accountant->add_option("--sigma", aa.sigma, "noise std sigma_g")->required();
  accountant->add_option("--delta", aa.delta, "target delta")->required();
  accountant->add_option("--q", aa.q, "client sampling rate N/C")->required();
  accountant->add_option("--T", aa.T, "rounds")->required();
  accountant->add_option("--tau", aa.tau, "clip threshold");
  accountant->add_option("--b", aa.b, "sketch dimension");
  accountant->add_flag("--baseline", aa.baseline, "unsketched subsampled Gaussian accountant");
  accountant->add_flag("--json", aa.json, "JSON output");

  cli::SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "run a federation from a config or manifest");
  simulate->add_option("config", sa.config, "config or manifest JSON")->required();
  simulate->add_option("--override", sa.overrides, "section.key=value (repeatable)");
  simulate->add_option("--out-dir", sa.out_dir, "output directory (replaces output.dir)");

  cli::SweepArgs wa;
  auto* sweep = app.add_subcommand("sweep", "repeat simulate over values of one config key");
  sweep->add_option("config", wa.config, "config JSON")->required();
  sweep->add_option("--axis", wa.axis, "section.key to vary")->required();
  sweep->add_option("--values", wa.values, "comma-separated values")->required();
  sweep->add_option("--reps", wa.reps, "repetitions per value (seeds offset by rep)");
  sweep->add_option("--override", wa.overrides, "section.key=value (repeatable)");
  sweep->add_option("--out-dir", wa.out_dir, "output directory (replaces output.dir)");

  cli::DiagnoseArgs da;
  auto* diagnose = app.add_subcommand("diagnose", "curvature, gradient and clipping diagnostics");
  diagnose->add_option("config", da.config, "config JSON")->required();
  diagnose->add_option("--override", da.overrides, "section.key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (calibrate->parsed()) {
      if (!(ca.eps > 0.0)) {
        throw CalibrationError("target epsilon must be > 0, got " + FormatDouble(ca.eps));
      }
      return cli::CmdCalibrate(ca, out);
    }
    if (accountant->parsed()) {
      if (!aa.baseline && (aa.tau <= 0.0 || aa.b <= 0.0)) {
        throw ConfigError("accountant: --tau and --b are required unless --baseline");
      }
      return cli::CmdAccountant(aa, out);
    }
    if (simulate->parsed()) return cli::CmdSimulate(sa, out);
    if (sweep->parsed()) return cli::CmdSweep(wa, out);
    if (diagnose->parsed()) return cli::CmdDiagnose(da, out);
  } catch (const CalibrationError& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const RegimeError& e) {
    err << "regime: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ResourceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

inline int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"fedsgm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace fedsgm

#endif  // FEDSGM_CLI_HPP_
