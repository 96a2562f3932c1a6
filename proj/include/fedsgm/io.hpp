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

#ifndef FEDSGM_IO_HPP_
#define FEDSGM_IO_HPP_

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "fedsgm/accountant.hpp"
#include "fedsgm/errors.hpp"
#include "fedsgm/fedsim.hpp"

namespace fedsgm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kRoundsCsvHeader = "# fedsgm-rounds v1";
inline constexpr const char* kSweepCsvHeader = "# fedsgm-sweep v1";

// Shortest round-trippable decimal; "inf", "-inf", "nan" for non-finite.
inline std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// JSON has no infinity: non-finite values become strings.
inline nlohmann::ordered_json JsonNumber(double v) {
  if (std::isfinite(v)) return v;
  return FormatDouble(v);
}

// Write to a sibling temporary and rename, so readers never see a partial file.
inline void WriteFileAtomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw ResourceError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw ResourceError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void WriteRoundRow(std::ostream& out, const RoundRecord& r) {
  out << r.round << ',' << FormatDouble(r.train_loss) << ',' << FormatDouble(r.grad_norm_sq)
      << ',' << FormatDouble(r.test_metric) << ',' << FormatDouble(r.clip_activation_rate)
      << ',' << FormatDouble(r.epsilon_spent) << '\n';
}

// Round 0 is theta_0 (no release yet, epsilon 0), then one row per round.
inline std::string RoundsCsv(const RunResult& run) {
  std::ostringstream out;
  out << kRoundsCsvHeader << '\n';
  out << "round,train_loss,grad_norm_sq,test_metric,clip_rate,epsilon_spent\n";
  WriteRoundRow(out, run.initial);
  for (const auto& r : run.records) WriteRoundRow(out, r);
  return out.str();
}

inline nlohmann::ordered_json AccountantJson(const AccountantResult& r) {
  nlohmann::ordered_json params;
  params["q"] = r.params.q;
  params["T"] = r.params.T;
  params["tau"] = JsonNumber(r.params.tau);
  params["b"] = r.params.b;
  params["sigma_g"] = r.params.sigma_g;
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const auto& s : r.trace) {
    trace.push_back({{"stage", s.name}, {"epsilon", JsonNumber(s.epsilon)},
                     {"delta", JsonNumber(s.delta)}});
  }
  nlohmann::ordered_json j;
  j["mechanism"] = r.mechanism;
  j["params"] = params;
  j["epsilon"] = JsonNumber(r.epsilon);
  j["delta"] = JsonNumber(r.delta);
  j["alpha_star"] = JsonNumber(r.alpha_star);
  j["regime_ok"] = r.regime_ok;
  j["pipeline_trace"] = trace;
  return j;
}

}  // namespace fedsgm

#endif  // FEDSGM_IO_HPP_
