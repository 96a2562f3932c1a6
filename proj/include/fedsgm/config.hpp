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

#ifndef FEDSGM_CONFIG_HPP_
#define FEDSGM_CONFIG_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedsgm/errors.hpp"
#include "fedsgm/fedsim.hpp"
#include "fedsgm/tasks.hpp"

namespace fedsgm {

using Json = nlohmann::ordered_json;

inline constexpr const char* kManifestFormat = "fedsgm-manifest v1";

// ---------------------------------------------------------------------------
// Schema

enum class FieldType { kCount, kSeed, kNumber, kNumberOrInf, kSigma, kChoice, kText, kFlag };

struct Field {
  const char* section;
  const char* key;
  FieldType type;
  bool required;
  Json fallback;                     // used when absent and not required
  std::vector<std::string> choices;  // kChoice only
  const char* help;
};

inline const std::vector<Field>& Schema() {
  static const std::vector<Field> fields = {
      {"task", "kind", FieldType::kChoice, true, nullptr, {"quadratic", "logreg"},
       "task family"},
      {"task", "d", FieldType::kCount, false, 50, {}, "parameter dimension"},
      {"task", "seed", FieldType::kSeed, false, 0, {}, "task generation seed"},
      {"task", "spectrum", FieldType::kChoice, false, "power-law",
       {"power-law", "identity", "linear"}, "quadratic Hessian spectrum"},
      {"task", "exponent", FieldType::kNumber, false, 2.0, {}, "power-law exponent"},
      {"task", "lambda_min", FieldType::kNumber, false, 0.1, {}, "smallest eigenvalue (linear)"},
      {"task", "samples", FieldType::kCount, false, 64, {}, "quadratic sample count"},
      {"task", "sample_noise", FieldType::kNumber, false, 0.0, {}, "quadratic per-sample shift std"},
      {"task", "init_scale", FieldType::kNumber, false, 1.0, {}, "quadratic init distance scale"},
      {"task", "n", FieldType::kCount, false, 1000, {}, "logreg training samples"},
      {"task", "test_samples", FieldType::kCount, false, 1000, {}, "logreg test samples"},
      {"task", "label_noise", FieldType::kNumber, false, 0.02, {}, "logreg label flip rate"},
      {"task", "reg", FieldType::kNumber, false, 1e-4, {}, "logreg L2 penalty"},
      {"task", "partition", FieldType::kChoice, false, "iid", {"iid", "label-skew"},
       "client partition"},
      {"task", "skew_concentration", FieldType::kNumber, false, 0.5, {},
       "label-skew Beta concentration"},
      {"federation", "C", FieldType::kCount, true, nullptr, {}, "total clients"},
      {"federation", "N", FieldType::kCount, true, nullptr, {}, "clients per round"},
      {"federation", "K", FieldType::kCount, false, 1, {}, "local steps"},
      {"federation", "T", FieldType::kCount, true, nullptr, {}, "rounds"},
      {"federation", "eta_local", FieldType::kNumber, false, 0.1, {}, "local learning rate"},
      {"federation", "batch_size", FieldType::kCount, false, 0, {}, "local minibatch, 0 = full"},
      {"federation", "master_seed", FieldType::kSeed, false, 0, {}, "sampling/sketch seed"},
      {"federation", "threads", FieldType::kCount, false, 1, {}, "client worker threads"},
      {"mechanism", "tau", FieldType::kNumberOrInf, true, nullptr, {}, "clip threshold"},
      {"mechanism", "sigma_g", FieldType::kSigma, true, nullptr, {},
       "noise std or \"calibrate\""},
      {"mechanism", "noise_seed", FieldType::kSeed, false, 0, {}, "noise seed"},
      {"sketch", "b", FieldType::kCount, false, 0, {}, "sketch dimension, 0 = identity"},
      {"optimizer", "kind", FieldType::kChoice, false, "gd", {"gd", "amsgrad", "adam"},
       "global optimizer"},
      {"optimizer", "eta_global", FieldType::kNumber, false, 1.0, {}, "global learning rate"},
      {"optimizer", "beta1", FieldType::kNumber, false, 0.9, {}, "first moment decay"},
      {"optimizer", "beta2", FieldType::kNumber, false, 0.99, {}, "second moment decay"},
      {"optimizer", "eps", FieldType::kNumber, false, 1e-8, {}, "denominator floor"},
      {"optimizer", "raw", FieldType::kFlag, false, false, {}, "skip preconditioning"},
      {"accountant", "delta", FieldType::kNumber, false, 1e-5, {}, "target delta"},
      {"accountant", "target_epsilon", FieldType::kNumber, false, nullptr, {},
       "epsilon for sigma_g = \"calibrate\""},
      {"accountant", "composition_fraction", FieldType::kNumber, false, 0.5, {},
       "share of delta given to composition"},
      {"output", "dir", FieldType::kText, false, "out", {}, "output directory"},
      {"output", "prefix", FieldType::kText, false, "run", {}, "output file prefix"},
  };
  return fields;
}

inline const std::vector<std::string>& SchemaSections() {
  static const std::vector<std::string> s = {"task", "sketch", "federation", "mechanism",
                                             "optimizer", "accountant", "output"};
  return s;
}

inline const Field* FindField(std::string_view section, std::string_view key) {
  for (const auto& f : Schema())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Diagnostics

namespace internal {

// 1-based line of the first `"key"` token after the section's own token;
// 0 when not found (e.g. the value came from an override).
inline std::size_t LocateLine(std::string_view text, std::string_view section,
                              std::string_view key = {}) {
  auto find_token = [&](std::string_view tok, std::size_t from) {
    const std::string quoted = "\"" + std::string(tok) + "\"";
    return text.find(quoted, from);
  };
  std::size_t pos = find_token(section, 0);
  if (pos == std::string_view::npos) return 0;
  if (!key.empty()) {
    pos = find_token(key, pos + section.size() + 2);
    if (pos == std::string_view::npos) return 0;
  }
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

inline std::string At(std::string_view text, std::string_view section,
                      std::string_view key = {}) {
  const std::size_t line = LocateLine(text, section, key);
  return line == 0 ? std::string() : " (line " + std::to_string(line) + ")";
}

inline bool IsCount(const Json& v) {
  if (v.is_number_unsigned()) return true;
  if (v.is_number_integer()) return v.get<std::int64_t>() >= 0;
  if (v.is_number_float()) {
    const double x = v.get<double>();
    return x >= 0 && x <= 9007199254740992.0 && std::floor(x) == x;
  }
  return false;
}

inline std::string TypeName(FieldType t) {
  switch (t) {
    case FieldType::kCount: return "a non-negative integer";
    case FieldType::kSeed: return "a non-negative integer";
    case FieldType::kNumber: return "a number";
    case FieldType::kNumberOrInf: return "a number or \"inf\"";
    case FieldType::kSigma: return "a number or \"calibrate\"";
    case FieldType::kChoice: return "one of the listed strings";
    case FieldType::kText: return "a string";
    case FieldType::kFlag: return "true or false";
  }
  return "?";
}

inline bool TypeMatches(const Field& f, const Json& v) {
  switch (f.type) {
    case FieldType::kCount:
    case FieldType::kSeed: return IsCount(v);
    case FieldType::kNumber: return v.is_number();
    case FieldType::kNumberOrInf: return v.is_number() || (v.is_string() && v == "inf");
    case FieldType::kSigma: return v.is_number() || (v.is_string() && v == "calibrate");
    case FieldType::kChoice:
      return v.is_string() &&
             std::find(f.choices.begin(), f.choices.end(), v.get<std::string>()) != f.choices.end();
    case FieldType::kText: return v.is_string();
    case FieldType::kFlag: return v.is_boolean();
  }
  return false;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Typed configuration

struct TaskSpec {
  std::string kind = "quadratic";
  std::size_t d = 50;
  std::uint64_t seed = 0;
  std::string spectrum = "power-law";
  double exponent = 2.0;
  double lambda_min = 0.1;
  std::size_t samples = 64;
  double sample_noise = 0.0;
  double init_scale = 1.0;
  std::size_t n = 1000;
  std::size_t test_samples = 1000;
  double label_noise = 0.02;
  double reg = 1e-4;
  std::string partition = "iid";
  double skew_concentration = 0.5;
};

struct RunConfig {
  TaskSpec task;
  FedConfig fed;
  bool calibrate_sigma = false;
  std::optional<double> target_epsilon;
  std::string output_dir = "out";
  std::string output_prefix = "run";
  Json resolved;                       // every schema key, defaults filled in
  std::vector<std::string> overrides;  // as given on the command line
  Json calibration = nullptr;          // carried over from a reloaded manifest
};

// Parses "section.key=value"; value is read as JSON, falling back to a string.
inline std::pair<std::pair<std::string, std::string>, Json> ParseOverride(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "': expected section.key=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos || path.find('.', dot + 1) != std::string::npos) {
    throw ConfigError("override '" + spec + "': key must be section.key");
  }
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {{path.substr(0, dot), path.substr(dot + 1)}, value};
}

namespace internal {

inline Json ParseJsonText(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n');
    throw ConfigError(source + ": line " + std::to_string(line) + ": malformed JSON: " + e.what());
  }
}

inline void ValidateDocument(const Json& doc, const std::string& text, const std::string& source) {
  if (!doc.is_object()) throw ConfigError(source + ": top level must be an object");
  for (const auto& [section, body] : doc.items()) {
    const auto& names = SchemaSections();
    if (std::find(names.begin(), names.end(), section) == names.end()) {
      throw ConfigError(source + ": unknown section '" + section + "'" + At(text, section));
    }
    if (!body.is_object()) {
      throw ConfigError(source + ": section '" + section + "' must be an object" +
                        At(text, section));
    }
    for (const auto& [key, value] : body.items()) {
      const Field* f = FindField(section, key);
      if (f == nullptr) {
        throw ConfigError(source + ": unknown key '" + section + "." + key + "'" +
                          At(text, section, key));
      }
      if (!TypeMatches(*f, value)) {
        std::string msg = source + ": '" + section + "." + key + "' must be " + TypeName(f->type);
        if (f->type == FieldType::kChoice) {
          msg += " (";
          for (std::size_t i = 0; i < f->choices.size(); ++i)
            msg += (i ? ", " : "") + f->choices[i];
          msg += ")";
        }
        throw ConfigError(msg + ", got " + value.dump() + At(text, section, key));
      }
    }
  }
  for (const auto& f : Schema()) {
    if (!f.required) continue;
    if (!doc.contains(f.section) || !doc[f.section].contains(f.key)) {
      throw ConfigError(source + ": missing required key '" + std::string(f.section) + "." +
                        f.key + "'" + At(text, f.section));
    }
  }
}

inline Json Resolve(const Json& doc) {
  Json out = Json::object();
  for (const auto& section : SchemaSections()) out[section] = Json::object();
  for (const auto& f : Schema()) {
    if (doc.contains(f.section) && doc[f.section].contains(f.key)) {
      out[f.section][f.key] = doc[f.section][f.key];
    } else if (!f.fallback.is_null()) {
      out[f.section][f.key] = f.fallback;
    }
  }
  return out;
}

inline std::uint64_t AsCount(const Json& v) {
  if (v.is_number_float()) return static_cast<std::uint64_t>(v.get<double>());
  return v.get<std::uint64_t>();
}

inline double AsNumber(const Json& v) {
  if (v.is_string()) return std::numeric_limits<double>::infinity();  // "inf"
  return v.get<double>();
}

}  // namespace internal

// Builds a validated RunConfig from JSON text. A run manifest is accepted in
// place of a config: its embedded configuration is used.
inline RunConfig LoadRunConfig(const std::string& text, const std::string& source,
                               const std::vector<std::string>& overrides = {}) {
  Json doc = internal::ParseJsonText(text, source);
  std::string diag_text = text;
  std::vector<std::string> recorded;
  Json calibration = nullptr;
  if (doc.is_object() && doc.contains("format") && doc["format"] == kManifestFormat) {
    if (!doc.contains("config")) throw ConfigError(source + ": manifest has no config");
    // Earlier overrides are already baked into the embedded config.
    if (doc.contains("overrides") && doc["overrides"].is_array()) {
      for (const auto& o : doc["overrides"])
        if (o.is_string()) recorded.push_back(o.get<std::string>());
    }
    if (doc.contains("calibration")) calibration = doc["calibration"];
    Json embedded = doc["config"];
    doc = std::move(embedded);
    diag_text.clear();
  }
  for (const auto& o : overrides) {
    auto [path, value] = ParseOverride(o);
    if (!doc.is_object()) break;
    if (!doc.contains(path.first)) doc[path.first] = Json::object();
    if (!doc[path.first].is_object()) {
      throw ConfigError("override '" + o + "': section is not an object");
    }
    doc[path.first][path.second] = value;
  }
  internal::ValidateDocument(doc, diag_text, source);

  RunConfig cfg;
  cfg.overrides = recorded;
  cfg.calibration = calibration;
  cfg.overrides.insert(cfg.overrides.end(), overrides.begin(), overrides.end());
  cfg.resolved = internal::Resolve(doc);
  const Json& r = cfg.resolved;
  using internal::AsCount;
  using internal::AsNumber;

  const Json& t = r["task"];
  cfg.task.kind = t["kind"];
  cfg.task.d = AsCount(t["d"]);
  cfg.task.seed = AsCount(t["seed"]);
  cfg.task.spectrum = t["spectrum"];
  cfg.task.exponent = AsNumber(t["exponent"]);
  cfg.task.lambda_min = AsNumber(t["lambda_min"]);
  cfg.task.samples = AsCount(t["samples"]);
  cfg.task.sample_noise = AsNumber(t["sample_noise"]);
  cfg.task.init_scale = AsNumber(t["init_scale"]);
  cfg.task.n = AsCount(t["n"]);
  cfg.task.test_samples = AsCount(t["test_samples"]);
  cfg.task.label_noise = AsNumber(t["label_noise"]);
  cfg.task.reg = AsNumber(t["reg"]);
  cfg.task.partition = t["partition"];
  cfg.task.skew_concentration = AsNumber(t["skew_concentration"]);

  const Json& f = r["federation"];
  FedConfig& fed = cfg.fed;
  fed.C = AsCount(f["C"]);
  fed.N = AsCount(f["N"]);
  fed.K = AsCount(f["K"]);
  fed.T = static_cast<std::int64_t>(AsCount(f["T"]));
  fed.eta_local = AsNumber(f["eta_local"]);
  fed.batch_size = AsCount(f["batch_size"]);
  fed.master_seed = AsCount(f["master_seed"]);
  fed.threads = AsCount(f["threads"]);

  const Json& m = r["mechanism"];
  fed.mechanism.tau = AsNumber(m["tau"]);
  cfg.calibrate_sigma = m["sigma_g"].is_string();
  fed.mechanism.sigma_g = cfg.calibrate_sigma ? 0.0 : m["sigma_g"].get<double>();
  fed.mechanism.noise_seed = AsCount(m["noise_seed"]);

  fed.sketch_b = AsCount(r["sketch"]["b"]);
  fed.mechanism.b = fed.sketch_b == 0 ? cfg.task.d : fed.sketch_b;

  const Json& o = r["optimizer"];
  fed.optimizer = ParseOptimizerKind(o["kind"]);
  fed.eta_global = AsNumber(o["eta_global"]);
  fed.moments = {AsNumber(o["beta1"]), AsNumber(o["beta2"]), AsNumber(o["eps"]),
                 o["raw"].get<bool>()};

  const Json& a = r["accountant"];
  fed.delta = AsNumber(a["delta"]);
  fed.delta_split.composition_fraction = AsNumber(a["composition_fraction"]);
  if (a.contains("target_epsilon")) cfg.target_epsilon = AsNumber(a["target_epsilon"]);

  cfg.output_dir = r["output"]["dir"];
  cfg.output_prefix = r["output"]["prefix"];

  // Semantic checks beyond types.
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(source + ": " + msg);
  };
  check(cfg.task.d >= 1, "task.d must be >= 1");
  check(!cfg.calibrate_sigma || cfg.target_epsilon.has_value(),
        "mechanism.sigma_g = \"calibrate\" needs accountant.target_epsilon");
  check(cfg.output_prefix.find('/') == std::string::npos, "output.prefix must not contain '/'");
  try {
    fed.Validate();
  } catch (const ContractError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (cfg.task.kind == "quadratic") {
    check(cfg.task.samples >= fed.C, "task.samples must be >= federation.C");
  } else {
    check(cfg.task.n >= fed.C, "task.n must be >= federation.C");
  }
  return cfg;
}

// Manifest copy of the configuration: output.dir is left out so that a run
// reproduced elsewhere yields an identical manifest.
inline Json ManifestConfig(const RunConfig& cfg) {
  Json c = cfg.resolved;
  c["output"].erase("dir");
  return c;
}

// ---------------------------------------------------------------------------
// Task construction

struct BuiltTask {
  std::unique_ptr<Task> task;
  Partition partition;
};

inline std::vector<double> SpectrumFor(const TaskSpec& spec) {
  if (spec.spectrum == "identity") return std::vector<double>(spec.d, 1.0);
  if (spec.spectrum == "linear") {
    std::vector<double> s(spec.d);
    for (std::size_t i = 0; i < spec.d; ++i) {
      const double frac = spec.d == 1 ? 0.0 : static_cast<double>(i) / (spec.d - 1);
      s[i] = 1.0 - frac * (1.0 - spec.lambda_min);
    }
    return s;
  }
  return PowerLawSpectrum(spec.d, spec.exponent);
}

inline BuiltTask BuildTask(const TaskSpec& spec, std::size_t clients) {
  BuiltTask out;
  if (spec.kind == "quadratic") {
    QuadraticOptions opts;
    opts.num_samples = spec.samples;
    opts.sample_noise = spec.sample_noise;
    opts.init_scale = spec.init_scale;
    out.task = std::make_unique<QuadraticTask>(MakeQuadratic(SpectrumFor(spec), spec.seed, opts));
    out.partition = PartitionIid(spec.samples, clients, spec.seed);
    return out;
  }
  LogRegOptions opts;
  opts.test_samples = spec.test_samples;
  opts.label_noise = spec.label_noise;
  opts.reg = spec.reg;
  opts.partition = spec.partition == "iid" ? PartitionMode::kIid : PartitionMode::kLabelSkew;
  opts.skew_concentration = spec.skew_concentration;
  auto [task, part] = MakeLogReg(spec.n, spec.d, clients, spec.seed, opts);
  out.task = std::make_unique<LogRegTask>(std::move(task));
  out.partition = std::move(part);
  return out;
}

}  // namespace fedsgm

#endif  // FEDSGM_CONFIG_HPP_
