// Copyright 2026 the ltfe authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ltfe/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ltfe {

using nlohmann::json;

namespace {

std::string padding_name(Padding p) {
  return p == Padding::circular ? "circular" : "reflect";
}

Padding parse_padding(const std::string& s) {
  if (s == "circular") return Padding::circular;
  if (s == "reflect") return Padding::reflect;
  throw DomainError("unknown padding mode: " + s);
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw DomainError("unknown config key: " + scope + it.key());
}

// Full-precision float formatting; round-trips exactly.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

json config_to_json(const TrainConfig& cfg) {
  json j;
  j["schedule"] = {{"alpha0", cfg.schedule.alpha0},
                   {"lambda", cfg.schedule.lambda},
                   {"sigma0", cfg.schedule.sigma0},
                   {"gamma", cfg.schedule.gamma},
                   {"t", cfg.schedule.steps}};
  j["infer_t"] = cfg.infer_T;
  j["lr"] = cfg.lr;
  j["momentum"] = cfg.momentum;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["kernel_k"] = cfg.kernel_k;
  j["strategy"] = strategy_name(cfg.strategy);
  j["layer_index"] = cfg.layer_index;
  j["scenes"] = cfg.scenes;
  j["scene_size"] = cfg.scene_size;
  j["proposals_per_scene"] = cfg.proposals_per_scene;
  j["num_classes"] = cfg.num_classes;
  j["eval_scenes"] = cfg.eval_scenes;
  j["feat_channels"] = cfg.feat_channels;
  j["hidden_dim"] = cfg.hidden_dim;
  j["field_hidden"] = cfg.field_hidden;
  j["ode_steps"] = cfg.ode_steps;
  j["eps_norm"] = cfg.eps_norm;
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["grad_clip"] = cfg.grad_clip;
  j["include_positive"] = cfg.include_positive;
  j["literal_eq1"] = cfg.literal_eq1;
  j["evolution"] = cfg.evolution;
  j["freeze_evolution"] = cfg.freeze_evolution;
  j["padding"] = padding_name(cfg.padding);
  return j;
}

TrainConfig config_from_json(const json& j, TrainConfig base) {
  static const std::set<std::string> top = {
      "schedule", "infer_t", "lr", "momentum", "epochs", "seed", "kernel_k", "strategy",
      "layer_index", "scenes", "scene_size", "proposals_per_scene", "num_classes",
      "eval_scenes", "feat_channels", "hidden_dim", "field_hidden", "ode_steps", "eps_norm",
      "lambda1", "lambda2", "grad_clip", "include_positive", "literal_eq1", "evolution",
      "freeze_evolution", "padding"};
  static const std::set<std::string> sched = {"alpha0", "lambda", "sigma0", "gamma", "t"};
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  check_keys(j, top, "");
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    if (!s.is_object()) throw FormatError("config: schedule must be an object");
    check_keys(s, sched, "schedule.");
    if (s.contains("alpha0")) base.schedule.alpha0 = s["alpha0"].get<double>();
    if (s.contains("lambda")) base.schedule.lambda = s["lambda"].get<double>();
    if (s.contains("sigma0")) base.schedule.sigma0 = s["sigma0"].get<double>();
    if (s.contains("gamma")) base.schedule.gamma = s["gamma"].get<double>();
    if (s.contains("t")) base.schedule.steps = s["t"].get<int>();
  }
  if (j.contains("infer_t")) base.infer_T = j["infer_t"].get<int>();
  if (j.contains("lr")) base.lr = j["lr"].get<double>();
  if (j.contains("momentum")) base.momentum = j["momentum"].get<double>();
  if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
  if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("kernel_k")) base.kernel_k = j["kernel_k"].get<int>();
  if (j.contains("strategy")) base.strategy = parse_strategy(j["strategy"].get<std::string>());
  if (j.contains("layer_index")) base.layer_index = j["layer_index"].get<int>();
  if (j.contains("scenes")) base.scenes = j["scenes"].get<int>();
  if (j.contains("scene_size")) base.scene_size = j["scene_size"].get<int>();
  if (j.contains("proposals_per_scene"))
    base.proposals_per_scene = j["proposals_per_scene"].get<int>();
  if (j.contains("num_classes")) base.num_classes = j["num_classes"].get<int>();
  if (j.contains("eval_scenes")) base.eval_scenes = j["eval_scenes"].get<int>();
  if (j.contains("feat_channels")) base.feat_channels = j["feat_channels"].get<int>();
  if (j.contains("hidden_dim")) base.hidden_dim = j["hidden_dim"].get<int>();
  if (j.contains("field_hidden")) base.field_hidden = j["field_hidden"].get<int>();
  if (j.contains("ode_steps")) base.ode_steps = j["ode_steps"].get<int>();
  if (j.contains("eps_norm")) base.eps_norm = j["eps_norm"].get<double>();
  if (j.contains("lambda1")) base.lambda1 = j["lambda1"].get<double>();
  if (j.contains("lambda2")) base.lambda2 = j["lambda2"].get<double>();
  if (j.contains("grad_clip")) base.grad_clip = j["grad_clip"].get<double>();
  if (j.contains("include_positive")) base.include_positive = j["include_positive"].get<bool>();
  if (j.contains("literal_eq1")) base.literal_eq1 = j["literal_eq1"].get<bool>();
  if (j.contains("evolution")) base.evolution = j["evolution"].get<bool>();
  if (j.contains("freeze_evolution")) base.freeze_evolution = j["freeze_evolution"].get<bool>();
  if (j.contains("padding")) base.padding = parse_padding(j["padding"].get<std::string>());
  return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw DomainError("override must be key=value, got: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json j;
  // Wrap the single assignment as a config fragment and reuse the strict parser.
  auto numeric = [&value]() {
    try {
      std::size_t pos = 0;
      const double d = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return json(d);
    } catch (const std::exception&) {
      throw DomainError("override " + value + " is not numeric");
    }
  };
  auto boolean = [&value]() {
    if (value == "true" || value == "1") return json(true);
    if (value == "false" || value == "0") return json(false);
    throw DomainError("override " + value + " is not a boolean");
  };

  if (key.rfind("schedule.", 0) == 0) {
    const std::string sub = key.substr(9);
    j["schedule"][sub] = sub == "t" ? json(static_cast<int>(numeric().get<double>())) : numeric();
  } else if (key == "strategy" || key == "padding") {
    j[key] = value;
  } else if (key == "include_positive" || key == "literal_eq1" || key == "evolution" ||
             key == "freeze_evolution") {
    j[key] = boolean();
  } else if (key == "seed") {
    j[key] = static_cast<std::uint64_t>(std::stoull(value));
  } else if (key == "infer_t" || key == "epochs" || key == "kernel_k" || key == "layer_index" ||
             key == "scenes" || key == "scene_size" || key == "proposals_per_scene" ||
             key == "num_classes" || key == "eval_scenes" || key == "feat_channels" ||
             key == "hidden_dim" || key == "field_hidden" || key == "ode_steps") {
    j[key] = static_cast<int>(numeric().get<double>());
  } else {
    j[key] = numeric();  // remaining known keys are doubles; unknown keys rejected below
  }
  cfg = config_from_json(j, cfg);
}

// -- checkpoint ------------------------------------------------------------------

void save_checkpoint(const std::string& stem, const ModelState& model, const TrainConfig& cfg) {
  const std::string blob_path = stem + ".ltfc";
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw FormatError("cannot open for writing: " + blob_path);

  json manifest;
  manifest["format"] = "ltfe-checkpoint-v1";
  manifest["config"] = config_to_json(cfg);
  json params = json::array();
  std::uint64_t offset = 0;
  auto dump = [&](const std::string& name, const Tensor& t) {
    std::ostringstream rec;
    write_ltf1(rec, t);
    const std::string bytes = rec.str();
    blob.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    params.push_back({{"name", name}, {"offset", offset}, {"bytes", bytes.size()}});
    offset += bytes.size();
  };
  for (int i = 0; i < ModelState::kParamCount; ++i)
    dump(ModelState::names()[static_cast<std::size_t>(i)], model.values[static_cast<std::size_t>(i)]);
  for (int i = 0; i < ModelState::kParamCount; ++i)
    dump(std::string(ModelState::names()[static_cast<std::size_t>(i)]) + ".momentum",
         model.momentum[static_cast<std::size_t>(i)]);
  if (!blob) throw FormatError("checkpoint write failed: " + blob_path);
  blob.close();

  manifest["params"] = std::move(params);
  std::ofstream mf(stem + ".json");
  if (!mf) throw FormatError("cannot open for writing: " + stem + ".json");
  mf << manifest.dump(2) << "\n";
}

ModelState load_checkpoint(const std::string& stem, TrainConfig* cfg_out) {
  std::ifstream mf(stem + ".json");
  if (!mf) throw FormatError("cannot open checkpoint manifest: " + stem + ".json");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest parse error: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "ltfe-checkpoint-v1")
    throw FormatError("unrecognized checkpoint format in " + stem + ".json");
  const TrainConfig cfg = config_from_json(manifest.at("config"));
  if (cfg_out) *cfg_out = cfg;

  std::ifstream blob(stem + ".ltfc", std::ios::binary);
  if (!blob) throw FormatError("cannot open checkpoint blob: " + stem + ".ltfc");

  ModelState model;
  const json& params = manifest.at("params");
  if (!params.is_array() || params.size() != 2 * ModelState::kParamCount)
    throw FormatError("checkpoint manifest: unexpected parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& rec = params[i];
    const std::string name = rec.at("name").get<std::string>();
    blob.seekg(static_cast<std::streamoff>(rec.at("offset").get<std::uint64_t>()));
    Tensor t = read_ltf1(blob);
    const std::size_t base = i % ModelState::kParamCount;
    const std::string expect =
        i < ModelState::kParamCount
            ? std::string(ModelState::names()[base])
            : std::string(ModelState::names()[base]) + ".momentum";
    if (name != expect)
      throw FormatError("checkpoint manifest: expected param " + expect + ", found " + name);
    if (i < ModelState::kParamCount)
      model.values[base] = std::move(t);
    else
      model.momentum[base] = std::move(t);
  }
  for (int i = 0; i < ModelState::kParamCount; ++i)
    if (!model.values[static_cast<std::size_t>(i)].same_shape(
            model.momentum[static_cast<std::size_t>(i)]))
      throw FormatError("checkpoint: value/momentum shape mismatch for " +
                        std::string(ModelState::names()[static_cast<std::size_t>(i)]));
  return model;
}

// -- CSV --------------------------------------------------------------------------

void write_metrics_csv(const std::string& path, const std::vector<StepStats>& rows) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << "epoch,step,l_cls,l_reg,l_intra,l_inter,l_align,l_total\n";
  for (const StepStats& r : rows)
    os << r.epoch << ',' << r.step << ',' << fmt(r.losses.l_cls) << ',' << fmt(r.losses.l_reg)
       << ',' << fmt(r.losses.l_intra) << ',' << fmt(r.losses.l_inter) << ','
       << fmt(r.losses.l_align) << ',' << fmt(r.losses.l_total) << '\n';
}

void write_benchmark_csv(const std::string& path, const std::vector<BenchCell>& cells) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << "knob,model,seed,accuracy\n";
  for (const BenchCell& c : cells)
    os << fmt(c.knob) << ',' << c.arm << ',' << c.seed << ',' << fmt(c.accuracy) << '\n';
}

void write_benchmark_summary_csv(const std::string& path, const std::vector<BenchCell>& cells) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << "knob,model,mean,stddev,n\n";
  // Preserve first-appearance order of (knob, arm) groups.
  std::vector<std::pair<double, std::string>> order;
  for (const BenchCell& c : cells) {
    std::pair<double, std::string> key{c.knob, c.arm};
    if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
  }
  for (const auto& [knob, arm] : order) {
    double sum = 0.0;
    int n = 0;
    for (const BenchCell& c : cells)
      if (c.knob == knob && c.arm == arm) {
        sum += c.accuracy;
        ++n;
      }
    const double mean = sum / n;
    double ss = 0.0;
    for (const BenchCell& c : cells)
      if (c.knob == knob && c.arm == arm) ss += (c.accuracy - mean) * (c.accuracy - mean);
    const double stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    os << fmt(knob) << ',' << arm << ',' << fmt(mean) << ',' << fmt(stddev) << ',' << n << '\n';
  }
}

}  // namespace ltfe
