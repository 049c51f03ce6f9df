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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltfe/gradsuite.hpp"
#include "ltfe/kernels.hpp"
#include "ltfe/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string input_path;
  std::string out_dir;
  std::optional<std::string> strategy;
  std::optional<int> infer_T;
  bool literal_eq1 = false;
  bool include_positive = false;
};

void attach_common(CLI::App* cmd, CommonOpts& o, bool seed_required) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--set", o.overrides, "config override key=value (repeatable)");
  auto* seed = cmd->add_option("--seed", o.seed, "random seed");
  if (seed_required) seed->required();
  cmd->add_option("--strategy", o.strategy, "injection strategy")
      ->check(CLI::IsMember({"progressive", "equal_step", "one_shot"}));
  cmd->add_option("--infer-T", o.infer_T, "inference evolution steps");
  cmd->add_flag("--literal-eq1", o.literal_eq1, "add the blur kernel itself instead of noise");
  cmd->add_flag("--include-positive", o.include_positive,
                "include the positive pair in the contrastive denominator");
}

ltfe::TrainConfig resolve_config(const CommonOpts& o, ltfe::TrainConfig base = {}) {
  ltfe::TrainConfig cfg = base;
  if (!o.config_path.empty()) cfg = ltfe::load_config_file(o.config_path, cfg);
  for (const std::string& kv : o.overrides) ltfe::apply_override(cfg, kv);
  if (o.seed) cfg.seed = *o.seed;
  if (o.strategy) cfg.strategy = ltfe::parse_strategy(*o.strategy);
  if (o.infer_T) cfg.infer_T = *o.infer_T;
  if (o.literal_eq1) cfg.literal_eq1 = true;
  if (o.include_positive) cfg.include_positive = true;
  cfg.validate();
  return cfg;
}

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw ltfe::DomainError("--out directory is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ltfe::FormatError("cannot create output directory: " + dir);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw ltfe::FormatError("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

std::vector<double> tensor_stats(const ltfe::Tensor& t) {
  const auto& K = ltfe::kernels::active();
  const auto n = static_cast<std::size_t>(t.size());
  const double mean = K.sum(t.data(), n) / static_cast<double>(t.size());
  double var = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) var += (t[i] - mean) * (t[i] - mean);
  var /= static_cast<double>(t.size());
  return {mean, var};
}

// -- subcommands ------------------------------------------------------------

int cmd_schedule(const CommonOpts& o) {
  ltfe::TrainConfig cfg = resolve_config(o);
  json rows = json::array();
  for (int t = 1; t <= cfg.schedule.steps; ++t) {
    auto [alpha_t, sigma_t] = ltfe::schedule_at(cfg.schedule, t);
    rows.push_back({{"t", t}, {"alpha", alpha_t}, {"sigma", sigma_t}});
  }
  json out = {{"config", ltfe::config_to_json(cfg)}, {"rows", rows}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_evolve(const CommonOpts& o) {
  ltfe::TrainConfig cfg = resolve_config(o);
  if (o.input_path.empty()) throw ltfe::DomainError("evolve requires --input LTF1 tensor");
  ensure_out_dir(o.out_dir);
  ltfe::Tensor f0 = ltfe::read_ltf1_file(o.input_path);
  if (f0.rank() != 3) throw ltfe::ShapeError("evolve: input must be a rank-3 [h,w,c] tensor");

  ltfe::Rng rng(cfg.seed);
  ltfe::Tape tape;
  ltfe::Var f0v = tape.constant(f0);
  ltfe::EvolveOptions opt{cfg.strategy, cfg.padding, cfg.literal_eq1};
  std::vector<ltfe::Var> seq = ltfe::evolve_sequence(tape, f0v, cfg.schedule, opt, rng);

  const auto& K = ltfe::kernels::active();
  json rows = json::array();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const ltfe::Tensor& ft = tape.value(seq[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "f_%03zu.ltf1", i + 1);
    ltfe::write_ltf1_file((fs::path(o.out_dir) / name).string(), ft);

    auto [alpha_t, sigma_t] = ltfe::schedule_at(cfg.schedule, static_cast<int>(i + 1));
    ltfe::Tensor diff(ft.shape());
    K.sub(ft.data(), f0.data(), diff.data(), static_cast<std::size_t>(ft.size()));
    const std::vector<double> stats = tensor_stats(ft);
    rows.push_back({{"t", i + 1},
                    {"alpha", alpha_t},
                    {"sigma", sigma_t},
                    {"file", name},
                    {"mean", stats[0]},
                    {"variance", stats[1]},
                    {"l2_distance_from_f0",
                     std::sqrt(K.sumsq(diff.data(), static_cast<std::size_t>(diff.size())))}});
  }
  json out = {{"config", ltfe::config_to_json(cfg)},
              {"input", o.input_path},
              {"shape", f0.shape()},
              {"rows", rows}};
  write_json((fs::path(o.out_dir) / "trajectory.json").string(), out);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_kernels(const CommonOpts& o, const std::string& model_stem) {
  ltfe::TrainConfig cfg;
  ltfe::ModelState model;
  if (!model_stem.empty()) {
    model = ltfe::load_checkpoint(model_stem, &cfg);
    cfg = resolve_config(o, cfg);
  } else {
    cfg = resolve_config(o);
    ltfe::Rng init(ltfe::derive_seed(cfg.seed, 0));
    model = ltfe::ModelState::init(cfg, init);
  }

  ltfe::Tensor f0;
  if (!o.input_path.empty()) {
    f0 = ltfe::read_ltf1_file(o.input_path);
  } else {
    ltfe::Rng scene_rng(ltfe::derive_seed(cfg.seed, 11));
    ltfe::ToyScene scene = ltfe::make_scene(scene_rng, cfg, 0.0);
    ltfe::Tape tape;
    ltfe::ModelVars mv = ltfe::put_model(tape, model);
    f0 = tape.value(ltfe::extract_features(tape, mv, tape.constant(scene.image), cfg));
  }

  ltfe::Rng rng(ltfe::derive_seed(cfg.seed, 12));
  ltfe::KernelDiagnostics diag = ltfe::kernel_diagnostics(model, f0, cfg, rng);
  json rows = json::array();
  for (std::size_t i = 0; i < diag.tau.size(); ++i)
    rows.push_back({{"t", i + 1},
                    {"tau", diag.tau[i]},
                    {"encoding_norm", diag.encoding_norm[i]},
                    {"kernel_norm", diag.kernel_norm[i]}});
  json out = {{"config", ltfe::config_to_json(cfg)}, {"rows", rows}};
  std::cout << out.dump(2) << "\n";
  if (!o.out_dir.empty()) {
    ensure_out_dir(o.out_dir);
    write_json((fs::path(o.out_dir) / "kernels.json").string(), out);
  }
  return 0;
}

int cmd_gradcheck(const CommonOpts& o) {
  ltfe::TrainConfig cfg = resolve_config(o);
  const std::uint64_t seed = o.seed ? *o.seed : 42;
  auto results = ltfe::run_gradcheck_suite(seed);
  json mods;
  double worst = 0.0;
  for (const auto& [name, err] : results) {
    mods[name] = err;
    worst = std::max(worst, err);
  }
  json out = {{"config", ltfe::config_to_json(cfg)},
              {"seed", seed},
              {"max_relative_error", mods},
              {"worst", worst}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o) {
  ltfe::TrainConfig cfg = resolve_config(o);
  ensure_out_dir(o.out_dir);
  ltfe::TrainResult result = ltfe::train_model(cfg);

  const fs::path out(o.out_dir);
  ltfe::save_checkpoint((out / "model").string(), result.model, cfg);
  ltfe::write_metrics_csv((out / "metrics.csv").string(), result.metrics);

  json summary = {{"config", ltfe::config_to_json(cfg)},
                  {"steps", result.metrics.size()},
                  {"rejected_steps", result.rejected_steps}};
  if (!result.metrics.empty()) {
    const ltfe::LossBundle& last = result.metrics.back().losses;
    summary["final"] = {{"l_cls", last.l_cls},     {"l_reg", last.l_reg},
                        {"l_intra", last.l_intra}, {"l_inter", last.l_inter},
                        {"l_align", last.l_align}, {"l_total", last.l_total}};
  }
  write_json((out / "train_summary.json").string(), summary);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_infer(const CommonOpts& o, const std::string& model_stem, double knob) {
  if (model_stem.empty()) throw ltfe::DomainError("infer requires --model checkpoint stem");
  ltfe::TrainConfig cfg;
  ltfe::ModelState model = ltfe::load_checkpoint(model_stem, &cfg);
  cfg = resolve_config(o, cfg);

  json scenes_out = json::array();
  double accuracy = -1.0;
  if (!o.input_path.empty()) {
    ltfe::Tensor image = ltfe::read_ltf1_file(o.input_path);
    if (image.rank() != 3 || image.dim(2) != 3)
      throw ltfe::ShapeError("infer: --input must be an [s,s,3] image tensor");
    ltfe::ToyScene scene;
    scene.image = image;
    // synthetic grid proposals over the image (no labels)
    const int s = static_cast<int>(image.dim(0));
    const int half = s / 2;
    for (int gy = 0; gy < 2; ++gy)
      for (int gx = 0; gx < 2; ++gx)
        scene.proposals.push_back(
            {gy * half, gx * half, gy * half + half, gx * half + half, 0, {0, 0, 0, 0}});
    ltfe::Rng rng(ltfe::derive_seed(cfg.seed, 21));
    ltfe::InferResult res = ltfe::infer(model, scene, cfg, rng);
    scenes_out.push_back({{"scores", res.scores.raw()},
                          {"boxes", res.boxes.raw()},
                          {"tau", res.tau},
                          {"kernel_norms", res.kernel_norms}});
  } else {
    const std::vector<ltfe::ToyScene> scenes =
        ltfe::make_scenes(ltfe::derive_seed(cfg.seed, 22), cfg.eval_scenes, cfg, knob);
    std::int64_t correct = 0, total = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      ltfe::Rng rng(ltfe::derive_seed(cfg.seed, 23 + i));
      ltfe::InferResult res = ltfe::infer(model, scenes[i], cfg, rng);
      json props = json::array();
      for (std::size_t p = 0; p < scenes[i].proposals.size(); ++p) {
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < res.scores.dim(1); ++j)
          if (res.scores.at(static_cast<std::int64_t>(p), j) >
              res.scores.at(static_cast<std::int64_t>(p), arg))
            arg = j;
        std::vector<double> row(static_cast<std::size_t>(res.scores.dim(1)));
        for (std::int64_t j = 0; j < res.scores.dim(1); ++j)
          row[static_cast<std::size_t>(j)] = res.scores.at(static_cast<std::int64_t>(p), j);
        props.push_back({{"label", scenes[i].proposals[p].label},
                         {"predicted", arg},
                         {"scores", row}});
        correct += (arg == scenes[i].proposals[p].label);
        ++total;
      }
      scenes_out.push_back({{"scene", i}, {"proposals", props}, {"tau", res.tau}});
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(total);
  }

  json out = {{"config", ltfe::config_to_json(cfg)}, {"knob", knob}, {"scenes", scenes_out}};
  if (accuracy >= 0.0) out["accuracy"] = accuracy;
  std::cout << out.dump(2) << "\n";
  if (!o.out_dir.empty()) {
    ensure_out_dir(o.out_dir);
    write_json((fs::path(o.out_dir) / "infer.json").string(), out);
  }
  return 0;
}

int cmd_benchmark(const CommonOpts& o, const std::string& arms_kind,
                  const std::vector<double>& knobs, int bench_seeds, int jobs) {
  ltfe::TrainConfig cfg = resolve_config(o);
  ensure_out_dir(o.out_dir);

  std::vector<ltfe::BenchArm> arms;
  if (arms_kind == "baseline") {
    ltfe::TrainConfig base = cfg;
    base.evolution = false;
    arms.push_back({"ltfe", cfg});
    arms.push_back({"baseline", base});
  } else {  // strategies
    for (auto s : {ltfe::InjectionStrategy::progressive, ltfe::InjectionStrategy::equal_step,
                   ltfe::InjectionStrategy::one_shot}) {
      ltfe::TrainConfig c = cfg;
      c.strategy = s;
      arms.push_back({ltfe::strategy_name(s), c});
    }
  }

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < bench_seeds; ++i)
    seeds.push_back(ltfe::derive_seed(cfg.seed, 0xBE9C + static_cast<std::uint64_t>(i)));

  const std::vector<ltfe::BenchCell> cells = ltfe::run_arms(arms, seeds, knobs, jobs);

  const fs::path out(o.out_dir);
  ltfe::write_benchmark_csv((out / "benchmark.csv").string(), cells);
  ltfe::write_benchmark_summary_csv((out / "benchmark_summary.csv").string(), cells);

  json jcells = json::array();
  for (const ltfe::BenchCell& c : cells)
    jcells.push_back(
        {{"arm", c.arm}, {"seed", c.seed}, {"knob", c.knob}, {"accuracy", c.accuracy}});
  json summary = {{"config", ltfe::config_to_json(cfg)},
                  {"arms", arms_kind},
                  {"knobs", knobs},
                  {"seeds", seeds},
                  {"cells", jcells}};
  write_json((out / "benchmark.json").string(), summary);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"liquid temporal feature evolution toolkit"};
  app.require_subcommand(1);

  CommonOpts schedule_o, evolve_o, kernels_o, gradcheck_o, train_o, infer_o, bench_o;
  std::string kernels_model, infer_model;
  double infer_knob = 0.0;
  std::string bench_arms = "baseline";
  std::vector<double> bench_knobs = {0.0, 0.5};
  int bench_seeds = 10, bench_jobs = 1;

  CLI::App* c_schedule = app.add_subcommand("schedule", "print the (t, alpha_t, sigma_t) table");
  attach_common(c_schedule, schedule_o, false);

  CLI::App* c_evolve = app.add_subcommand("evolve", "perturb a feature map for T steps");
  attach_common(c_evolve, evolve_o, true);
  c_evolve->add_option("--input", evolve_o.input_path, "LTF1 feature map")->required();
  c_evolve->add_option("--out", evolve_o.out_dir, "output directory")->required();

  CLI::App* c_kernels = app.add_subcommand("kernels", "dump per-step horizons and kernel norms");
  attach_common(c_kernels, kernels_o, true);
  c_kernels->add_option("--input", kernels_o.input_path, "LTF1 feature map (else synthesized)");
  c_kernels->add_option("--model", kernels_model, "checkpoint stem (else fresh init)");
  c_kernels->add_option("--out", kernels_o.out_dir, "output directory");

  CLI::App* c_gradcheck = app.add_subcommand("gradcheck", "run the gradient-check suite");
  attach_common(c_gradcheck, gradcheck_o, false);

  CLI::App* c_train = app.add_subcommand("train", "train on synthetic scenes");
  attach_common(c_train, train_o, true);
  c_train->add_option("--out", train_o.out_dir, "output directory")->required();

  CLI::App* c_infer = app.add_subcommand("infer", "run inference from a checkpoint");
  attach_common(c_infer, infer_o, true);
  c_infer->add_option("--model", infer_model, "checkpoint stem")->required();
  c_infer->add_option("--input", infer_o.input_path, "LTF1 image tensor (else generated scenes)");
  c_infer->add_option("--knob", infer_knob, "domain-shift knob in [0,1]");
  c_infer->add_option("--out", infer_o.out_dir, "output directory");

  CLI::App* c_bench = app.add_subcommand("benchmark", "train arms and evaluate under shift");
  attach_common(c_bench, bench_o, true);
  c_bench->add_option("--out", bench_o.out_dir, "output directory")->required();
  c_bench->add_option("--arms", bench_arms, "baseline | strategies")
      ->check(CLI::IsMember({"baseline", "strategies"}));
  c_bench->add_option("--knobs", bench_knobs, "shift knobs to evaluate");
  c_bench->add_option("--bench-seeds", bench_seeds, "number of derived seeds");
  c_bench->add_option("--jobs", bench_jobs, "parallel training jobs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_schedule->parsed()) return cmd_schedule(schedule_o);
    if (c_evolve->parsed()) return cmd_evolve(evolve_o);
    if (c_kernels->parsed()) return cmd_kernels(kernels_o, kernels_model);
    if (c_gradcheck->parsed()) return cmd_gradcheck(gradcheck_o);
    if (c_train->parsed()) return cmd_train(train_o);
    if (c_infer->parsed()) return cmd_infer(infer_o, infer_model, infer_knob);
    if (c_bench->parsed())
      return cmd_benchmark(bench_o, bench_arms, bench_knobs, bench_seeds, bench_jobs);
  } catch (const ltfe::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ltfe::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ltfe::DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ltfe::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
