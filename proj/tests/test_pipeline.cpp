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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ltfe/gradsuite.hpp"
#include "ltfe/serialize.hpp"
#include "oracles.hpp"

using namespace ltfe;

namespace {

// Small-but-real configuration for fast tests.
TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.scene_size = 12;
  cfg.scenes = 4;
  cfg.epochs = 1;
  cfg.proposals_per_scene = 3;
  cfg.feat_channels = 4;
  cfg.hidden_dim = 8;
  cfg.field_hidden = 8;
  cfg.schedule.steps = 3;
  cfg.infer_T = 2;
  cfg.ode_steps = 2;
  cfg.eval_scenes = 4;
  return cfg;
}

bool models_identical(const ModelState& a, const ModelState& b) {
  for (int i = 0; i < ModelState::kParamCount; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (a.values[idx].raw() != b.values[idx].raw()) return false;
    if (a.momentum[idx].raw() != b.momentum[idx].raw()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scene generation: bounds, determinism, knob behaviour") {
  TrainConfig cfg = small_config(1);
  Rng r1(123), r2(123);
  ToyScene a = make_scene(r1, cfg, 0.0);
  ToyScene b = make_scene(r2, cfg, 0.0);
  CHECK(a.image.raw() == b.image.raw());
  REQUIRE(a.proposals.size() == 3);
  for (const Proposal& p : a.proposals) {
    CHECK(p.y0 >= 0);
    CHECK(p.x0 >= 0);
    CHECK(p.y1 <= cfg.scene_size);
    CHECK(p.x1 <= cfg.scene_size);
    CHECK(p.y1 > p.y0);
    CHECK(p.x1 > p.x0);
    CHECK(p.label >= 0);
    CHECK(p.label < cfg.num_classes);
  }

  // shifted scenes share content with the unshifted ones (same stream prefix)
  Rng r3(123);
  ToyScene c = make_scene(r3, cfg, 0.5);
  CHECK(c.proposals.size() == a.proposals.size());
  for (std::size_t i = 0; i < a.proposals.size(); ++i) {
    CHECK(c.proposals[i].label == a.proposals[i].label);
    CHECK(c.proposals[i].y0 == a.proposals[i].y0);
  }
  CHECK(c.image.raw() != a.image.raw());  // but pixels are shifted
  CHECK(c.image.all_finite());
}

TEST_CASE("train_step with lr = 0 leaves parameters bit-identical") {
  TrainConfig cfg = small_config(2);
  cfg.lr = 0.0;
  Rng init(derive_seed(cfg.seed, 0));
  ModelState model = ModelState::init(cfg, init);
  ModelState before = model;
  Rng data(derive_seed(cfg.seed, 1));
  ToyScene scene = make_scene(data, cfg, 0.0);
  Rng noise(derive_seed(cfg.seed, 2));
  LossBundle lb = train_step(model, scene, cfg, noise);
  CHECK(std::isfinite(lb.l_total));
  for (int i = 0; i < ModelState::kParamCount; ++i)
    CHECK(model.values[static_cast<std::size_t>(i)].raw() ==
          before.values[static_cast<std::size_t>(i)].raw());
}

TEST_CASE("train_step loss equals the composed module-level oracle") {
  TrainConfig cfg = small_config(3);
  cfg.scene_size = 6;
  cfg.feat_channels = 2;
  cfg.hidden_dim = 6;
  cfg.field_hidden = 6;
  cfg.proposals_per_scene = 2;
  Rng init(derive_seed(cfg.seed, 0));
  ModelState model = ModelState::init(cfg, init);
  Rng srng(derive_seed(cfg.seed, 1));
  ToyScene scene = make_scene(srng, cfg, 0.0);

  // pipeline path
  ModelState trained = model;
  Rng noise1(derive_seed(cfg.seed, 2));
  LossBundle lb = train_step(trained, scene, cfg, noise1);

  // composed path: call the module operations directly with identical draws
  Tape t;
  ModelVars mv = put_model(t, model);
  Var image = t.constant(scene.image);
  Var f0 = extract_features(t, mv, image, cfg);
  Rng noise2(derive_seed(cfg.seed, 2));
  EvolveOptions opt{cfg.strategy, cfg.padding, cfg.literal_eq1};
  std::vector<Var> seq = evolve_sequence(t, f0, cfg.schedule, opt, noise2);
  TemporalEncoding enc = encode_sequence(t, seq, mv.lstm(), mv.fusion());
  OdeConfig ode{cfg.ode_steps, cfg.eps_norm};
  std::vector<Var> kernels = evolve_kernels(t, enc.h_seq, mv.field(), mv[ModelState::w0_kernel], ode);
  Var f_hat = adjust_feature(t, f0, kernels.back(), cfg.padding);

  std::vector<Var> rows_p, rows_q;
  for (const Proposal& p : scene.proposals) {
    rows_p.push_back(t.roi_mean_pool(f0, p.y0, p.y1, p.x0, p.x1));
    rows_q.push_back(t.roi_mean_pool(f_hat, p.y0, p.y1, p.x0, p.x1));
  }
  Var pv = t.stack_rows(rows_p), qv = t.stack_rows(rows_q);
  std::vector<int> labels;
  Tensor targets({static_cast<std::int64_t>(scene.proposals.size()), 4});
  for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
    labels.push_back(scene.proposals[i].label);
    for (int j = 0; j < 4; ++j)
      targets.at(static_cast<std::int64_t>(i), j) = scene.proposals[i].box_target[static_cast<std::size_t>(j)];
  }
  auto [lc, lr] = head_losses(t, pv, qv, labels, targets, mv.heads());
  Var li = intra_loss(t, pv, qv);
  Var le = inter_loss(t, pv, qv, cfg.include_positive);
  LossBundleVars bundle = total_loss(t, li, le, lc, lr, cfg.lambda1, cfg.lambda2);

  CHECK(std::abs(t.value(bundle.l_total)[0] - lb.l_total) < 1e-10);
  CHECK(std::abs(t.value(bundle.l_cls)[0] - lb.l_cls) < 1e-10);
  CHECK(std::abs(t.value(bundle.l_intra)[0] - lb.l_intra) < 1e-10);
}

TEST_CASE("baseline equivalence: disabled evolution trains the classifier standalone") {
  TrainConfig cfg = small_config(4);
  cfg.evolution = true;
  cfg.freeze_evolution = true;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  Rng init(derive_seed(cfg.seed, 0));
  ModelState model = ModelState::init(cfg, init);
  // zero field output layer is the init default; zero W0 on top
  model.values[ModelState::w0_kernel] = Tensor::zeros_like(model.values[ModelState::w0_kernel]);

  Rng srng(derive_seed(cfg.seed, 1));
  ToyScene scene = make_scene(srng, cfg, 0.0);

  ModelState full = model;
  Rng noise(derive_seed(cfg.seed, 2));
  train_step(full, scene, cfg, noise);

  // standalone trainer: same graph without any evolution machinery
  ModelState plain = model;
  {
    Tape t;
    ModelVars mv = put_model(t, plain);
    Var image = t.constant(scene.image);
    Var f0 = extract_features(t, mv, image, cfg);
    std::vector<Var> rows;
    for (const Proposal& p : scene.proposals)
      rows.push_back(t.roi_mean_pool(f0, p.y0, p.y1, p.x0, p.x1));
    Var feats = t.stack_rows(rows);
    std::vector<int> labels;
    Tensor targets({static_cast<std::int64_t>(scene.proposals.size()), 4});
    for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
      labels.push_back(scene.proposals[i].label);
      for (int j = 0; j < 4; ++j)
        targets.at(static_cast<std::int64_t>(i), j) = scene.proposals[i].box_target[static_cast<std::size_t>(j)];
    }
    Var logits = t.add_rowvec(t.matmul(feats, mv[ModelState::cls_w]), mv[ModelState::cls_b]);
    Var reg = t.add_rowvec(t.matmul(feats, mv[ModelState::reg_w]), mv[ModelState::reg_b]);
    Var loss = t.add(t.softmax_xent(logits, labels), t.smooth_l1(reg, targets));
    t.backward(loss);

    // identical SGD update restricted to the non-evolution parameters
    double norm_sq = 0.0;
    std::array<Tensor, ModelState::kParamCount> grads;
    for (int i = 0; i < ModelState::kParamCount; ++i) {
      if (ModelState::is_evolution_param(i)) continue;
      grads[static_cast<std::size_t>(i)] = t.grad(mv[i]);
      for (std::int64_t j = 0; j < grads[static_cast<std::size_t>(i)].size(); ++j)
        norm_sq += grads[static_cast<std::size_t>(i)][j] * grads[static_cast<std::size_t>(i)][j];
    }
    double scale = 1.0;
    if (cfg.grad_clip > 0.0 && std::sqrt(norm_sq) > cfg.grad_clip)
      scale = cfg.grad_clip / std::sqrt(norm_sq);
    for (int i = 0; i < ModelState::kParamCount; ++i) {
      if (ModelState::is_evolution_param(i)) continue;
      const auto idx = static_cast<std::size_t>(i);
      for (std::int64_t j = 0; j < plain.values[idx].size(); ++j) {
        plain.momentum[idx][j] =
            cfg.momentum * plain.momentum[idx][j] + scale * grads[idx][j];
        plain.values[idx][j] -= cfg.lr * plain.momentum[idx][j];
      }
    }
  }

  CHECK(full.values[ModelState::cls_w].raw() == plain.values[ModelState::cls_w].raw());
  CHECK(full.values[ModelState::cls_b].raw() == plain.values[ModelState::cls_b].raw());
  CHECK(full.values[ModelState::reg_w].raw() == plain.values[ModelState::reg_w].raw());
  CHECK(full.values[ModelState::conv1_w].raw() == plain.values[ModelState::conv1_w].raw());
  // evolution parameters stayed frozen
  CHECK(full.values[ModelState::w0_kernel].raw() ==
        Tensor::zeros_like(full.values[ModelState::w0_kernel]).raw());
}

TEST_CASE("degenerate configuration reduces to a learning classifier") {
  TrainConfig cfg = small_config(5);
  cfg.evolution = true;
  cfg.freeze_evolution = true;
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  cfg.lr = 0.05;
  Rng init(derive_seed(cfg.seed, 0));
  ModelState model = ModelState::init(cfg, init);
  model.values[ModelState::w0_kernel] = Tensor::zeros_like(model.values[ModelState::w0_kernel]);

  Rng srng(derive_seed(cfg.seed, 1));
  std::vector<ToyScene> scenes;
  for (int i = 0; i < 4; ++i) scenes.push_back(make_scene(srng, cfg, 0.0));

  Rng noise(derive_seed(cfg.seed, 2));
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    LossBundle lb = train_step(model, scenes[static_cast<std::size_t>(step % 4)], cfg, noise);
    if (step == 0) first = lb.l_cls;
    last = lb.l_cls;
  }
  CHECK(last < first);
}

TEST_CASE("infer: disabled evolution equals the baseline path bit-exactly") {
  TrainConfig cfg = small_config(6);
  Rng init(derive_seed(cfg.seed, 0));
  ModelState model = ModelState::init(cfg, init);
  // zero field (init default) + zero W0: adjustment is the identity
  model.values[ModelState::w0_kernel] = Tensor::zeros_like(model.values[ModelState::w0_kernel]);

  Rng srng(derive_seed(cfg.seed, 1));
  ToyScene scene = make_scene(srng, cfg, 0.3);

  TrainConfig base = cfg;
  base.infer_T = 0;  // pure F0 path
  Rng r1(7), r2(7), r3(7);
  InferResult with_evo = infer(model, scene, cfg, r1);
  InferResult without = infer(model, scene, base, r2);
  CHECK(with_evo.scores.raw() == without.scores.raw());
  CHECK(with_evo.boxes.raw() == without.boxes.raw());

  TrainConfig off = cfg;
  off.evolution = false;
  InferResult disabled = infer(model, scene, off, r3);
  CHECK(disabled.scores.raw() == without.scores.raw());

  // determinism under a fixed seed
  Rng r4(7);
  InferResult again = infer(model, scene, cfg, r4);
  CHECK(again.scores.raw() == with_evo.scores.raw());
}

TEST_CASE("full training is reproducible and finite") {
  TrainConfig cfg = small_config(7);
  cfg.epochs = 2;
  TrainResult a = train_model(cfg);
  TrainResult b = train_model(cfg);
  CHECK(models_identical(a.model, b.model));
  REQUIRE(a.metrics.size() == b.metrics.size());
  CHECK(a.rejected_steps == 0);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].losses.l_total == b.metrics[i].losses.l_total);
    CHECK(std::isfinite(a.metrics[i].losses.l_total));
  }
}

TEST_CASE("kernel diagnostics expose horizons in [0,1]") {
  TrainConfig cfg = small_config(8);
  Rng init(derive_seed(cfg.seed, 0));
  ModelState model = ModelState::init(cfg, init);
  Rng srng(derive_seed(cfg.seed, 1));
  ToyScene scene = make_scene(srng, cfg, 0.0);
  Tape t;
  ModelVars mv = put_model(t, model);
  Tensor f0 = t.value(extract_features(t, mv, t.constant(scene.image), cfg));
  Rng rng(derive_seed(cfg.seed, 3));
  KernelDiagnostics diag = kernel_diagnostics(model, f0, cfg, rng);
  REQUIRE(diag.tau.size() == static_cast<std::size_t>(cfg.schedule.steps));
  double best = 0.0;
  for (double tau : diag.tau) {
    CHECK(tau >= 0.0);
    CHECK(tau <= 1.0);
    best = std::max(best, tau);
  }
  CHECK(best == 1.0);
  for (double n : diag.kernel_norm) CHECK(n > 0.0);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  TrainConfig cfg = small_config(9);
  TrainResult r = train_model(cfg);
  const std::string stem =
      (std::filesystem::temp_directory_path() / "ltfe_test_ckpt").string();
  save_checkpoint(stem, r.model, cfg);
  TrainConfig loaded_cfg;
  ModelState loaded = load_checkpoint(stem, &loaded_cfg);
  CHECK(models_identical(r.model, loaded));
  CHECK(loaded_cfg.seed == cfg.seed);
  CHECK(loaded_cfg.scene_size == cfg.scene_size);
  std::remove((stem + ".json").c_str());
  std::remove((stem + ".ltfc").c_str());
}

TEST_CASE("config JSON round trip, overrides, unknown keys") {
  TrainConfig cfg = small_config(10);
  cfg.strategy = InjectionStrategy::equal_step;
  cfg.padding = Padding::reflect;
  TrainConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));

  TrainConfig o = small_config(11);
  apply_override(o, "schedule.gamma=1.5");
  apply_override(o, "lr=0.005");
  apply_override(o, "strategy=one_shot");
  apply_override(o, "evolution=false");
  apply_override(o, "infer_t=1");
  CHECK(o.schedule.gamma == 1.5);
  CHECK(o.lr == 0.005);
  CHECK(o.strategy == InjectionStrategy::one_shot);
  CHECK(o.evolution == false);
  CHECK(o.infer_T == 1);
  CHECK_THROWS_AS(apply_override(o, "no_such_key=1"), DomainError);
  CHECK_THROWS_AS(apply_override(o, "schedule.bogus=1"), DomainError);
  CHECK_THROWS_AS(apply_override(o, "lr"), DomainError);

  nlohmann::json j = config_to_json(cfg);
  j["mystery"] = 1;
  CHECK_THROWS_AS(config_from_json(j), DomainError);
}

TEST_CASE("benchmark harness produces a full deterministic grid") {
  TrainConfig cfg = small_config(12);
  cfg.scenes = 2;
  cfg.eval_scenes = 2;
  TrainConfig base = cfg;
  base.evolution = false;
  std::vector<BenchArm> arms = {{"ltfe", cfg}, {"baseline", base}};
  std::vector<std::uint64_t> seeds = {11, 22};
  std::vector<double> knobs = {0.0, 0.5};

  auto cells = run_arms(arms, seeds, knobs, 1);
  REQUIRE(cells.size() == 8);
  CHECK(cells[0].arm == "ltfe");
  CHECK(cells[0].seed == 11);
  CHECK(cells[0].knob == 0.0);
  for (const BenchCell& c : cells) {
    CHECK(c.accuracy >= 0.0);
    CHECK(c.accuracy <= 1.0);
  }

  // parallel execution gives identical results in identical order
  auto cells2 = run_arms(arms, seeds, knobs, 4);
  REQUIRE(cells2.size() == cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].arm == cells2[i].arm);
    CHECK(cells[i].accuracy == cells2[i].accuracy);
  }

  // empty knob list: empty table, still well-formed
  auto none = run_arms(arms, seeds, {}, 1);
  CHECK(none.empty());
}

TEST_CASE("metrics CSV has the documented schema") {
  TrainConfig cfg = small_config(13);
  cfg.scenes = 2;
  cfg.epochs = 1;
  TrainResult r = train_model(cfg);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ltfe_test_metrics.csv").string();
  write_metrics_csv(path, r.metrics);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,step,l_cls,l_reg,l_intra,l_inter,l_align,l_total");
  int lines = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);
  std::remove(path.c_str());
}

TEST_CASE("gradcheck suite passes module tolerances") {
  auto results = run_gradcheck_suite(42);
  REQUIRE(results.count("core"));
  REQUIRE(results.count("pipeline"));
  for (const auto& [name, err] : results) {
    INFO(name, " -> ", err);
    if (name == "pipeline")
      CHECK(err < 1e-4);
    else
      CHECK(err < 1e-6);
  }
}
