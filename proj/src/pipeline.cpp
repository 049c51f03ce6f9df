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

#include "ltfe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "ltfe/kernels.hpp"

namespace ltfe {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

// Deterministic stream tags hanging off cfg.seed / eval seeds.
constexpr std::uint64_t kStreamInit = 0;
constexpr std::uint64_t kStreamData = 1;
constexpr std::uint64_t kStreamTrain = 2;
constexpr std::uint64_t kStreamEvalScenes = 100;
constexpr std::uint64_t kStreamEvalInfer = 200;
constexpr std::uint64_t kStreamEvalSeed = 0xE7A1;

}  // namespace

void TrainConfig::validate() const {
  schedule.validate();
  if (infer_T < 0 || infer_T > schedule.steps)
    throw DomainError("config: infer_t must lie in [0, schedule.t]");
  if (lr < 0.0) throw DomainError("config: lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw DomainError("config: momentum must be in [0,1)");
  if (epochs < 0) throw DomainError("config: epochs must be >= 0");
  if (kernel_k < 1 || kernel_k % 2 == 0) throw DomainError("config: kernel_k must be odd");
  if (layer_index != 1 && layer_index != 2) throw DomainError("config: layer_index must be 1 or 2");
  if (scenes < 1) throw DomainError("config: scenes must be >= 1");
  if (scene_size < 6) throw DomainError("config: scene_size must be >= 6");
  if (proposals_per_scene < 2) throw DomainError("config: proposals_per_scene must be >= 2");
  if (num_classes < 2) throw DomainError("config: num_classes must be >= 2");
  if (eval_scenes < 1) throw DomainError("config: eval_scenes must be >= 1");
  if (feat_channels < 1 || hidden_dim < 1 || field_hidden < 1)
    throw DomainError("config: model dimensions must be positive");
  if (ode_steps < 1) throw DomainError("config: ode_steps must be >= 1");
  if (eps_norm <= 0.0) throw DomainError("config: eps_norm must be > 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw DomainError("config: lambda1/lambda2 must be >= 0");
  if (grad_clip < 0.0) throw DomainError("config: grad_clip must be >= 0");
}

// -- scenes -------------------------------------------------------------------

namespace {

// Class palette: muted colors so the brightness/noise shift actually bites.
void class_color(int label, int num_classes, Rng& rng, double* rgb) {
  static constexpr double kBase[3][3] = {
      {0.80, 0.32, 0.26}, {0.28, 0.76, 0.32}, {0.30, 0.36, 0.80}};
  if (label < 3) {
    for (int c = 0; c < 3; ++c) rgb[c] = kBase[label][c];
  } else {
    const double phase = 6.283185307179586 * static_cast<double>(label) /
                         static_cast<double>(num_classes);
    for (int c = 0; c < 3; ++c) rgb[c] = 0.5 + 0.35 * std::sin(phase + 2.0944 * c);
  }
  for (int c = 0; c < 3; ++c) rgb[c] += rng.uniform(-0.06, 0.06);
}

void shift_image(Tensor& img, double knob, Rng& rng) {
  if (knob <= 0.0) return;
  const double sigma = 2.0 * knob;
  GaussianKernel g = gaussian_kernel(sigma, std::max<int>(1, static_cast<int>(img.dim(0) / 2)));
  {
    Tape t;
    Var blurred = t.blur2d(t.constant(img), g.taps1d, Padding::reflect);
    img = t.value(blurred);
  }
  const double bright = 1.0 - 0.4 * knob;
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] *= bright;
  const double noise = 0.3 * knob;
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] += noise * rng.normal();
}

}  // namespace

ToyScene make_scene(Rng& rng, const TrainConfig& cfg, double knob) {
  const int s = cfg.scene_size;
  ToyScene scene;
  scene.image = Tensor({s, s, 3});
  Tensor& img = scene.image;

  double base[3];
  for (double& b : base) b = rng.uniform(0.25, 0.45);
  const double gx = rng.uniform(-0.12, 0.12);
  const double gy = rng.uniform(-0.12, 0.12);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double fy = static_cast<double>(y) / (s - 1) - 0.5;
      const double fx = static_cast<double>(x) / (s - 1) - 0.5;
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = base[c] + gx * fx + gy * fy + 0.02 * rng.normal();
    }

  // One object per grid cell, cells visited in a shuffled order.
  const int n = cfg.proposals_per_scene;
  int grid = 1;
  while (grid * grid < n) ++grid;
  std::vector<int> cells(static_cast<std::size_t>(grid * grid));
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  for (std::size_t i = cells.size(); i > 1; --i)
    std::swap(cells[i - 1], cells[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(i)))]);

  const double cell = static_cast<double>(s) / grid;
  for (int obj = 0; obj < n; ++obj) {
    const int cy_idx = cells[static_cast<std::size_t>(obj)] / grid;
    const int cx_idx = cells[static_cast<std::size_t>(obj)] % grid;
    const int label = static_cast<int>(rng.below(cfg.num_classes));
    double rgb[3];
    class_color(label, cfg.num_classes, rng, rgb);

    const double hs = cell * rng.uniform(0.22, 0.36);  // half-size
    const double cy = (cy_idx + 0.5) * cell + rng.uniform(-0.12, 0.12) * cell;
    const double cx = (cx_idx + 0.5) * cell + rng.uniform(-0.12, 0.12) * cell;

    const int shape = label % 3;  // 0 square, 1 disk, 2 diamond
    for (int y = std::max(0, static_cast<int>(cy - hs)); y <= std::min(s - 1, static_cast<int>(cy + hs)); ++y)
      for (int x = std::max(0, static_cast<int>(cx - hs)); x <= std::min(s - 1, static_cast<int>(cx + hs)); ++x) {
        const double dy = y - cy, dx = x - cx;
        bool inside = false;
        switch (shape) {
          case 0: inside = std::abs(dy) <= hs && std::abs(dx) <= hs; break;
          case 1: inside = dy * dy + dx * dx <= hs * hs; break;
          default: inside = std::abs(dy) + std::abs(dx) <= hs; break;
        }
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
      }

    // True box, then a jittered proposal rectangle around it.
    const int by0 = std::max(0, static_cast<int>(std::floor(cy - hs)));
    const int bx0 = std::max(0, static_cast<int>(std::floor(cx - hs)));
    const int by1 = std::min(s, static_cast<int>(std::ceil(cy + hs)) + 1);
    const int bx1 = std::min(s, static_cast<int>(std::ceil(cx + hs)) + 1);

    Proposal p;
    p.label = label;
    p.y0 = std::clamp(by0 + static_cast<int>(rng.below(5)) - 2, 0, s - 2);
    p.x0 = std::clamp(bx0 + static_cast<int>(rng.below(5)) - 2, 0, s - 2);
    p.y1 = std::clamp(by1 + static_cast<int>(rng.below(5)) - 2, p.y0 + 2, s);
    p.x1 = std::clamp(bx1 + static_cast<int>(rng.below(5)) - 2, p.x0 + 2, s);

    const double pcy = 0.5 * (p.y0 + p.y1), pcx = 0.5 * (p.x0 + p.x1);
    const double ph = p.y1 - p.y0, pw = p.x1 - p.x0;
    const double tcy = 0.5 * (by0 + by1), tcx = 0.5 * (bx0 + bx1);
    const double th = std::max(1, by1 - by0), tw = std::max(1, bx1 - bx0);
    p.box_target = {(tcy - pcy) / ph, (tcx - pcx) / pw, std::log(th / ph), std::log(tw / pw)};
    scene.proposals.push_back(p);
  }

  shift_image(img, knob, rng);
  return scene;
}

std::vector<ToyScene> make_scenes(std::uint64_t seed, int count, const TrainConfig& cfg,
                                  double knob) {
  std::vector<ToyScene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(make_scene(rng, cfg, knob));
  }
  return out;
}

// -- model ---------------------------------------------------------------------

const std::array<const char*, ModelState::kParamCount>& ModelState::names() {
  static const std::array<const char*, kParamCount> n = {
      "conv1_w", "conv1_b", "conv2_w", "conv2_b",
      "lstm_wi", "lstm_wf", "lstm_wo", "lstm_wg",
      "lstm_bi", "lstm_bf", "lstm_bo", "lstm_bg",
      "fusion_wp",
      "field_w1", "field_b1", "field_w2", "field_b2",
      "w0_kernel",
      "cls_w", "cls_b", "reg_w", "reg_b"};
  return n;
}

bool ModelState::is_evolution_param(int id) {
  return id >= lstm_wi && id <= w0_kernel;
}

ModelState ModelState::init(const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelState m;
  const int f = cfg.feat_channels;

  auto uniform = [&rng](std::vector<std::int64_t> shape, double bound) {
    Tensor t(std::move(shape));
    rng.fill_uniform(t, -bound, bound);
    return t;
  };

  m.values[conv1_w] = uniform({3, 3, 3, f}, 1.0 / std::sqrt(27.0));
  m.values[conv1_b] = Tensor({f});
  m.values[conv2_w] = uniform({3, 3, f, f}, 1.0 / std::sqrt(9.0 * f));
  m.values[conv2_b] = Tensor({f});

  LstmParams lstm = LstmParams::init(f, cfg.hidden_dim, rng);
  m.values[lstm_wi] = std::move(lstm.w_i);
  m.values[lstm_wf] = std::move(lstm.w_f);
  m.values[lstm_wo] = std::move(lstm.w_o);
  m.values[lstm_wg] = std::move(lstm.w_g);
  m.values[lstm_bi] = std::move(lstm.b_i);
  m.values[lstm_bf] = std::move(lstm.b_f);
  m.values[lstm_bo] = std::move(lstm.b_o);
  m.values[lstm_bg] = std::move(lstm.b_g);

  m.values[fusion_wp] =
      uniform({cfg.hidden_dim + f, cfg.hidden_dim}, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim + f)));

  VectorFieldParams field =
      VectorFieldParams::init(cfg.kernel_k, f, f, cfg.hidden_dim, cfg.field_hidden, rng);
  m.values[field_w1] = std::move(field.w1);
  m.values[field_b1] = std::move(field.b1);
  m.values[field_w2] = std::move(field.w2);
  m.values[field_b2] = std::move(field.b2);

  m.values[w0_kernel] = identity_kernel(cfg.kernel_k, f, 0.1);

  const double head_bound = 1.0 / std::sqrt(static_cast<double>(f));
  m.values[cls_w] = uniform({f, cfg.num_classes}, head_bound);
  m.values[cls_b] = Tensor({cfg.num_classes});
  m.values[reg_w] = uniform({f, 4}, head_bound);
  m.values[reg_b] = Tensor({4});

  for (int i = 0; i < kParamCount; ++i) m.momentum[static_cast<std::size_t>(i)] = Tensor::zeros_like(m.values[static_cast<std::size_t>(i)]);
  return m;
}

LstmVars ModelVars::lstm() const {
  return {v[ModelState::lstm_wi], v[ModelState::lstm_wf], v[ModelState::lstm_wo],
          v[ModelState::lstm_wg], v[ModelState::lstm_bi], v[ModelState::lstm_bf],
          v[ModelState::lstm_bo], v[ModelState::lstm_bg]};
}

FusionVars ModelVars::fusion() const { return {v[ModelState::fusion_wp]}; }

FieldVars ModelVars::field() const {
  return {v[ModelState::field_w1], v[ModelState::field_b1], v[ModelState::field_w2],
          v[ModelState::field_b2]};
}

HeadVars ModelVars::heads() const {
  return {v[ModelState::cls_w], v[ModelState::cls_b], v[ModelState::reg_w],
          v[ModelState::reg_b]};
}

ModelVars put_model(Tape& tape, const ModelState& model) {
  ModelVars mv;
  for (int i = 0; i < ModelState::kParamCount; ++i)
    mv.v[static_cast<std::size_t>(i)] = tape.param(model.values[static_cast<std::size_t>(i)]);
  return mv;
}

Var extract_features(Tape& tape, const ModelVars& mv, Var image, const TrainConfig& cfg) {
  Var a1 = tape.relu(tape.add_channels(tape.conv2d(image, mv[ModelState::conv1_w], cfg.padding),
                                       mv[ModelState::conv1_b]));
  if (cfg.layer_index == 1) return a1;
  return tape.relu(tape.add_channels(tape.conv2d(a1, mv[ModelState::conv2_w], cfg.padding),
                                     mv[ModelState::conv2_b]));
}

// -- forward graph ----------------------------------------------------------------

namespace {

Var pool_proposals(Tape& tape, Var map, const std::vector<Proposal>& props) {
  std::vector<Var> rows;
  rows.reserve(props.size());
  for (const Proposal& p : props)
    rows.push_back(tape.roi_mean_pool(map, p.y0, p.y1, p.x0, p.x1));
  return tape.stack_rows(rows);
}

ProposalBatch scene_batch(const ToyScene& scene) {
  if (scene.proposals.empty()) throw DomainError("scene has no proposals");
  ProposalBatch b;
  b.labels.reserve(scene.proposals.size());
  Tensor targets({static_cast<std::int64_t>(scene.proposals.size()), 4});
  for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
    b.labels.push_back(scene.proposals[i].label);
    for (int j = 0; j < 4; ++j)
      targets.at(static_cast<std::int64_t>(i), j) = scene.proposals[i].box_target[static_cast<std::size_t>(j)];
  }
  b.box_targets = std::move(targets);
  return b;
}

}  // namespace

ForwardGraph build_train_graph(Tape& tape, const ModelVars& mv, const ToyScene& scene,
                               const TrainConfig& cfg, Rng& rng) {
  ForwardGraph g;
  Var image = tape.constant(scene.image);
  g.f0 = extract_features(tape, mv, image, cfg);

  if (cfg.evolution) {
    EvolveOptions opt{cfg.strategy, cfg.padding, cfg.literal_eq1};
    g.feature_seq = evolve_sequence(tape, g.f0, cfg.schedule, opt, rng);
    TemporalEncoding enc = encode_sequence(tape, g.feature_seq, mv.lstm(), mv.fusion());
    g.encodings = enc.h_seq;
    OdeConfig ode{cfg.ode_steps, cfg.eps_norm};
    for (int t = 1; t <= static_cast<int>(g.encodings.size()); ++t)
      g.taus.push_back(horizon(tape, g.encodings, t, ode));
    FieldVars field = mv.field();
    for (int t = 1; t <= static_cast<int>(g.encodings.size()); ++t) {
      Var w = rk4_solve(tape, field, mv[ModelState::w0_kernel],
                        g.encodings[static_cast<std::size_t>(t - 1)],
                        g.taus[static_cast<std::size_t>(t - 1)], ode);
      g.kernels.push_back(w);
      g.adjusted.push_back(adjust_feature(tape, g.f0, w, cfg.padding));
    }
    g.f_hat = g.adjusted.back();
  } else {
    g.f_hat = g.f0;
  }

  ProposalBatch batch = scene_batch(scene);
  g.proposals = pool_proposals(tape, g.f0, scene.proposals);
  g.proposals_hat =
      cfg.evolution ? pool_proposals(tape, g.f_hat, scene.proposals) : g.proposals;

  auto [l_cls, l_reg] =
      head_losses(tape, g.proposals, g.proposals_hat, batch.labels, batch.box_targets, mv.heads());
  // Disabled terms stay out of the graph entirely.
  Var l_intra = cfg.evolution && cfg.lambda1 > 0.0
                    ? intra_loss(tape, g.proposals, g.proposals_hat)
                    : tape.constant(Tensor::scalar(0.0));
  Var l_inter = cfg.evolution && cfg.lambda2 > 0.0
                    ? inter_loss(tape, g.proposals, g.proposals_hat, cfg.include_positive)
                    : tape.constant(Tensor::scalar(0.0));
  g.losses = total_loss(tape, l_intra, l_inter, l_cls, l_reg, cfg.lambda1, cfg.lambda2);
  return g;
}

// -- training ------------------------------------------------------------------------

namespace {

bool param_trainable(const TrainConfig& cfg, int id) {
  if (ModelState::is_evolution_param(id)) return cfg.evolution && !cfg.freeze_evolution;
  if (id == ModelState::conv2_w || id == ModelState::conv2_b) return cfg.layer_index >= 2;
  return true;
}

void sgd_update(ModelState& model, Tape& tape, const ModelVars& mv, const TrainConfig& cfg) {
  std::array<Tensor, ModelState::kParamCount> grads;
  double norm_sq = 0.0;
  for (int i = 0; i < ModelState::kParamCount; ++i) {
    if (!param_trainable(cfg, i)) continue;
    grads[static_cast<std::size_t>(i)] = tape.grad(mv[i]);
    const Tensor& g = grads[static_cast<std::size_t>(i)];
    norm_sq += K().sumsq(g.data(), static_cast<std::size_t>(g.size()));
  }
  double clip_scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
  }
  for (int i = 0; i < ModelState::kParamCount; ++i) {
    if (!param_trainable(cfg, i)) continue;
    const std::size_t idx = static_cast<std::size_t>(i);
    Tensor& v = model.momentum[idx];
    Tensor& p = model.values[idx];
    const Tensor& g = grads[idx];
    const auto n = static_cast<std::size_t>(p.size());
    K().scale(cfg.momentum, v.data(), v.data(), n);
    K().axpy(clip_scale, g.data(), v.data(), n);
    K().axpy(-cfg.lr, v.data(), p.data(), n);
  }
}

}  // namespace

LossBundle train_step(ModelState& model, const ToyScene& scene, const TrainConfig& cfg,
                      Rng& rng) {
  cfg.validate();
  Tape tape;
  ModelVars mv = put_model(tape, model);
  ForwardGraph g = build_train_graph(tape, mv, scene, cfg, rng);
  LossBundle lb = read_bundle(tape, g.losses);
  if (!std::isfinite(lb.l_total))
    throw NumericalError("train_step: non-finite total loss; step rejected");
  tape.backward(g.losses.l_total);
  sgd_update(model, tape, mv, cfg);
  return lb;
}

TrainResult train_model(const TrainConfig& cfg) {
  cfg.validate();
  Rng init_rng(derive_seed(cfg.seed, kStreamInit));
  TrainResult result{ModelState::init(cfg, init_rng), {}, 0};
  const std::vector<ToyScene> scenes =
      make_scenes(derive_seed(cfg.seed, kStreamData), cfg.scenes, cfg, 0.0);
  Rng step_rng(derive_seed(cfg.seed, kStreamTrain));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      StepStats row;
      row.epoch = epoch;
      row.step = static_cast<int>(i);
      try {
        row.losses = train_step(result.model, scenes[i], cfg, step_rng);
      } catch (const NumericalError&) {
        row.losses = LossBundle{};
        row.losses.l_total = std::numeric_limits<double>::quiet_NaN();
        ++result.rejected_steps;
      }
      result.metrics.push_back(row);
    }
  }
  return result;
}

// -- inference -----------------------------------------------------------------------

InferResult infer(const ModelState& model, const ToyScene& scene, const TrainConfig& cfg,
                  Rng& rng) {
  cfg.validate();
  Tape tape;
  ModelVars mv = put_model(tape, model);
  Var image = tape.constant(scene.image);
  Var f0 = extract_features(tape, mv, image, cfg);

  InferResult out;
  Var f_hat = f0;
  if (cfg.evolution && cfg.infer_T > 0) {
    EvolutionSchedule s = cfg.schedule;
    s.steps = cfg.infer_T;
    EvolveOptions opt{cfg.strategy, cfg.padding, cfg.literal_eq1};
    std::vector<Var> seq = evolve_sequence(tape, f0, s, opt, rng);
    TemporalEncoding enc = encode_sequence(tape, seq, mv.lstm(), mv.fusion());
    OdeConfig ode{cfg.ode_steps, cfg.eps_norm};
    Var tau = horizon(tape, enc.h_seq, cfg.infer_T, ode);
    Var w = rk4_solve(tape, mv.field(), mv[ModelState::w0_kernel], enc.h_seq.back(), tau, ode);
    f_hat = adjust_feature(tape, f0, w, cfg.padding);
    out.tau.push_back(tape.value(tau)[0]);
    const Tensor& wv = tape.value(w);
    out.kernel_norms.push_back(
        std::sqrt(K().sumsq(wv.data(), static_cast<std::size_t>(wv.size()))));
  }

  Var feats = pool_proposals(tape, f_hat, scene.proposals);
  Var logits = tape.add_rowvec(tape.matmul(feats, mv[ModelState::cls_w]), mv[ModelState::cls_b]);
  Var boxes = tape.add_rowvec(tape.matmul(feats, mv[ModelState::reg_w]), mv[ModelState::reg_b]);

  const Tensor& z = tape.value(logits);
  const std::int64_t m = z.dim(0), c = z.dim(1);
  out.scores = Tensor({m, c});
  for (std::int64_t i = 0; i < m; ++i) {
    double mx = z.at(i, 0);
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, z.at(i, j));
    double zsum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      out.scores.at(i, j) = std::exp(z.at(i, j) - mx);
      zsum += out.scores.at(i, j);
    }
    for (std::int64_t j = 0; j < c; ++j) out.scores.at(i, j) /= zsum;
  }
  out.boxes = tape.value(boxes);
  return out;
}

double evaluate_accuracy(const ModelState& model, const TrainConfig& cfg, double knob,
                         std::uint64_t eval_seed) {
  const std::vector<ToyScene> scenes =
      make_scenes(derive_seed(eval_seed, kStreamEvalScenes), cfg.eval_scenes, cfg, knob);
  std::int64_t correct = 0, total = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Rng rng(derive_seed(eval_seed, kStreamEvalInfer + i));
    InferResult res = infer(model, scenes[i], cfg, rng);
    for (std::size_t p = 0; p < scenes[i].proposals.size(); ++p) {
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < res.scores.dim(1); ++j)
        if (res.scores.at(static_cast<std::int64_t>(p), j) >
            res.scores.at(static_cast<std::int64_t>(p), arg))
          arg = j;
      correct += (arg == scenes[i].proposals[p].label);
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

KernelDiagnostics kernel_diagnostics(const ModelState& model, const Tensor& f0_map,
                                     const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (f0_map.rank() != 3 || f0_map.dim(2) != cfg.feat_channels)
    throw ShapeError("kernel_diagnostics: feature map must be [h,w," +
                     std::to_string(cfg.feat_channels) + "]");
  Tape tape;
  ModelVars mv = put_model(tape, model);
  Var f0 = tape.constant(f0_map);
  EvolveOptions opt{cfg.strategy, cfg.padding, cfg.literal_eq1};
  std::vector<Var> seq = evolve_sequence(tape, f0, cfg.schedule, opt, rng);
  TemporalEncoding enc = encode_sequence(tape, seq, mv.lstm(), mv.fusion());
  OdeConfig ode{cfg.ode_steps, cfg.eps_norm};
  std::vector<Var> kernels = evolve_kernels(tape, enc.h_seq, mv.field(), mv[ModelState::w0_kernel], ode);

  KernelDiagnostics diag;
  for (int t = 1; t <= static_cast<int>(enc.h_seq.size()); ++t) {
    Var tau = horizon(tape, enc.h_seq, t, ode);
    diag.tau.push_back(tape.value(tau)[0]);
    const Tensor& h = tape.value(enc.h_seq[static_cast<std::size_t>(t - 1)]);
    diag.encoding_norm.push_back(std::sqrt(K().sumsq(h.data(), static_cast<std::size_t>(h.size()))));
    const Tensor& w = tape.value(kernels[static_cast<std::size_t>(t - 1)]);
    diag.kernel_norm.push_back(std::sqrt(K().sumsq(w.data(), static_cast<std::size_t>(w.size()))));
  }
  return diag;
}

// -- benchmark harness ------------------------------------------------------------------

std::vector<BenchCell> run_arms(const std::vector<BenchArm>& arms,
                                const std::vector<std::uint64_t>& seeds,
                                const std::vector<double>& knobs, int jobs) {
  struct Task {
    std::size_t arm = 0, seed = 0;
  };
  std::vector<Task> tasks;
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({a, s});

  // cell slot: [arm][seed][knob], filled independently
  std::vector<BenchCell> cells(arms.size() * seeds.size() * knobs.size());
  auto slot = [&](std::size_t a, std::size_t s, std::size_t k) -> BenchCell& {
    return cells[(a * seeds.size() + s) * knobs.size() + k];
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task t = tasks[i];
      TrainConfig cfg = arms[t.arm].cfg;
      cfg.seed = seeds[t.seed];
      TrainResult trained = train_model(cfg);
      for (std::size_t k = 0; k < knobs.size(); ++k) {
        BenchCell& c = slot(t.arm, t.seed, k);
        c.arm = arms[t.arm].name;
        c.seed = seeds[t.seed];
        c.knob = knobs[k];
        c.accuracy = evaluate_accuracy(trained.model, cfg, knobs[k],
                                       derive_seed(seeds[t.seed], kStreamEvalSeed));
      }
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  return cells;
}

}  // namespace ltfe
