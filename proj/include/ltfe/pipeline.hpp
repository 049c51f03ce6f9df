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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ltfe/align.hpp"
#include "ltfe/liquid.hpp"
#include "ltfe/perturb.hpp"
#include "ltfe/temporal.hpp"

namespace ltfe {

struct TrainConfig {
  EvolutionSchedule schedule{};  // alpha0 0.2, lambda 0.2, sigma0 1, gamma 1.2, T 8
  int infer_T = 2;
  double lr = 0.02;
  double momentum = 0.9;
  int epochs = 5;
  std::uint64_t seed = 0;
  int kernel_k = 3;  // dynamic kernel spatial size
  InjectionStrategy strategy = InjectionStrategy::progressive;
  int layer_index = 1;  // extractor stage whose output is evolved (1 or 2)

  // synthetic-scene harness
  int scenes = 200;
  int scene_size = 32;
  int proposals_per_scene = 4;
  int num_classes = 3;
  int eval_scenes = 40;

  // model dimensions
  int feat_channels = 8;
  int hidden_dim = 64;    // LSTM / encoding dimension d
  int field_hidden = 64;  // vector-field MLP hidden width

  // solver, losses, switches
  int ode_steps = 4;
  double eps_norm = 1e-12;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double grad_clip = 10.0;  // global gradient norm; 0 disables
  bool include_positive = false;
  bool literal_eq1 = false;
  bool evolution = true;         // false: plain extractor+heads baseline
  bool freeze_evolution = false;  // keep evolution in the graph but do not train it
  Padding padding = Padding::circular;

  void validate() const;
};

struct Proposal {
  int y0, x0, y1, x1;  // half-open pixel rectangle
  int label;
  std::array<double, 4> box_target;  // (dcy, dcx, log dh, log dw) vs the true box
};

/// Synthetic scene: colored geometric objects over a gradient background.
/// knob in [0,1] applies the test-time shift (blur sigma 2*knob, brightness
/// 1 - 0.4*knob, additive noise std 0.3*knob); knob 0 is the source domain.
struct ToyScene {
  Tensor image;  // [s, s, 3]
  std::vector<Proposal> proposals;
};

ToyScene make_scene(Rng& rng, const TrainConfig& cfg, double knob);
std::vector<ToyScene> make_scenes(std::uint64_t seed, int count, const TrainConfig& cfg,
                                  double knob);

struct ModelState {
  enum Id : int {
    conv1_w, conv1_b, conv2_w, conv2_b,
    lstm_wi, lstm_wf, lstm_wo, lstm_wg, lstm_bi, lstm_bf, lstm_bo, lstm_bg,
    fusion_wp,
    field_w1, field_b1, field_w2, field_b2,
    w0_kernel,
    cls_w, cls_b, reg_w, reg_b,
    kParamCount
  };

  std::array<Tensor, kParamCount> values;
  std::array<Tensor, kParamCount> momentum;

  static const std::array<const char*, kParamCount>& names();
  /// LSTM, fusion, vector field and W0 kernel (everything the evolution path owns).
  static bool is_evolution_param(int id);
  static ModelState init(const TrainConfig& cfg, Rng& rng);
};

/// Tape handles for every parameter, indexed by ModelState::Id.
struct ModelVars {
  std::array<Var, ModelState::kParamCount> v;
  Var operator[](int id) const { return v[static_cast<std::size_t>(id)]; }

  LstmVars lstm() const;
  FusionVars fusion() const;
  FieldVars field() const;
  HeadVars heads() const;
};

ModelVars put_model(Tape& tape, const ModelState& model);

/// Extractor stages up to cfg.layer_index applied to a [s,s,3] image node.
Var extract_features(Tape& tape, const ModelVars& mv, Var image, const TrainConfig& cfg);

/// The full recorded training-step graph, exposed for tests and diagnostics.
struct ForwardGraph {
  Var f0;
  std::vector<Var> feature_seq;  // perturbed maps (empty when evolution off)
  std::vector<Var> encodings;
  std::vector<Var> taus;
  std::vector<Var> kernels;
  std::vector<Var> adjusted;  // residual-adjusted maps, one per step
  Var f_hat;                  // map the evolved proposals pool from
  Var proposals, proposals_hat;
  LossBundleVars losses;
};

ForwardGraph build_train_graph(Tape& tape, const ModelVars& mv, const ToyScene& scene,
                               const TrainConfig& cfg, Rng& rng);

/// One SGD-with-momentum step on one scene. Throws NumericalError (without
/// touching the model) when the loss is non-finite.
LossBundle train_step(ModelState& model, const ToyScene& scene, const TrainConfig& cfg,
                      Rng& rng);

struct StepStats {
  int epoch = 0;
  int step = 0;
  LossBundle losses;
};

struct TrainResult {
  ModelState model;
  std::vector<StepStats> metrics;
  int rejected_steps = 0;
};

/// Full training run driven by cfg.seed (init, data and noise streams are
/// derived from it); bit-reproducible for a fixed config.
TrainResult train_model(const TrainConfig& cfg);

struct InferResult {
  Tensor scores;  // [m, classes] softmax probabilities
  Tensor boxes;   // [m, 4] regressor outputs
  std::vector<double> tau;           // diagnostics (empty when evolution off)
  std::vector<double> kernel_norms;
};

/// Inference path: evolve infer_T steps, encode, solve one kernel with the
/// final encoding, adjust, classify. infer_T = 0 classifies straight off F0.
InferResult infer(const ModelState& model, const ToyScene& scene, const TrainConfig& cfg,
                  Rng& rng);

/// Proposal classification accuracy over freshly generated scenes at the
/// given shift knob. Scene content depends only on (eval_seed, cfg geometry),
/// so different knobs and different models see the same underlying scenes.
double evaluate_accuracy(const ModelState& model, const TrainConfig& cfg, double knob,
                         std::uint64_t eval_seed);

/// Per-step horizon values and kernel norms for a given initial feature map.
struct KernelDiagnostics {
  std::vector<double> tau;
  std::vector<double> kernel_norm;
  std::vector<double> encoding_norm;
};

KernelDiagnostics kernel_diagnostics(const ModelState& model, const Tensor& f0_map,
                                     const TrainConfig& cfg, Rng& rng);

// -- benchmark harness -------------------------------------------------------

struct BenchArm {
  std::string name;
  TrainConfig cfg;
};

struct BenchCell {
  std::string arm;
  std::uint64_t seed = 0;
  double knob = 0.0;
  double accuracy = 0.0;
};

/// Trains each (arm, seed) once and evaluates it at every knob. Cells are
/// independent; jobs > 1 runs them on a thread pool. The result order is
/// deterministic (arm-major, then seed, then knob) regardless of scheduling.
std::vector<BenchCell> run_arms(const std::vector<BenchArm>& arms,
                                const std::vector<std::uint64_t>& seeds,
                                const std::vector<double>& knobs, int jobs);

}  // namespace ltfe
