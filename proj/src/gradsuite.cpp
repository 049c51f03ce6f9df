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

#include "ltfe/gradsuite.hpp"

#include "ltfe/pipeline.hpp"
#include "ltfe/serialize.hpp"

namespace ltfe {

namespace {

Tensor rand_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_uniform(t, -scale, scale);
  return t;
}

// Toy config used by the end-to-end check: 6x6 scene, 2 channels.
TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.scene_size = 6;
  cfg.proposals_per_scene = 2;
  cfg.feat_channels = 2;
  cfg.hidden_dim = 6;
  cfg.field_hidden = 6;
  cfg.schedule.steps = 3;
  cfg.infer_T = 2;
  cfg.ode_steps = 2;
  cfg.scenes = 1;
  cfg.eval_scenes = 1;
  return cfg;
}

double check_core(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> params = {
      rand_tensor({4, 4, 2}, rng),         // conv input
      rand_tensor({3, 3, 2, 2}, rng, 0.5),  // conv kernel
      rand_tensor({3, 4}, rng),            // matmul lhs
      rand_tensor({4, 3}, rng),            // matmul rhs
      rand_tensor({5}, rng),               // vector x
  };
  auto f = [](Tape& t, const std::vector<Var>& v) {
    Var conv = t.conv2d(v[0], v[1], Padding::circular);
    Var a = t.l2_norm(conv);
    Var pool = t.mean_pool_spatial(t.relu(conv));
    Var b = t.sum(t.mul(pool, pool));
    Var m = t.matmul(v[2], v[3]);
    Var c = t.sum(t.tanh_op(m));
    Var d = t.sum(t.sigmoid(t.neg(v[4])));
    Var e = t.sum(t.exp_op(t.scale(v[4], 0.3)));
    Var s = t.add(t.add(a, b), t.add(c, t.add(d, e)));
    Var conv_r = t.conv2d(v[0], v[1], Padding::reflect);
    return t.add(s, t.l2_norm(conv_r));
  };
  return grad_check(f, params, 1e-6);
}

double check_perturb(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> params = {rand_tensor({5, 5, 2}, rng)};
  EvolutionSchedule s{0.2, 0.2, 0.8, 1.2, 3};
  auto f = [s, seed](Tape& t, const std::vector<Var>& v) {
    Rng noise(seed + 99);  // same draws on every evaluation
    EvolveOptions opt;
    std::vector<Var> seq = evolve_sequence(t, v[0], s, opt, noise);
    Var acc = t.l2_norm(seq[0]);
    for (std::size_t i = 1; i < seq.size(); ++i) acc = t.add(acc, t.l2_norm(seq[i]));
    return acc;
  };
  return grad_check(f, params, 1e-6);
}

double check_temporal(std::uint64_t seed) {
  Rng rng(seed);
  const int c = 2, d = 5, T = 3;
  std::vector<Tensor> params;
  for (int g = 0; g < 4; ++g) params.push_back(rand_tensor({c + d, d}, rng, 0.6));
  for (int g = 0; g < 4; ++g) params.push_back(rand_tensor({d}, rng, 0.4));
  params.push_back(rand_tensor({d + c, d}, rng, 0.6));  // fusion
  std::vector<Tensor> maps;
  for (int i = 0; i < T; ++i) maps.push_back(rand_tensor({4, 4, c}, rng));
  auto f = [maps](Tape& t, const std::vector<Var>& v) {
    LstmVars lstm{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    FusionVars fusion{v[8]};
    std::vector<Var> feats;
    for (const Tensor& m : maps) feats.push_back(t.constant(m));
    TemporalEncoding enc = encode_sequence(t, feats, lstm, fusion);
    Var acc = t.l2_norm(enc.h_seq.back());
    acc = t.add(acc, t.sum(enc.c_final));
    return acc;
  };
  return grad_check(f, params, 1e-6);
}

double check_liquid(std::uint64_t seed) {
  Rng rng(seed);
  const int k = 3, c = 2, d = 4, m = 5;
  const std::int64_t p = k * k * c * c;
  std::vector<Tensor> params = {
      rand_tensor({p + d, m}, rng, 0.5),  // w1
      rand_tensor({m}, rng, 0.3),         // b1
      rand_tensor({m, p}, rng, 0.3),      // w2
      rand_tensor({p}, rng, 0.2),         // b2
      rand_tensor({k, k, c, c}, rng, 0.3),  // w0
      rand_tensor({d}, rng),              // H_1
      rand_tensor({d}, rng),              // H_2
      rand_tensor({5, 5, c}, rng),        // f0
  };
  auto f = [](Tape& t, const std::vector<Var>& v) {
    FieldVars field{v[0], v[1], v[2], v[3]};
    OdeConfig ode{2, 1e-12};
    std::vector<Var> encodings = {v[5], v[6]};
    Var tau = horizon(t, encodings, 1, ode);
    Var w = rk4_solve(t, field, v[4], v[5], tau, ode);
    Var adjusted = adjust_feature(t, v[7], w, Padding::circular);
    return t.add(t.l2_norm(adjusted), t.sum(w));
  };
  return grad_check(f, params, 1e-6);
}

double check_align(std::uint64_t seed) {
  Rng rng(seed);
  const int m = 4, n = 5, classes = 3;
  Tensor targets = rand_tensor({m, 4}, rng, 0.5);
  std::vector<int> labels = {0, 2, 1, 2};
  std::vector<Tensor> params = {
      rand_tensor({m, n}, rng),          // P
      rand_tensor({m, n}, rng),          // P_hat
      rand_tensor({n, classes}, rng),    // cls_w
      rand_tensor({classes}, rng, 0.2),  // cls_b
      rand_tensor({n, 4}, rng),          // reg_w
      rand_tensor({4}, rng, 0.2),        // reg_b
  };
  auto f = [labels, targets](Tape& t, const std::vector<Var>& v) {
    HeadVars heads{v[2], v[3], v[4], v[5]};
    Var li = intra_loss(t, v[0], v[1]);
    Var le = inter_loss(t, v[0], v[1], false);
    auto [lc, lr] = head_losses(t, v[0], v[1], labels, targets, heads);
    LossBundleVars b = total_loss(t, li, le, lc, lr, 1.0, 0.1);
    return b.l_total;
  };
  return grad_check(f, params, 1e-6);
}

double check_pipeline(std::uint64_t seed) {
  TrainConfig cfg = tiny_config(seed);
  Rng init_rng(derive_seed(seed, 0));
  ModelState model = ModelState::init(cfg, init_rng);

  Rng scene_rng(derive_seed(seed, 1));
  ToyScene scene = make_scene(scene_rng, cfg, 0.0);

  std::vector<Tensor> params(model.values.begin(), model.values.end());
  auto f = [&scene, cfg, seed](Tape& t, const std::vector<Var>& v) {
    ModelVars mv;
    std::copy(v.begin(), v.end(), mv.v.begin());
    Rng noise(derive_seed(seed, 2));  // identical draws per evaluation
    ForwardGraph g = build_train_graph(t, mv, scene, cfg, noise);
    return g.losses.l_total;
  };
  return grad_check(f, params, 1e-6);
}

}  // namespace

std::map<std::string, double> run_gradcheck_suite(std::uint64_t seed) {
  std::map<std::string, double> out;
  out["core"] = check_core(seed);
  out["perturb"] = check_perturb(seed + 1);
  out["temporal"] = check_temporal(seed + 2);
  out["liquid"] = check_liquid(seed + 3);
  out["align"] = check_align(seed + 4);
  out["pipeline"] = check_pipeline(seed + 5);
  return out;
}

}  // namespace ltfe
