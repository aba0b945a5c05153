// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line each. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "director/driver.hpp"
#include "director/image_io.hpp"

using namespace director;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_lines;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::ostringstream os;
  os << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << name;
  if (!detail.empty()) os << " (" << detail << ")";
  g_lines.push_back(os.str());
  std::printf("%s\n", os.str().c_str());
  std::fflush(stdout);
  if (!pass) g_failures += 1;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "director_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---------- criterion 1: math oracles -------------------------------------

std::vector<double> lambda_mixture_oracle(const std::vector<double>& rewards,
                                          const std::vector<double>& values, double gamma,
                                          double lambda) {
  const int t_max = static_cast<int>(rewards.size());
  auto nstep = [&](int t, int n) {
    double acc = 0, g = 1;
    for (int i = 0; i < n; ++i) {
      acc += g * rewards[size_t(t + i)];
      g *= gamma;
    }
    return acc + g * values[size_t(t + n)];
  };
  std::vector<double> out(static_cast<size_t>(t_max));
  for (int t = 0; t < t_max; ++t) {
    const int horizon = t_max - t;
    double acc = 0, lam = 1;
    for (int n = 1; n < horizon; ++n) {
      acc += (1 - lambda) * lam * nstep(t, n);
      lam *= lambda;
    }
    out[size_t(t)] = acc + lam * nstep(t, horizon);
  }
  return out;
}

void criterion_math_oracles() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unif(-1, 1);
  double max_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(16), v(17);
    for (auto& x : r) x = unif(gen);
    for (auto& x : v) x = unif(gen);
    const double gamma = 0.5 + 0.5 * std::abs(unif(gen));
    const double lambda = std::abs(unif(gen));
    auto fast = lambda_returns(r, v, gamma, lambda);
    auto oracle = lambda_mixture_oracle(r, v, gamma, lambda);
    for (size_t t = 0; t < fast.size(); ++t)
      max_err = std::max(max_err, std::abs(fast[t] - oracle[t]));
  }
  report(1, "lambda-return recursion == n-step mixture oracle", max_err <= 1e-6,
         "max abs err " + std::to_string(max_err));

  // Closed-form Gaussian KL vs Monte Carlo with 1e5 samples.
  Rng rng(5);
  Tensor mq({1, 4}, {0.2f, -0.7f, 1.1f, 0.0f});
  Tensor sq({1, 4}, {0.9f, 1.3f, 0.6f, 1.0f});
  Tensor mp({1, 4}, {-0.4f, 0.2f, 0.5f, 0.8f});
  Tensor sp({1, 4}, {1.2f, 0.8f, 1.0f, 1.4f});
  const double closed =
      gaussian_kl_rows(diff::Var(mq), diff::Var(sq), diff::Var(mp), diff::Var(sp))
          .value()
          .scalar_value();
  double mc = 0;
  for (int s = 0; s < 100000; ++s)
    for (int d = 0; d < 4; ++d) {
      const double x = mq.at(d) + sq.at(d) * rng.normal();
      mc += -0.5 * std::pow((x - mq.at(d)) / sq.at(d), 2) - std::log(sq.at(d)) +
            0.5 * std::pow((x - mp.at(d)) / sp.at(d), 2) + std::log(sp.at(d));
    }
  mc /= 100000;
  const double rel = std::abs(mc - closed) / closed;
  report(1, "closed-form Gaussian KL == Monte Carlo within 1%", rel < 0.01,
         "rel err " + std::to_string(rel));

  // KL-to-uniform == log C - entropy identity.
  double max_kl_err = 0;
  Rng krng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor logits = krng.normal_tensor({1, 8}, 0, 2);
    const double kl = kl_to_uniform_rows(diff::Var(logits)).value().at(0);
    Tensor p = diff::softmax_rows(diff::Var(logits)).value();
    double ent = 0;
    for (int i = 0; i < 8; ++i) {
      const double pi = std::max(1e-12, double(p.at(i)));
      ent -= pi * std::log(pi);
    }
    max_kl_err = std::max(max_kl_err, std::abs(kl - (std::log(8.0) - ent)));
  }
  report(1, "KL-to-uniform == log C - entropy", max_kl_err <= 1e-6,
         "max abs err " + std::to_string(max_kl_err));

  // Max-cosine range and cosine agreement at equal norms, 1e3 random pairs.
  Rng mrng(7);
  bool ok = true;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    Tensor a = mrng.normal_tensor({8});
    Tensor b = mrng.normal_tensor({8});
    const float r = max_cosine_reward(a, b);
    ok = ok && r >= -1.0f - 1e-5f && r <= 1.0f + 1e-5f;
    Tensor b_eq = t_scale(b, t_norm(a) / t_norm(b));
    const double cosine = double(t_dot(a, b_eq)) / (double(t_norm(a)) * t_norm(b_eq));
    ok = ok && std::abs(double(max_cosine_reward(a, b_eq)) - cosine) < 1e-4;
  }
  report(1, "max-cosine in [-1,1], == cosine at equal norms", ok, "1000 random pairs");
}

// ---------- criterion 2: gradient suite ------------------------------------


double sum_sq_d(const Tensor& t) {
  double s = 0;
  for (int64_t i = 0; i < t.numel(); ++i) s += double(t.data()[i]) * t.data()[i];
  return s;
}

double sum_els_d(const Tensor& t) {
  double s = 0;
  for (int64_t i = 0; i < t.numel(); ++i) s += t.data()[i];
  return s;
}

double max_fd_rel_err(const std::vector<Parameter*>& params,
                      const std::function<double()>& loss_value, int64_t max_per_param) {
  double worst = 0;
  for (Parameter* p : params) {
    if (p->grad.empty()) return 1e9;
    const int64_t count = std::min<int64_t>(p->value.numel(), max_per_param);
    for (int64_t i = 0; i < count; ++i) {
      float* slot = p->value.data_mut() + i;
      const float saved = *slot;
      const double h = 1e-3;
      *slot = saved + float(h);
      const double up = loss_value();
      *slot = saved - float(h);
      const double down = loss_value();
      *slot = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.at(i);
      // Mixed tolerance: rel err < 1e-2 with a 5e-4 absolute term that
      // covers float32 forward noise on near-zero gradients.
      const double tol = 1e-2 * std::max(std::abs(analytic), std::abs(numeric)) + 5e-4;
      worst = std::max(worst, std::abs(analytic - numeric) / tol);
    }
  }
  return worst;
}

void criterion_gradients() {
  using diff::Graph;
  using diff::Var;
  Rng rng(11);
  double worst = 0;

  {  // MLP (linear + layer norm + ELU stack)
    Mlp mlp("m", 6, {12, 3}, 4, rng);
    Tensor x = rng.normal_tensor({3, 6});
    auto loss = [&]() {
      Graph g(false);
      return sum_sq_d(mlp.forward(g, Var(x)).value());
    };
    Graph g;
    g.backward(diff::sum_all(diff::square(mlp.forward(g, Var(x)))));
    worst = std::max(worst, max_fd_rel_err(mlp.parameters(), loss, 24));
  }
  {  // GRU
    GruCell gru("g", 4, 6, rng);
    Parameter x("x", rng.normal_tensor({2, 4}));
    Tensor h = rng.normal_tensor({2, 6}, 0, 0.5f);
    auto loss = [&]() {
      Graph g(false);
      return sum_els_d(gru.forward(g, Var(h), Var(x.value)).value());
    };
    Graph g;
    g.backward(diff::sum_all(gru.forward(g, Var(h), g.leaf(x))));
    auto params = gru.parameters();
    params.push_back(&x);
    worst = std::max(worst, max_fd_rel_err(params, loss, 24));
  }
  {  // LayerNorm alone
    LayerNorm ln("ln", 5);
    for (Parameter* p : ln.parameters())
      for (int64_t i = 0; i < p->value.numel(); ++i)
        p->value.data_mut()[i] += 0.05f * float(i + 1);
    Parameter x("x", rng.normal_tensor({4, 5}));
    auto loss = [&]() {
      Graph g(false);
      Var out = diff::layer_norm(Var(x.value), Var(ln.scale->value), Var(ln.shift->value));
      return sum_sq_d(out.value());
    };
    Graph g;
    g.backward(diff::sum_all(
        diff::square(diff::layer_norm(g.leaf(x), g.leaf(*ln.scale), g.leaf(*ln.shift)))));
    auto params = ln.parameters();
    params.push_back(&x);
    worst = std::max(worst, max_fd_rel_err(params, loss, 24));
  }
  {  // Conv
    Conv2d conv("c", 4, 4, 2, 3, 2, 1, rng);
    Parameter x("x", rng.normal_tensor({2, 8, 8, 2}));
    auto loss = [&]() {
      Graph g(false);
      return sum_sq_d(conv.forward(g, Var(x.value.reshape({2, 8, 8, 2}))).value());
    };
    Graph g;
    g.backward(diff::sum_all(
        diff::square(conv.forward(g, diff::reshape(g.leaf(x), {2, 8, 8, 2})))));
    auto params = conv.parameters();
    params.push_back(&x);
    worst = std::max(worst, max_fd_rel_err(params, loss, 32));
  }
  {  // Decoder path: linear -> reshape -> transposed convs
    Linear fc("fc", 5, 2 * 2 * 4, rng);
    ConvTranspose2d up1("u1", 4, 4, 4, 3, 2, 1, rng);
    ConvTranspose2d up2("u2", 4, 4, 3, 2, 2, 1, rng);
    Tensor feat = rng.normal_tensor({2, 5});
    auto forward = [&](Graph& g) {
      diff::Var v = diff::reshape(fc.forward(g, Var(feat)), {2, 2, 2, 4});
      return up2.forward(g, diff::elu(up1.forward(g, v)));
    };
    auto loss = [&]() {
      Graph g(false);
      return sum_sq_d(forward(g).value());
    };
    Graph g;
    g.backward(diff::sum_all(diff::square(forward(g))));
    std::vector<Parameter*> params = fc.parameters();
    for (Parameter* p : up1.parameters()) params.push_back(p);
    for (Parameter* p : up2.parameters()) params.push_back(p);
    worst = std::max(worst, max_fd_rel_err(params, loss, 32));
  }
  report(2, "finite differences: mlp, gru, layer norm, conv, decoder", worst <= 1.0,
         "worst err/tol " + std::to_string(worst));

  {  // Straight-through expected gradient on 2x2 logits with fixed decode.
    Parameter logits("l", rng.normal_tensor({2, 2}));
    Tensor m({4, 1}, {0.6f, -0.2f, 0.9f, 0.4f});
    Rng srng(3);
    Graph g;
    Var probs = diff::softmax_rows(g.leaf(logits));
    Tensor one_hot = sample_one_hot_rows(probs.value(), srng);
    g.backward(diff::sum_all(
        diff::matmul(diff::reshape(diff::straight_through(probs, one_hot), {1, 4}), Var(m))));
    auto expected = [&]() {
      Graph gi(false);
      Tensor p = diff::softmax_rows(Var(logits.value)).value();
      double s = 0;
      for (int i = 0; i < 4; ++i) s += double(p.at(i)) * m.at(i);
      return s;
    };
    double st_worst = 0;
    for (int64_t i = 0; i < 4; ++i) {
      float* slot = logits.value.data_mut() + i;
      const float saved = *slot;
      *slot = saved + 1e-3f;
      const double up = expected();
      *slot = saved - 1e-3f;
      const double down = expected();
      *slot = saved;
      const double numeric = (up - down) / 2e-3;
      const double tol =
          1e-2 * std::max(std::abs(numeric), double(std::abs(logits.grad.at(i)))) + 5e-4;
      st_worst = std::max(st_worst, std::abs(logits.grad.at(i) - numeric) / tol);
    }
    report(2, "straight-through expected-gradient check (2x2 logits)", st_worst <= 1.0,
           "worst err/tol " + std::to_string(st_worst));
  }
}

// ---------- criterion 3: structural invariants ------------------------------

void criterion_structure() {
  Rng rng(21);
  {  // GoalCode: exactly L=8 ones out of 64.
    GoalAeConfig cfg;
    cfg.feature_width = 32;
    cfg.mlp = {32, 1};
    GoalAutoencoder gae("gae", cfg, rng);
    Rng srng(2);
    Tensor codes = gae.encode_sample(rng.normal_tensor({64, 32}), srng);
    bool ok = codes.cols() == 64;
    for (int64_t r = 0; r < codes.rows() && ok; ++r) {
      float ones = 0;
      for (int i = 0; i < 64; ++i) {
        const float v = codes.at(r * 64 + i);
        ok = ok && (v == 0.0f || v == 1.0f);
        ones += v;
      }
      ok = ok && ones == 8.0f;
    }
    report(3, "goal codes have exactly 8 of 64 dimensions set", ok, "64 samples");
  }
  {  // Imagined goals change only at multiples of K=8.
    RunConfig rc;
    rc.deter = 24;
    rc.stoch = 6;
    rc.mlp_hidden = 32;
    rc.mlp_layers = 1;
    rc.env = "reachcolor";
    AgentConfig cfg = rc.agent_config({16, 16, 3}, 5);
    DirectorAgent agent(cfg);
    Rng irng(3), drng(4);
    ImaginedTrajectory traj = agent.imagine(drng.normal_tensor({8, 24}, 0, 0.3f),
                                            drng.normal_tensor({8, 6}, 0, 0.3f), irng);
    bool ok = traj.horizon == 16;
    for (int i = 0; i < traj.horizon; ++i) {
      if (i % 8 == 0) continue;
      ok = ok && std::memcmp(traj.codes[size_t(i)].data(), traj.codes[size_t(i - 1)].data(),
                             sizeof(float) * size_t(traj.codes[size_t(i)].numel())) == 0;
    }
    report(3, "imagined goals change only at multiples of K=8", ok, "H=16 rollout");
  }
  {  // Abstraction of K=2 rewards [1,2,3,4] -> [3,7].
    ImaginedTrajectory traj;
    traj.horizon = 4;
    traj.n = 1;
    Rng frng(5);
    for (int i = 0; i <= 4; ++i) traj.features.push_back(frng.normal_tensor({1, 4}));
    for (int i = 0; i < 4; ++i) {
      traj.codes.push_back(Tensor({1, 4}, {1, 0, 0, 0}));
      traj.goals.push_back(frng.normal_tensor({1, 4}));
      traj.actions.push_back(Tensor({1, 2}, {1, 0}));
    }
    traj.rewards_extr = Tensor({4, 1}, {1, 2, 3, 4});
    traj.rewards_expl = Tensor({4, 1});
    traj.rewards_goal = Tensor({4, 1});
    AbstractTrajectory abs = abstract_trajectory(traj, 2);
    const bool ok = abs.rewards_extr.at(0) == 3.0f && abs.rewards_extr.at(1) == 7.0f;
    report(3, "K=2 abstraction of rewards [1,2,3,4] is [3,7]", ok, "");
  }
  {  // Manager/worker gradient isolation via parameter deltas.
    RunConfig rc;
    rc.deter = 16;
    rc.stoch = 4;
    rc.mlp_hidden = 24;
    rc.mlp_layers = 1;
    rc.goal_latents = 4;
    rc.goal_classes = 4;
    rc.weight_decay = 0.0;
    AgentConfig cfg = rc.agent_config({16, 16, 3}, 5);
    DirectorAgent agent(cfg);
    Rng irng(6), drng(7);
    ImaginedTrajectory traj = agent.imagine(drng.normal_tensor({4, 16}, 0, 0.3f),
                                            drng.normal_tensor({4, 4}, 0, 0.3f), irng);
    auto snap = [](std::vector<Parameter*> ps) {
      std::vector<Tensor> out;
      for (Parameter* p : ps) out.push_back(p->value.clone());
      return out;
    };
    auto same = [](const std::vector<Tensor>& before, std::vector<Parameter*> now) {
      for (size_t i = 0; i < now.size(); ++i)
        if (std::memcmp(before[i].data(), now[i]->value.data(),
                        sizeof(float) * size_t(before[i].numel())) != 0)
          return false;
      return true;
    };
    auto wkr_before = snap(agent.worker_parameters());
    auto wm_before = snap(agent.world_model().parameters());
    TrainMetrics m;
    agent.manager_update(traj, m);
    bool ok = same(wkr_before, agent.worker_parameters()) &&
              same(wm_before, agent.world_model().parameters());
    auto mgr_after = snap(agent.manager_parameters());
    agent.worker_update(traj, m);
    ok = ok && same(mgr_after, agent.manager_parameters()) &&
         same(wm_before, agent.world_model().parameters());
    report(3, "manager/worker gradient isolation (parameter deltas)", ok, "");
  }
}

// ---------- criterion 4: learning smoke -------------------------------------

void criterion_learning_smoke() {
  Rng rng(31);
  {  // Goal-AE reconstruction drop >= 50% on a fixed 256-state dataset.
    GoalAeConfig cfg;
    cfg.feature_width = 24;
    cfg.mlp = {64, 2};
    GoalAutoencoder gae("gae", cfg, rng);
    Tensor states({256, 24});
    Rng drng(32);
    for (int r = 0; r < 256; ++r)
      for (int c = 0; c < 24; ++c)
        states.data_mut()[r * 24 + c] =
            0.6f * std::sin(0.25f * float(r % 17) + 0.4f * c) + 0.1f * drng.normal();
    OptimizerConfig opt_cfg;
    opt_cfg.lr = 1e-3f;
    Adam opt(opt_cfg, gae.parameters());
    Rng nrng(33);
    float first = -1, last = -1;
    for (int step = 0; step < 1000; ++step) {
      diff::Graph g;
      GoalAeLossOut out = gae.loss(g, states, nrng);
      if (step == 0) first = out.rec;
      last = out.rec;
      g.backward(out.loss);
      opt.step();
    }
    report(4, "goal-AE reconstruction MSE drops >= 50% on 256 states", last <= 0.5f * first,
           "first " + std::to_string(first) + " last " + std::to_string(last));
  }
  {  // Scripted two-state environment: reward predictions separate by > 0.5.
    WorldModelConfig cfg;
    cfg.obs_shape = {16, 16, 3};
    cfg.action_dim = 2;
    cfg.deter = 24;
    cfg.stoch = 6;
    cfg.mlp = {32, 2};
    WorldModel wm("wm", cfg, rng);
    OptimizerConfig opt_cfg;
    opt_cfg.lr = 1e-3f;
    Adam opt(opt_cfg, wm.parameters());
    BatchSequences batch;
    batch.batch = 8;
    batch.length = 12;
    batch.images = Tensor({8, 12, 16, 16, 3});
    batch.actions = Tensor({8, 12, 2});
    batch.rewards = Tensor({8, 12});
    batch.is_first = Tensor({8, 12});
    Rng drng(34);
    for (int b = 0; b < 8; ++b) {
      const int phase = static_cast<int>(drng.uniform_int(2));
      for (int t = 0; t < 12; ++t) {
        const bool hot = (t + phase) % 2 == 1;
        float* img = batch.images.data_mut() + (int64_t(b) * 12 + t) * 16 * 16 * 3;
        for (int i = 0; i < 16 * 16 * 3; ++i) img[i] = hot ? 0.9f : 0.1f;
        batch.actions.data_mut()[(int64_t(b) * 12 + t) * 2] = 1.0f;
        batch.rewards.data_mut()[int64_t(b) * 12 + t] = hot ? 0.0f : 1.0f;
        batch.is_first.data_mut()[int64_t(b) * 12 + t] = t == 0 ? 1.0f : 0.0f;
      }
    }
    Rng nrng(35);
    for (int step = 0; step < 400; ++step) {
      diff::Graph g;
      WmLossOut out = wm.loss(g, batch, nrng);
      g.backward(out.loss);
      opt.step();
    }
    // The head predicts r_t from s_{t+1}: drop the first time slice, which
    // never carries a reward target.
    diff::Graph gi(false);
    Tensor feats = wm.loss(gi, batch, nrng).post_features;
    Tensor preds = wm.predict_rewards(t_rows(feats, 8, feats.rows()));
    double lo = 1e9, hi = -1e9;
    for (int64_t i = 0; i < preds.numel(); ++i) {
      lo = std::min(lo, double(preds.at(i)));
      hi = std::max(hi, double(preds.at(i)));
    }
    report(4, "two-state scripted env: reward predictions separate by > 0.5", hi - lo > 0.5,
           "spread " + std::to_string(hi - lo));
  }
  {  // 200 full train steps on pinpad:three replay data.
    RunConfig rc;
    rc.env = "pinpad:three";
    rc.seed = 9;
    rc.deter = 64;
    rc.stoch = 8;
    rc.conv_depth = 8;
    rc.mlp_hidden = 96;
    rc.mlp_layers = 2;
    rc.batch_size = 4;
    rc.chunk_length = 24;
    AgentConfig acfg = rc.agent_config({64, 64, 3}, 5);
    DirectorAgent agent(acfg);
    auto env = make_env("pinpad:three");
    ReplayBuffer buffer(20000, {64, 64, 3}, 5);
    Rng arng(36);
    EnvStep cur = env->reset(1);
    bool is_first = true;
    for (int t = 0; t < 1200; ++t) {
      const int action = static_cast<int>(arng.uniform_int(5));
      EnvStep next = env->step(action);
      buffer.add(0, cur.image, action, next.reward, is_first);
      is_first = false;
      cur = next;
      if (cur.done) {
        cur = env->reset(uint64_t(t));
        is_first = true;
      }
    }
    Rng srng(37);
    std::vector<float> wm_losses;
    bool finite = true;
    for (int step = 0; step < 200; ++step) {
      BatchSequences batch = buffer.sample(rc.batch_size, rc.chunk_length, srng);
      TrainMetrics m = agent.train_step(batch);
      finite = finite && !m.diverged && std::isfinite(m.wm_loss) &&
               std::isfinite(m.goal_ae_loss) && std::isfinite(m.mgr_actor_loss) &&
               std::isfinite(m.mgr_critic_loss) && std::isfinite(m.wkr_actor_loss) &&
               std::isfinite(m.wkr_critic_loss);
      wm_losses.push_back(m.wm_loss);
    }
    const float first10 =
        std::accumulate(wm_losses.begin(), wm_losses.begin() + 10, 0.0f) / 10.0f;
    const float last10 = std::accumulate(wm_losses.end() - 10, wm_losses.end(), 0.0f) / 10.0f;
    report(4, "200 full train steps on pinpad:three replay: losses finite, wm_loss down",
           finite && last10 < first10,
           "wm_loss " + std::to_string(first10) + " -> " + std::to_string(last10));
  }
}

// ---------- criterion 5: end-to-end desk run --------------------------------

void criterion_end_to_end() {
  // Debug two-pad pin pad with default hyperparameters; a seed passes when
  // one reward event (episode return >= 10) happens within 200k env steps.
  int successes = 0;
  std::string detail;
  for (uint64_t seed : {101ULL, 202ULL, 303ULL}) {
    RunConfig cfg;  // defaults: full-scale model, 4 envs, train every 16
    cfg.env = "pinpad:two";
    cfg.seed = seed;
    cfg.total_steps = 200000;
    cfg.eval_every = 0;
    cfg.checkpoint_every = 0;
    cfg.logdir = (work_dir() / ("e2e_seed" + std::to_string(seed))).string();
    RunHooks hooks;
    bool hit = false;
    hooks.on_episode_end = [&](int64_t, double ep_return) {
      if (ep_return >= 10.0) hit = true;
      return hit;
    };
    const double t0 = now_seconds();
    TrainResult res = run_train(cfg, "", hooks);
    successes += hit ? 1 : 0;
    detail += "seed " + std::to_string(seed) + (hit ? " hit@" : " miss@") +
              std::to_string(res.env_steps) + " (" +
              std::to_string(int(now_seconds() - t0)) + "s); ";
  }
  report(5, "pinpad:two reward event within 200k steps in >= 2 of 3 seeds", successes >= 2,
         detail);
}

// ---------- criterion 6: interpretability artifact ---------------------------

void criterion_viz(const std::string& ckpt, const RunConfig& trained_cfg) {
  RunConfig cfg = trained_cfg;
  const std::string out = (work_dir() / "goals.ppm").string();
  VizResult viz = visualize_goals(cfg, ckpt, 3 * cfg.goal_every, out);
  Tensor strip = read_ppm(out);
  bool ok = strip.dim(0) == 2 * 16 && strip.dim(1) == viz.columns * 16;
  bool boundaries_only = true;
  for (int step : viz.goal_change_steps)
    boundaries_only = boundaries_only && step % cfg.goal_every == 0;
  report(6, "viz-goals: two-row strip, bottom row changes every K frames",
         ok && boundaries_only && !viz.goal_change_steps.empty(),
         std::to_string(viz.goal_change_steps.size()) + " changes over " +
             std::to_string(viz.columns) + " columns");
  report(6, "viz-goals: AE round-trip render error < 0.02 MSE", viz.roundtrip_mse < 0.02,
         "mse " + std::to_string(viz.roundtrip_mse));
}

// ---------- criterion 7: determinism ------------------------------------------

void criterion_determinism() {
  auto run_once = [&](const std::string& logdir) {
    RunConfig cfg;
    cfg.env = "pinpad:two";
    cfg.seed = 77;
    cfg.parallel_envs = 1;
    cfg.total_steps = 1000;
    cfg.train_start = 256;
    cfg.batch_size = 4;
    cfg.chunk_length = 32;
    cfg.deter = 32;
    cfg.stoch = 6;
    cfg.conv_depth = 4;
    cfg.mlp_hidden = 48;
    cfg.mlp_layers = 1;
    cfg.eval_every = 500;
    cfg.eval_episode_length = 64;
    cfg.checkpoint_every = 0;
    cfg.logdir = logdir;
    return run_train(cfg).metrics_path;
  };
  const std::string p1 = run_once((work_dir() / "det1").string());
  const std::string p2 = run_once((work_dir() / "det2").string());
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  report(7, "synchronous mode: bitwise-identical metrics for 1000 steps", !s1.empty() && s1 == s2,
         std::to_string(s1.size()) + " bytes");
}

}  // namespace

int main() {
  const double t0 = now_seconds();

  criterion_math_oracles();
  criterion_gradients();
  criterion_structure();
  criterion_learning_smoke();

  // Criterion 6 uses a briefly trained reachcolor checkpoint so the goal
  // autoencoder has something to reconstruct.
  RunConfig viz_cfg;
  viz_cfg.env = "reachcolor";
  viz_cfg.seed = 5;
  viz_cfg.parallel_envs = 1;
  viz_cfg.total_steps = 6000;
  viz_cfg.train_start = 256;
  viz_cfg.train_every = 16;
  viz_cfg.batch_size = 8;
  viz_cfg.chunk_length = 24;
  viz_cfg.deter = 48;
  viz_cfg.stoch = 8;
  viz_cfg.mlp_hidden = 128;
  viz_cfg.mlp_layers = 2;
  viz_cfg.goal_every = 8;
  viz_cfg.horizon = 16;
  viz_cfg.eval_every = 0;
  viz_cfg.checkpoint_every = 0;
  viz_cfg.logdir = (work_dir() / "viz_train").string();
  TrainResult viz_train = run_train(viz_cfg);
  criterion_viz(viz_train.checkpoint_path, viz_cfg);

  criterion_determinism();
  criterion_end_to_end();

  std::printf("----\n");
  for (const std::string& line : g_lines) std::printf("%s\n", line.c_str());
  std::printf("acceptance: %d failure(s), %.1f minutes\n", g_failures,
              (now_seconds() - t0) / 60.0);
  return g_failures;
}
