#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "director/adam.hpp"
#include "director/policy.hpp"

using namespace director;
using diff::Graph;
using diff::Var;

namespace {

// Independent oracle: explicit mixture of n-step returns,
//   V_t = (1-lambda) * sum_{n=1}^{T-t-1} lambda^{n-1} G_t^(n)
//         + lambda^{T-t-1} G_t^(T-t)
// with G_t^(n) = sum_{i<n} gamma^i r_{t+i} + gamma^n v_{t+n}. Kept free of
// the recursion used by the implementation.
std::vector<double> lambda_returns_mixture_oracle(const std::vector<double>& rewards,
                                                  const std::vector<double>& values,
                                                  double gamma, double lambda) {
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
    acc += lam * nstep(t, horizon);
    out[size_t(t)] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("lambda returns: worked example gamma=0.9 lambda=0.5") {
  // rewards [1,2], values [unused,1,2]
  std::vector<double> r{1, 2}, v{0.37, 1, 2};
  auto out = lambda_returns(r, v, 0.9, 0.5);
  REQUIRE(out.size() == 2);
  CHECK(out[1] == doctest::Approx(3.8));
  CHECK(out[0] == doctest::Approx(3.16));
}

TEST_CASE("lambda=0 collapses to one-step targets") {
  std::vector<double> r{0.5, -1, 2}, v{9, 1, 2, 3};
  auto out = lambda_returns(r, v, 0.8, 0.0);
  for (size_t t = 0; t < r.size(); ++t)
    CHECK(out[t] == doctest::Approx(r[t] + 0.8 * v[t + 1]));
}

TEST_CASE("lambda=1 collapses to the discounted sum with terminal bootstrap") {
  std::vector<double> r{1, 2, 3}, v{0, 10, 20, 5};
  auto out = lambda_returns(r, v, 0.9, 1.0);
  CHECK(out[0] == doctest::Approx(1 + 0.9 * (2 + 0.9 * (3 + 0.9 * 5))));
  CHECK(out[2] == doctest::Approx(3 + 0.9 * 5));
}

TEST_CASE("lambda returns match the explicit n-step mixture oracle") {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> unif(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(16), v(17);
    for (auto& x : r) x = unif(gen);
    for (auto& x : v) x = unif(gen);
    const double gamma = 0.5 + 0.5 * std::abs(unif(gen));
    const double lambda = std::abs(unif(gen));
    auto fast = lambda_returns(r, v, gamma, lambda);
    auto oracle = lambda_returns_mixture_oracle(r, v, gamma, lambda);
    for (size_t t = 0; t < r.size(); ++t)
      CHECK(std::abs(fast[t] - oracle[t]) <= 1e-6);
  }
}

TEST_CASE("lambda returns validate lengths") {
  CHECK_THROWS_AS(lambda_returns({1, 2}, {1, 2}, 0.9, 0.5), ContractError);
}

TEST_CASE("normalizer: first batch initializes directly") {
  EmaNormalizer norm;
  const double scale = norm.update({2, -2});
  CHECK(scale == doctest::Approx(2.0));
  CHECK(norm.running_std == doctest::Approx(2.0));
  CHECK(2.0 / scale == doctest::Approx(1.0));
  CHECK(-2.0 / scale == doctest::Approx(-1.0));
}

TEST_CASE("normalizer: zero-variance batch only decays the statistic") {
  EmaNormalizer norm;
  norm.update({3, -3});
  const double before = norm.running_std;
  const double scale = norm.update({5, 5, 5});
  CHECK(norm.running_std == doctest::Approx(0.999 * before));
  CHECK(std::isfinite(5.0 / scale));

  EmaNormalizer empty;
  const double s0 = empty.update({1, 1});
  CHECK(s0 == doctest::Approx(empty.floor));  // floor keeps outputs finite
}

TEST_CASE("normalizer: reward scaling washes out of converged advantages") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> dist(0.0, 1.5);
  std::vector<std::vector<double>> batches;
  for (int b = 0; b < 600; ++b) {
    std::vector<double> batch(32);
    for (auto& x : batch) x = dist(gen);
    batches.push_back(batch);
  }
  EmaNormalizer n1, n2;
  double s1 = 0, s2 = 0;
  for (const auto& b : batches) {
    std::vector<double> scaled = b;
    for (auto& x : scaled) x *= 10.0;
    s1 = n1.update(b);
    s2 = n2.update(scaled);
  }
  const auto& last = batches.back();
  for (size_t i = 0; i < last.size(); ++i)
    CHECK(last[i] / s1 == doctest::Approx(10.0 * last[i] / s2).epsilon(1e-6));
}

TEST_CASE("critic loss: matches the half-squared-error example and zero case") {
  Rng rng(1);
  Parameter v("v", Tensor({1, 1}, {1.0f}));
  Graph g;
  Var loss = critic_loss(g.leaf(v), Tensor({1}, {3.0f}));
  CHECK(loss.value().scalar_value() == doctest::Approx(2.0f));
  g.backward(loss);
  CHECK(v.grad.at(0) == doctest::Approx(1.0f - 3.0f));  // d/dv 0.5(v-t)^2 = v-t

  Graph g2;
  Parameter v2("v2", Tensor({3, 1}, {1, 2, 3}));
  Var zero = critic_loss(g2.leaf(v2), Tensor({3}, {1, 2, 3}));
  CHECK(zero.value().scalar_value() == doctest::Approx(0.0f));
}

TEST_CASE("actor loss: zero advantages and eta=0 give zero loss") {
  Rng rng(2);
  Parameter logp("lp", rng.normal_tensor({4, 1}));
  Graph g;
  Var loss = actor_loss(g.leaf(logp), Tensor({4}), Var(Tensor({4, 1})), 0.0f);
  CHECK(loss.value().scalar_value() == doctest::Approx(0.0f));
  g.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(logp.grad.at(i) == doctest::Approx(0.0f));
}

TEST_CASE("actor loss: entropy gradient scales linearly with eta") {
  Rng rng(3);
  Tensor ent_values = rng.normal_tensor({4, 1});
  auto grad_for = [&](float eta) {
    Parameter ent("e", ent_values.clone());
    Graph g;
    Var loss = actor_loss(Var(Tensor({4, 1})), Tensor({4}), g.leaf(ent), eta);
    g.backward(loss);
    return std::abs(ent.grad.at(0));
  };
  const float g1 = grad_for(0.1f), g2 = grad_for(0.2f), g3 = grad_for(0.4f);
  CHECK(g2 == doctest::Approx(2 * g1));
  CHECK(g3 > g2);
  CHECK(g2 > g1);
}

TEST_CASE("actor loss: one gradient step raises the chosen action's probability") {
  Rng rng(4);
  Parameter logits("l", rng.normal_tensor({1, 3}));
  OptimizerConfig cfg;
  cfg.lr = 0.05f;
  cfg.weight_decay = 0;
  Adam opt(cfg, {&logits});
  Graph g0(false);
  const float before = diff::softmax_rows(Var(logits.value)).value().at(1);
  {
    Graph g;
    Var lsm = diff::log_softmax_rows(g.leaf(logits));
    Tensor chosen({1, 3}, {0, 1, 0});
    Var logp = diff::row_sum(diff::mul(lsm, Var(chosen)));
    Var loss = actor_loss(logp, Tensor({1}, {1.0f}), Var(Tensor({1, 1})), 0.0f);
    g.backward(loss);
    opt.step();
  }
  const float after = diff::softmax_rows(Var(logits.value)).value().at(1);
  CHECK(after > before);
}

TEST_CASE("combine_advantages: weighted sums and identity") {
  auto out = combine_advantages({{1.0}, {2.0}}, {1.0, 0.1});
  CHECK(out[0] == doctest::Approx(1.2));
  auto ident = combine_advantages({{3.0, -1.0}}, {1.0});
  CHECK(ident[0] == doctest::Approx(3.0));
  CHECK(ident[1] == doctest::Approx(-1.0));
  // worker variant weights (goal 1.0, task 0.5)
  auto task = combine_advantages({{2.0}, {2.0}}, {1.0, 0.5});
  CHECK(task[0] == doctest::Approx(3.0));
  CHECK_THROWS_AS(combine_advantages({{1.0}, {1.0, 2.0}}, {1.0, 1.0}), ContractError);
}
