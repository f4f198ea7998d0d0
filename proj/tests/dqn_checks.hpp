#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "evsim/rl_core.hpp"
#include "oracles.hpp"

namespace checks {

using namespace evsim;

inline Eigen::VectorXd one_hot(int s, int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  v(s) = 1.0;
  return v;
}

/// Trains a policy on uniformly drawn transitions of `m` and returns the
/// largest absolute gap to the value-iteration Q-table.
inline double dqn_vs_value_iteration(const oracles::Mdp& m, double gamma, int steps, std::uint64_t seed) {
  DqnConfig cfg;
  cfg.input_size = m.states;
  cfg.output_size = m.actions;
  cfg.hidden = {32};
  cfg.discount = gamma;
  cfg.batch_size = 32;
  cfg.sync_every = 100;
  cfg.buffer_capacity = 2000;
  cfg.optimizer.kind = OptimizerConfig::Kind::Adam;
  cfg.optimizer.learning_rate = 1e-3;
  Policy policy(cfg, seed);
  Rng rng(derive_seed(seed, 1));
  for (int t = 0; t < steps; ++t) {
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.states)));
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.actions)));
    Experience e;
    e.state = one_hot(s, m.states);
    e.action = a;
    e.reward = m.reward[s][a];
    e.next_state = one_hot(m.next[s][a], m.states);
    e.next_legal.assign(static_cast<std::size_t>(m.actions), true);
    e.terminal = m.terminal[s][a];
    policy.observe(std::move(e), rng);
  }
  const auto q_star = oracles::value_iteration(m, gamma);
  double worst = 0.0;
  for (int s = 0; s < m.states; ++s) {
    const Eigen::VectorXd q = policy.q_values(one_hot(s, m.states));
    for (int a = 0; a < m.actions; ++a) worst = std::max(worst, std::abs(q(a) - q_star[s][a]));
  }
  return worst;
}

/// Largest relative gap between the analytic TD-loss gradient and central
/// differences (step 1e-5) on a random one-hidden-unit network.
inline double gradient_relative_error(std::uint64_t seed) {
  Rng rng(seed);
  QNetwork net({3, 1, 2});
  Eigen::VectorXd theta(static_cast<Eigen::Index>(net.parameter_count()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = rng.uniform(-1.0, 1.0);
  net.unflatten(theta);
  // the hidden unit must be active on some sample or every gradient is zero
  net.biases()[0](0) = std::abs(net.biases()[0](0)) + 0.5;

  const int batch = 4;
  Eigen::MatrixXd states(3, batch);
  std::vector<int> actions;
  Eigen::VectorXd targets(batch);
  for (int i = 0; i < batch; ++i) {
    for (int r = 0; r < 3; ++r) states(r, i) = rng.uniform(0.0, 1.0);
    actions.push_back(static_cast<int>(rng.below(2)));
    targets(i) = rng.uniform(-2.0, 2.0);
  }
  const auto [loss, grad] = td_loss_gradient<double>(net, states, actions, targets);
  (void)loss;
  const Eigen::VectorXd analytic = flatten<double>(grad);

  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    QNetwork plus = net, minus = net;
    Eigen::VectorXd tp = net.flatten(), tm = net.flatten();
    tp(i) += h;
    tm(i) -= h;
    plus.unflatten(tp);
    minus.unflatten(tm);
    const double numeric =
        (td_loss<double>(plus, states, actions, targets) - td_loss<double>(minus, states, actions, targets)) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic(i)) / scale);
  }
  return worst;
}

}  // namespace checks
