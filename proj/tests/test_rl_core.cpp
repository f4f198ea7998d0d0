#include <doctest.h>

#include <map>
#include <set>

#include "dqn_checks.hpp"
#include "evsim/rl_core.hpp"
#include "oracles.hpp"

using namespace evsim;

namespace {

Experience transition(double s0, int action, double reward, bool terminal, std::size_t actions = 2) {
  Experience e;
  e.state = Eigen::VectorXd::Constant(1, s0);
  e.action = action;
  e.reward = reward;
  e.next_state = Eigen::VectorXd::Constant(1, s0);
  e.next_legal.assign(actions, true);
  e.terminal = terminal;
  return e;
}

}  // namespace

TEST_SUITE("rl_core") {
  TEST_CASE("zero network scores everything zero") {
    const QNetwork net({5, 64, 64, 51});
    const Eigen::VectorXd q = net.forward(Eigen::VectorXd(Eigen::VectorXd::Constant(5, 0.3)));
    CHECK(q.size() == 51);
    CHECK(q.isZero());
    CHECK_THROWS_AS(net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(4))), Error);
  }

  TEST_CASE("hand-set one-hidden-unit network") {
    QNetwork net({2, 1, 2});
    net.weights()[0] << 0.5, -1.0;
    net.biases()[0] << 0.25;
    net.weights()[1] << 2.0, -3.0;
    net.biases()[1] << 0.1, 0.2;
    Eigen::VectorXd x(2);
    x << 0.8, 0.1;
    const double h = std::max(0.0, 0.5 * 0.8 - 1.0 * 0.1 + 0.25);
    const Eigen::VectorXd q = net.forward(x);
    CHECK(std::abs(q(0) - (2.0 * h + 0.1)) < 1e-12);
    CHECK(std::abs(q(1) - (-3.0 * h + 0.2)) < 1e-12);
    x << 0.0, 1.0;  // rectifier clamps the hidden unit
    CHECK(std::abs(net.forward(x)(0) - 0.1) < 1e-12);
  }

  TEST_CASE("random networks give finite outputs of the head size") {
    Rng rng(3);
    const QNetwork net({5, 64, 64, 51}, rng);
    for (int i = 0; i < 20; ++i) {
      Eigen::VectorXd s(5);
      for (int k = 0; k < 5; ++k) s(k) = rng.uniform();
      const Eigen::VectorXd q = net.forward(s);
      REQUIRE(q.size() == 51);
      CHECK(q.allFinite());
    }
  }

  TEST_CASE("epsilon-greedy selection") {
    Rng rng(1);
    Eigen::VectorXd q(4);
    q << 3.0, 9.0, 9.0, 1.0;
    CHECK(select_action(q, {true, true, true, true}, 0.0, rng) == 1);
    CHECK(select_action(q, {true, false, true, true}, 0.0, rng) == 2);
    CHECK(select_action(q, {true, false, false, true}, 0.0, rng) == 0);
    CHECK_THROWS_AS(select_action(q, {false, false, false, false}, 0.5, rng), Error);

    std::map<int, int> counts;
    for (int i = 0; i < 30000; ++i) ++counts[select_action(q, {true, false, true, true}, 1.0, rng)];
    CHECK(counts.size() == 3);
    for (const auto& [a, c] : counts) CHECK(std::abs(c - 10000) <= 500);
  }

  TEST_CASE("replay buffer evicts oldest first and samples uniformly") {
    ReplayBuffer b(2);
    for (int i = 1; i <= 3; ++i) b.push(transition(i, 0, 0.0, false));
    CHECK(b.size() == 2);
    const auto held = b.ordered();
    CHECK(held[0]->state(0) == 2.0);
    CHECK(held[1]->state(0) == 3.0);

    Rng rng(5);
    ReplayBuffer full(100);
    for (int i = 0; i < 100; ++i) full.push(transition(i, 0, 0.0, false));
    std::set<double> all;
    for (const Experience* e : full.sample(100, rng)) all.insert(e->state(0));
    CHECK(all.size() == 100);
    CHECK_THROWS_AS(full.sample(101, rng), Error);

    std::vector<int> freq(100, 0);
    for (int k = 0; k < 10000; ++k) {
      std::set<double> drawn;
      for (const Experience* e : full.sample(10, rng)) drawn.insert(e->state(0));
      REQUIRE(drawn.size() == 10);
      for (double v : drawn) ++freq[static_cast<std::size_t>(v)];
    }
    for (int f : freq) CHECK(std::abs(f - 1000) <= 100);
  }

  TEST_CASE("terminal transition loss") {
    QNetwork net({1, 2});
    const QNetwork target = net;
    CHECK(train_step(net, target, {transition(0.5, 1, 2.0, true)}, 0.01, 0.9) == doctest::Approx(4.0));
  }

  TEST_CASE("targets equal to predictions leave the network alone") {
    Rng rng(9);
    QNetwork net({1, 4, 2}, rng);
    net.biases()[1] << 0.7, -0.3;
    const QNetwork target = net;
    const Eigen::VectorXd before = net.flatten();
    std::vector<Experience> batch{transition(0.4, 0, 0.7, true), transition(0.9, 1, -0.3, true)};
    // zero output weights make Q(s, a) equal the output bias for every s
    CHECK(train_step(net, target, batch, 0.1, 0.9) == doctest::Approx(0.0));
    CHECK((net.flatten() - before).norm() == 0.0);
  }

  TEST_CASE("bootstrap ignores illegal next actions") {
    QNetwork target({1, 3});
    target.biases()[0] << 1.0, 5.0, 2.0;
    Experience e = transition(0.0, 0, 1.0, false, 3);
    e.next_legal = {true, false, true};
    const Eigen::VectorXd y = td_targets(target, {&e}, 0.5);
    CHECK(y(0) == doctest::Approx(1.0 + 0.5 * 2.0));
  }

  TEST_CASE("non-finite loss aborts the update") {
    QNetwork net({1, 2});
    const QNetwork target = net;
    Experience e = transition(0.0, 0, 0.0, true);
    e.reward = std::numeric_limits<double>::max();
    const Eigen::VectorXd before = net.flatten();
    Optimizer sgd({}, net);
    CHECK_THROWS_AS(train_step(net, target, {&e}, sgd, 0.9), Error);
    CHECK((net.flatten() - before).norm() == 0.0);
  }

  TEST_CASE("analytic gradient matches central differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(checks::gradient_relative_error(seed) < 1e-4);
  }

  TEST_CASE("repeated batch loss falls toward zero on a frozen target") {
    Rng rng(2);
    QNetwork net({1, 16, 2}, rng);
    const QNetwork target = net;
    std::vector<Experience> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(transition(i / 4.0, i % 2, rng.uniform(-1.0, 1.0), i % 3 == 0));
    double prev = train_step(net, target, batch, 0.02, 0.9);
    const double first = prev;
    int rises = 0;
    for (int step = 0; step < 500; ++step) {
      const double loss = train_step(net, target, batch, 0.02, 0.9);
      rises += loss > prev;
      prev = loss;
    }
    CHECK(rises <= 25);
    CHECK(prev < 0.05 * first);
  }

  TEST_CASE("target sync copies and isolates") {
    Rng rng(4);
    QNetwork net({3, 4, 2}, rng);
    TargetNetwork target(QNetwork({3, 4, 2}));
    sync_target(net, target);
    CHECK(target.sync_count() == 1);
    const Eigen::VectorXd s = Eigen::VectorXd::Constant(3, 0.5);
    CHECK(target.net().forward(s) == net.forward(s));
    net.biases()[1](0) += 1.0;
    CHECK(target.net().forward(s) != net.forward(s));
    TargetNetwork other(QNetwork({3, 5, 2}));
    CHECK_THROWS_AS(sync_target(net, other), Error);
  }

  TEST_CASE("exploration schedule") {
    const ExplorationSchedule s{0.99, 0.995, 0.05};
    CHECK(epsilon_at(s, 0) == doctest::Approx(0.99));
    CHECK(epsilon_at(s, 100) == doctest::Approx(0.99 * std::pow(0.995, 100)));
    CHECK(epsilon_at(s, 100000) == 0.05);
  }

  TEST_CASE("training is reproducible for a seed") {
    const auto run = [] {
      DqnConfig cfg;
      cfg.input_size = 1;
      cfg.output_size = 2;
      cfg.hidden = {4};
      cfg.batch_size = 4;
      Policy p(cfg, 17);
      Rng rng(18);
      for (int i = 0; i < 50; ++i) p.observe(transition(i % 5 / 5.0, i % 2, 0.1 * i, i % 7 == 0), rng);
      return p.net().flatten();
    };
    CHECK(run() == run());
  }

  TEST_CASE("dqn reaches the value-iteration fixed point on a small chain") {
    CHECK(checks::dqn_vs_value_iteration(oracles::chain_mdp(), 0.9, 20000, 1) < 0.05);
  }
}
