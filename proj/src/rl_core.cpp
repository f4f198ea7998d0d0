#include "evsim/rl_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace evsim {

Eigen::VectorXd td_targets(const QNetwork& target, const std::vector<const Experience*>& batch,
                           double gamma) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Experience& e = *batch[i];
    double value = e.reward;
    if (!e.terminal) {
      const Eigen::VectorXd q = target.forward(e.next_state);
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index a = 0; a < q.size(); ++a)
        if (static_cast<std::size_t>(a) < e.next_legal.size() && e.next_legal[a])
          best = std::max(best, q(a));
      if (std::isfinite(best)) value += gamma * best;
    }
    y(static_cast<Eigen::Index>(i)) = value;
  }
  return y;
}

std::string to_string(OptimizerConfig::Kind kind) {
  return kind == OptimizerConfig::Kind::Adam ? "adam" : "sgd";
}

OptimizerConfig::Kind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerConfig::Kind::Sgd;
  if (text == "adam") return OptimizerConfig::Kind::Adam;
  fail(ErrorKind::InvalidConfig, "optimizer: unknown kind '" + text + "'");
}

Optimizer::Optimizer(OptimizerConfig config, const QNetwork& net) : config_(config) {
  if (config_.kind == OptimizerConfig::Kind::Adam) {
    m_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    v_ = m_;
  }
}

void Optimizer::apply(QNetwork& net, const QNetwork::Gradient& grad) {
  Eigen::VectorXd g = flatten<double>(grad);
  if (config_.max_grad_norm > 0.0) {
    const double norm = g.norm();
    if (norm > config_.max_grad_norm) g *= config_.max_grad_norm / norm;
  }
  ++t_;
  Eigen::VectorXd theta = net.flatten();
  if (config_.kind == OptimizerConfig::Kind::Sgd) {
    theta -= config_.learning_rate * g;
  } else {
    if (m_.size() != g.size()) fail(ErrorKind::ArchitectureMismatch, "optimizer state size");
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * g;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    theta.array() -= config_.learning_rate * (m_.array() / c1) /
                     ((v_.array() / c2).sqrt() + config_.epsilon);
  }
  net.unflatten(theta);
}

double train_step(QNetwork& net, const QNetwork& target, const std::vector<const Experience*>& batch,
                  Optimizer& optimizer, double gamma) {
  if (batch.empty()) fail(ErrorKind::InvalidArgument, "empty batch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorKind::InvalidArgument, "gamma must lie in [0, 1]");
  if (!net.same_architecture(target)) fail(ErrorKind::ArchitectureMismatch, "online vs target network");
  Eigen::MatrixXd states(net.input_size(), static_cast<Eigen::Index>(batch.size()));
  std::vector<int> actions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->state.size() != net.input_size())
      fail(ErrorKind::DimensionMismatch, "experience state size");
    if (batch[i]->action < 0 || batch[i]->action >= net.output_size())
      fail(ErrorKind::InvalidArgument, "experience action out of range");
    states.col(static_cast<Eigen::Index>(i)) = batch[i]->state;
    actions[i] = batch[i]->action;
  }
  const Eigen::VectorXd y = td_targets(target, batch, gamma);
  auto [loss, grad] = td_loss_gradient<double>(net, states, actions, y);
  if (!std::isfinite(loss)) fail(ErrorKind::NonFiniteLoss, "loss is " + std::to_string(loss));
  optimizer.apply(net, grad);
  return loss;
}

double train_step(QNetwork& net, const QNetwork& target, const std::vector<Experience>& batch,
                  double lr, double gamma) {
  if (!(lr > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be > 0");
  OptimizerConfig cfg;
  cfg.learning_rate = lr;
  Optimizer sgd(cfg, net);
  std::vector<const Experience*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  return train_step(net, target, ptrs, sgd, gamma);
}

void TargetNetwork::sync_from(const QNetwork& source) {
  if (!net_.sizes().empty() && !net_.same_architecture(source))
    fail(ErrorKind::ArchitectureMismatch, "target network architecture differs");
  net_ = source;
  ++sync_count_;
}

void sync_target(const QNetwork& net, TargetNetwork& target) { target.sync_from(net); }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) fail(ErrorKind::InvalidArgument, "replay capacity must be > 0");
}

void ReplayBuffer::push(Experience e) {
  if (!std::isfinite(e.reward)) fail(ErrorKind::NonFiniteReward, "experience reward");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[next_] = std::move(e);
  }
  next_ = (next_ + 1) % capacity_;
  ++inserted_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > items_.size())
    fail(ErrorKind::BufferTooSmall, "need " + std::to_string(n) + ", have " + std::to_string(items_.size()));
  // Floyd's algorithm: n distinct indices, each subset equally likely.
  const std::size_t size = items_.size();
  std::vector<std::size_t> picked;
  std::set<std::size_t> seen;
  for (std::size_t j = size - n; j < size; ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.below(j + 1));
    const std::size_t choice = seen.count(t) ? j : t;
    seen.insert(choice);
    picked.push_back(choice);
  }
  std::vector<const Experience*> out;
  out.reserve(n);
  for (std::size_t idx : picked) out.push_back(&items_[idx]);
  return out;
}

std::vector<const Experience*> ReplayBuffer::ordered() const {
  std::vector<const Experience*> out;
  const std::size_t start = items_.size() < capacity_ ? 0 : next_;
  for (std::size_t k = 0; k < items_.size(); ++k) out.push_back(&items_[(start + k) % items_.size()]);
  return out;
}

void ReplayBuffer::restore(std::vector<Experience> oldest_first, std::uint64_t inserted) {
  if (oldest_first.size() > capacity_) fail(ErrorKind::InvalidArgument, "restored buffer exceeds capacity");
  items_ = std::move(oldest_first);
  next_ = items_.size() % capacity_;
  inserted_ = inserted;
}

double epsilon_at(const ExplorationSchedule& s, int episode) {
  if (episode < 0) fail(ErrorKind::InvalidArgument, "episode must be >= 0");
  return std::max(s.epsilon_floor, s.epsilon_start * std::pow(s.decay, episode));
}

int greedy_action(const Eigen::VectorXd& q, const ActionMask& legal) {
  if (static_cast<Eigen::Index>(legal.size()) != q.size())
    fail(ErrorKind::DimensionMismatch, "mask and q-values differ in length");
  int best = -1;
  for (Eigen::Index a = 0; a < q.size(); ++a)
    if (legal[a] && (best < 0 || q(a) > q(best))) best = static_cast<int>(a);
  if (best < 0) fail(ErrorKind::NoLegalAction, "every action is masked");
  return best;
}

int select_action(const Eigen::VectorXd& q, const ActionMask& legal, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail(ErrorKind::InvalidArgument, "epsilon must lie in [0, 1]");
  const int best = greedy_action(q, legal);
  if (!rng.bernoulli(epsilon)) return best;
  std::vector<int> options;
  for (std::size_t a = 0; a < legal.size(); ++a)
    if (legal[a]) options.push_back(static_cast<int>(a));
  return options[rng.below(options.size())];
}

void validate(const DqnConfig& c) {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::InvalidConfig, what);
  };
  require(c.input_size >= 1, "dqn.input_size: must be >= 1");
  require(c.output_size >= 1, "dqn.output_size: must be >= 1");
  for (int h : c.hidden) require(h >= 1, "dqn.hidden: sizes must be >= 1");
  require(c.discount >= 0.0 && c.discount <= 1.0, "dqn.discount: must lie in [0, 1]");
  require(c.batch_size >= 1, "dqn.batch_size: must be >= 1");
  require(c.sync_every >= 1, "dqn.sync_every: must be >= 1");
  require(c.buffer_capacity >= static_cast<std::size_t>(c.batch_size),
          "dqn.buffer_capacity: must be >= batch_size");
  require(c.optimizer.learning_rate > 0.0, "dqn.learning_rate: must be > 0");
  require(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0, "dqn.beta1: must lie in [0, 1)");
  require(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0, "dqn.beta2: must lie in [0, 1)");
  require(c.optimizer.epsilon > 0.0, "dqn.adam_epsilon: must be > 0");
  require(c.optimizer.max_grad_norm >= 0.0, "dqn.max_grad_norm: must be >= 0");
  const auto& e = c.exploration;
  require(e.epsilon_start >= 0.0 && e.epsilon_start <= 1.0, "dqn.epsilon_start: must lie in [0, 1]");
  require(e.decay > 0.0 && e.decay <= 1.0, "dqn.epsilon_decay: must lie in (0, 1]");
  require(e.epsilon_floor >= 0.0 && e.epsilon_floor <= e.epsilon_start,
          "dqn.epsilon_floor: must lie in [0, epsilon_start]");
}

Policy::Policy(const DqnConfig& config, std::uint64_t seed)
    : config_(config), buffer_(config.buffer_capacity) {
  validate(config_);
  std::vector<int> sizes{config_.input_size};
  sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
  sizes.push_back(config_.output_size);
  Rng rng(seed);
  net_ = QNetwork(sizes, rng);
  target_ = TargetNetwork(net_);
  optimizer_ = Optimizer(config_.optimizer, net_);
}

std::optional<double> Policy::observe(Experience e, Rng& rng) {
  buffer_.push(std::move(e));
  if (buffer_.size() < static_cast<std::size_t>(config_.batch_size)) return std::nullopt;
  const auto batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size), rng);
  const double loss = train_step(net_, target_.net(), batch, optimizer_, config_.discount);
  ++train_steps_;
  if (train_steps_ % config_.sync_every == 0) sync_target(net_, target_);
  return loss;
}

}  // namespace evsim
