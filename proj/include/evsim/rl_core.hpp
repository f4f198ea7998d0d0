#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evsim/core.hpp"

namespace evsim {

/// Fully connected network with rectified-linear hidden layers and a linear
/// output layer. Hidden weights use He initialisation; the output layer starts
/// at zero so that an untrained network scores every action equally.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Gradient {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
  };

  Mlp() = default;

  /// All parameters zero.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) fail(ErrorKind::InvalidArgument, "network needs at least two layers");
    for (int s : sizes_)
      if (s < 1) fail(ErrorKind::InvalidArgument, "layer sizes must be >= 1");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      W_.push_back(Matrix::Zero(sizes_[l + 1], sizes_[l]));
      b_.push_back(Vector::Zero(sizes_[l + 1]));
    }
  }

  Mlp(std::vector<int> sizes, Rng& rng) : Mlp(std::move(sizes)) {
    for (std::size_t l = 0; l + 1 < W_.size(); ++l) {
      const double sd = std::sqrt(2.0 / static_cast<double>(W_[l].cols()));
      for (Eigen::Index j = 0; j < W_[l].cols(); ++j)
        for (Eigen::Index i = 0; i < W_[l].rows(); ++i) W_[l](i, j) = Scalar(rng.normal(0.0, sd));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t layers() const { return W_.size(); }

  std::vector<Matrix>& weights() { return W_; }
  const std::vector<Matrix>& weights() const { return W_; }
  std::vector<Vector>& biases() { return b_; }
  const std::vector<Vector>& biases() const { return b_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  /// Batched forward pass; columns of `X` are samples.
  Matrix forward(const Matrix& X) const {
    if (X.rows() != input_size())
      fail(ErrorKind::DimensionMismatch, "expected input of size " + std::to_string(input_size()) +
                                             ", got " + std::to_string(X.rows()));
    Matrix a = X;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix z = (W_[l] * a).colwise() + b_[l];
      a = l + 1 < W_.size() ? Matrix(z.cwiseMax(Scalar(0))) : z;
    }
    return a;
  }

  Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

  /// Gradient of a loss with respect to every parameter, given the loss
  /// gradient `dOut` with respect to the batched outputs.
  Gradient backward(const Matrix& X, const Matrix& dOut) const {
    std::vector<Matrix> acts{X};
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix z = (W_[l] * acts.back()).colwise() + b_[l];
      acts.push_back(l + 1 < W_.size() ? Matrix(z.cwiseMax(Scalar(0))) : z);
    }
    Gradient g;
    g.dW.resize(W_.size());
    g.db.resize(W_.size());
    Matrix delta = dOut;
    for (std::size_t l = W_.size(); l-- > 0;) {
      g.dW[l] = delta * acts[l].transpose();
      g.db[l] = delta.rowwise().sum();
      if (l > 0) {
        delta = W_[l].transpose() * delta;
        delta = delta.cwiseProduct((acts[l].array() > Scalar(0)).template cast<Scalar>().matrix());
      }
    }
    return g;
  }

  /// Parameters in layer order, each weight matrix column-major then its bias.
  Vector flatten() const {
    Vector out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      out.segment(k, W_[l].size()) = Eigen::Map<const Vector>(W_[l].data(), W_[l].size());
      k += W_[l].size();
      out.segment(k, b_[l].size()) = b_[l];
      k += b_[l].size();
    }
    return out;
  }

  void unflatten(const Vector& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count())
      fail(ErrorKind::DimensionMismatch, "parameter vector has wrong length");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Eigen::Map<Vector>(W_[l].data(), W_[l].size()) = flat.segment(k, W_[l].size());
      k += W_[l].size();
      b_[l] = flat.segment(k, b_[l].size());
      k += b_[l].size();
    }
  }

  bool same_architecture(const Mlp& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<int> sizes_;
  std::vector<Matrix> W_;
  std::vector<Vector> b_;
};

template <typename Scalar>
typename Mlp<Scalar>::Vector flatten(const typename Mlp<Scalar>::Gradient& g) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < g.dW.size(); ++l) n += g.dW[l].size() + g.db[l].size();
  typename Mlp<Scalar>::Vector out(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    out.segment(k, g.dW[l].size()) =
        Eigen::Map<const typename Mlp<Scalar>::Vector>(g.dW[l].data(), g.dW[l].size());
    k += g.dW[l].size();
    out.segment(k, g.db[l].size()) = g.db[l];
    k += g.db[l].size();
  }
  return out;
}

using QNetwork = Mlp<double>;

/// Action legality over the fixed output head.
using ActionMask = std::vector<bool>;

struct Experience {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  /// Legal actions in `next_state`; the bootstrap max ranges over these.
  ActionMask next_legal;
  bool terminal = false;
};

/// Mean squared temporal-difference loss over a batch whose targets are
/// already fixed: mean_i (y_i - Q(s_i, a_i))^2.
template <typename Scalar>
Scalar td_loss(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& states,
               const std::vector<int>& actions, const typename Mlp<Scalar>::Vector& targets) {
  const auto q = net.forward(states);
  Scalar sum(0);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Scalar d = targets(static_cast<Eigen::Index>(i)) - q(actions[i], static_cast<Eigen::Index>(i));
    sum += d * d;
  }
  return sum / Scalar(actions.size());
}

template <typename Scalar>
std::pair<Scalar, typename Mlp<Scalar>::Gradient> td_loss_gradient(
    const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& states,
    const std::vector<int>& actions, const typename Mlp<Scalar>::Vector& targets) {
  const auto q = net.forward(states);
  typename Mlp<Scalar>::Matrix dOut = Mlp<Scalar>::Matrix::Zero(q.rows(), q.cols());
  Scalar sum(0);
  const Scalar inv_n = Scalar(1) / Scalar(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const Scalar d = targets(c) - q(actions[i], c);
    sum += d * d;
    dOut(actions[i], c) = Scalar(-2) * d * inv_n;
  }
  return {sum * inv_n, net.backward(states, dOut)};
}

/// y = r for terminal transitions, else r + gamma * max over legal a' of Q(s', a'; target).
Eigen::VectorXd td_targets(const QNetwork& target, const std::vector<const Experience*>& batch,
                           double gamma);

struct OptimizerConfig {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Sgd;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Gradient norm clip; 0 disables.
  double max_grad_norm = 0.0;
};

std::string to_string(OptimizerConfig::Kind kind);
OptimizerConfig::Kind parse_optimizer(const std::string& text);

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, const QNetwork& net);

  void apply(QNetwork& net, const QNetwork::Gradient& grad);

  const OptimizerConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }
  Eigen::VectorXd& first_moment() { return m_; }
  Eigen::VectorXd& second_moment() { return v_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  OptimizerConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t t_ = 0;
};

/// One gradient step on `net` toward the targets produced by `target`.
/// Returns the loss before the update; throws NonFiniteLoss without touching
/// `net` when the loss is not finite.
double train_step(QNetwork& net, const QNetwork& target, const std::vector<const Experience*>& batch,
                  Optimizer& optimizer, double gamma);

/// Convenience overload with plain gradient descent at `lr`.
double train_step(QNetwork& net, const QNetwork& target, const std::vector<Experience>& batch,
                  double lr, double gamma);

class TargetNetwork {
 public:
  TargetNetwork() = default;
  explicit TargetNetwork(const QNetwork& net) : net_(net) {}

  const QNetwork& net() const { return net_; }
  QNetwork& net() { return net_; }
  std::int64_t sync_count() const { return sync_count_; }
  void set_sync_count(std::int64_t n) { sync_count_ = n; }

  void sync_from(const QNetwork& source);

 private:
  QNetwork net_;
  std::int64_t sync_count_ = 0;
};

void sync_target(const QNetwork& net, TargetNetwork& target);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  void push(Experience e);
  /// Uniform sample of `n` distinct stored experiences.
  std::vector<const Experience*> sample(std::size_t n, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  /// Stored experiences, oldest first.
  std::vector<const Experience*> ordered() const;
  void restore(std::vector<Experience> oldest_first, std::uint64_t inserted);

 private:
  std::size_t capacity_;
  std::vector<Experience> items_;
  std::size_t next_ = 0;
  std::uint64_t inserted_ = 0;
};

struct ExplorationSchedule {
  double epsilon_start = 0.99;
  double decay = 0.995;
  double epsilon_floor = 0.05;
};

double epsilon_at(const ExplorationSchedule& schedule, int episode);

/// Epsilon-greedy over the legal entries; exploitation breaks ties toward the
/// lowest index.
int select_action(const Eigen::VectorXd& q, const ActionMask& legal, double epsilon, Rng& rng);

int greedy_action(const Eigen::VectorXd& q, const ActionMask& legal);

struct DqnConfig {
  int input_size = 5;
  int output_size = 51;
  std::vector<int> hidden{64, 64};
  double discount = 0.95;
  int batch_size = 32;
  int sync_every = 200;
  std::size_t buffer_capacity = 10000;
  OptimizerConfig optimizer;
  ExplorationSchedule exploration;
};

void validate(const DqnConfig& config);

/// A group's learner: online and target networks, replay memory and optimiser.
class Policy {
 public:
  Policy() = default;
  Policy(const DqnConfig& config, std::uint64_t seed);

  const DqnConfig& config() const { return config_; }
  QNetwork& net() { return net_; }
  const QNetwork& net() const { return net_; }
  TargetNetwork& target() { return target_; }
  const TargetNetwork& target() const { return target_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  Optimizer& optimizer() { return optimizer_; }
  const Optimizer& optimizer() const { return optimizer_; }
  std::int64_t train_steps() const { return train_steps_; }
  void set_train_steps(std::int64_t n) { train_steps_ = n; }

  Eigen::VectorXd q_values(const Eigen::VectorXd& state) const { return net_.forward(state); }

  /// Stores the transition and, once the buffer holds a batch, performs one
  /// train step (syncing the target every `sync_every` steps). Returns the loss
  /// when a step was taken.
  std::optional<double> observe(Experience e, Rng& rng);

 private:
  DqnConfig config_;
  QNetwork net_;
  TargetNetwork target_;
  ReplayBuffer buffer_;
  Optimizer optimizer_;
  std::int64_t train_steps_ = 0;
};

}  // namespace evsim
