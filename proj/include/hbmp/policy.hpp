#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hbmp/behavior.hpp"
#include "hbmp/encoding.hpp"

namespace hbmp {

struct ConvSpec {
  int out_channels;
  int kernel;
  int stride;
  int pad;
};

/// Layer sizes of one branch-and-head network.
struct NetworkShape {
  int grid_rows = 64;
  int grid_cols = 16;
  int profile_size = static_cast<int>(RoadProfile::kSize);
  std::vector<ConvSpec> convs{{8, 5, 2, 2}, {16, 3, 2, 1}, {16, 3, 2, 1}};
  int grid_fc = 64;
  std::vector<int> profile_fc{32, 32};
  std::vector<int> head_fc{64, 64};
  int outputs = kBehaviorCount;
};

/// Every intermediate activation of one forward pass.
struct ForwardCache {
  std::vector<double> grid;      // input as 0/1 doubles
  std::vector<double> profile;   // input scalars
  std::vector<std::vector<double>> conv;     // post-rectifier, per conv layer
  std::vector<double> grid_fc;               // post-rectifier
  std::vector<std::vector<double>> prof;     // post-rectifier, per profile layer
  std::vector<double> concat;
  std::vector<std::vector<double>> head;     // post-rectifier, per head layer
  std::vector<double> out;                   // raw outputs (logits or value)
  const void* owner = nullptr;
  std::uint64_t version = 0;
};

/// Two-branch convolutional network with flat parameter storage.
class Network {
 public:
  struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  explicit Network(NetworkShape shape = NetworkShape{});

  /// Fan-in scaled uniform initialisation; the output layer is scaled down
  /// so a fresh actor is close to uniform.
  void init(std::uint64_t seed);

  [[nodiscard]] ForwardCache forward(const std::vector<std::uint8_t>& grid,
                                     const std::vector<double>& profile) const;
  /// Accumulates d(loss)/d(theta) into `grads` given d(loss)/d(out).
  /// Throws std::logic_error when the cache came from other parameters.
  void backward(const ForwardCache& cache, const std::vector<double>& out_grad,
                std::vector<double>& grads) const;

  [[nodiscard]] const NetworkShape& shape() const { return shape_; }
  [[nodiscard]] const std::vector<Tensor>& tensors() const { return tensors_; }
  [[nodiscard]] std::vector<double>& params() { return theta_; }
  [[nodiscard]] const std::vector<double>& params() const { return theta_; }
  [[nodiscard]] std::size_t param_count() const { return theta_.size(); }
  /// Call after writing to params() directly so stale caches are caught.
  void touch() { ++version_; }
  [[nodiscard]] std::uint64_t version() const { return version_; }

 private:
  struct Conv {
    int in_c, in_h, in_w, out_c, out_h, out_w, k, stride, pad;
    std::size_t w, b;
  };
  struct Dense {
    int in, out;
    std::size_t w, b;
  };

  std::size_t add_tensor(const std::string& name, std::vector<int> shape);

  NetworkShape shape_;
  std::vector<Tensor> tensors_;
  std::vector<Conv> convs_;
  Dense grid_fc_{};
  std::vector<Dense> profile_fc_;
  std::vector<Dense> head_fc_;
  Dense out_{};
  std::vector<double> theta_;
  std::uint64_t version_ = 0;
};

struct BehaviorDistribution {
  std::array<double, kBehaviorCount> probs{};
};

BehaviorDistribution softmax(const std::vector<double>& logits);

struct ActorCritic {
  ActorCritic();
  explicit ActorCritic(const NetworkShape& shape);
  Network actor;
  Network critic;

  void init(std::uint64_t seed);
};

std::vector<double> profile_input(const RoadProfile& p);

std::pair<BehaviorDistribution, ForwardCache> actor_forward(const Network& actor,
                                                            const std::vector<std::uint8_t>& grid,
                                                            const std::vector<double>& profile);
std::pair<double, ForwardCache> critic_forward(const Network& critic,
                                               const std::vector<std::uint8_t>& grid,
                                               const std::vector<double>& profile);

/// d log p(action) / d logits.
std::vector<double> log_prob_grad(const BehaviorDistribution& d, std::size_t action);

/// Inverse-CDF draw; returns the behavior and its log-probability.
std::pair<Behavior, double> sample_action(const BehaviorDistribution& d, std::mt19937_64& rng);
Behavior greedy_action(const BehaviorDistribution& d);

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Network& net, const std::vector<double>& grads);
  void set_lr(double lr) { lr_ = lr; }
  [[nodiscard]] double lr() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Scales `grads` so its L2 norm is at most `max_norm`; returns the old norm.
double clip_grad_norm(std::vector<double>& grads, double max_norm);

/// Versioned binary checkpoint holding named tensors with shape headers.
void save_checkpoint(const std::string& path, const ActorCritic& model);
void load_checkpoint(const std::string& path, ActorCritic& model);

}  // namespace hbmp
