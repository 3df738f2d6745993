#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hbmp/behavior.hpp"
#include "hbmp/encoding.hpp"
#include "hbmp/motion.hpp"
#include "hbmp/sim.hpp"

namespace hbmp {

constexpr double kCostScale = 10.0;

/// Negative scaling from planner cost to reward.
double lambda_map(double c_total, double c_scale = kCostScale);

/// Behavior-level reward from the cost of the trajectory actually executed.
double step_reward(const CostBreakdown& executed, double c_scale = kCostScale);

/// Final-state reward. Throws std::invalid_argument for kRunning.
double terminal_reward(Outcome outcome);

/// One completed behavior.
struct Transition {
  std::vector<std::uint8_t> grid;
  std::array<double, RoadProfile::kSize> profile{};
  Behavior behavior = Behavior::kKeep;
  double r_k = 0.0;
  double r_T = 0.0;
  bool done = false;
  double duration = 0.0;
  double log_prob = 0.0;
  double value = 0.0;

  /// Reward the learner sees: the terminal bonus arrives one behavior later.
  [[nodiscard]] double learning_reward(double gamma) const { return r_k + gamma * r_T; }
};

/// sum_k gamma^k r_k + gamma^K r_T over the behaviors of one episode.
double episode_return(const std::vector<Transition>& episode, double gamma);

}  // namespace hbmp
