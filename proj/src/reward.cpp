#include "hbmp/reward.hpp"

#include <stdexcept>

namespace hbmp {

double lambda_map(double c_total, double c_scale) { return -c_total / c_scale; }

double step_reward(const CostBreakdown& executed, double c_scale) {
  return lambda_map(executed.c_total, c_scale);
}

double terminal_reward(Outcome o) {
  switch (o) {
    case Outcome::kGoalReached:
      return 100.0;
    case Outcome::kCollision:
    case Outcome::kOvertime:
      return -50.0;
    case Outcome::kRedLightViolation:
      return -10.0;
    case Outcome::kWrongLane:
      return -1.0;
    case Outcome::kRunning:
      break;
  }
  throw std::invalid_argument("terminal_reward: episode is still running");
}

double episode_return(const std::vector<Transition>& episode, double gamma) {
  double g = 0.0, disc = 1.0;
  for (const Transition& t : episode) {
    g += disc * t.learning_reward(gamma);
    disc *= gamma;
  }
  return g;
}

}  // namespace hbmp
