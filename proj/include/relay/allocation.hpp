#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "relay/geometry.hpp"

namespace relay {

struct Bid {
  RobotId robot = kNoRobot;
  int task = -1;
  double cost = 0.0;  // straight-line distance from robot to task
  int round = 0;
};

// Single assignment: each robot holds at most one task and each task has at
// most one robot.
struct Assignment {
  std::map<RobotId, int> robot_to_task;

  bool feasible() const;
  std::optional<int> task_of(RobotId r) const;
  std::optional<RobotId> robot_for(int task) const;
};

// Dense |robots| x |tasks| cost matrix; row i belongs to robot `robots[i]`.
struct CostMatrix {
  std::vector<RobotId> robots;
  std::vector<std::vector<double>> cost;

  std::size_t tasks() const { return cost.empty() ? 0 : cost.front().size(); }
  static CostMatrix euclidean(std::span<const RobotId> ids, std::span<const Position> robot_pos,
                              std::span<const Position> task_pos);
};

double total_cost(const Assignment& a, const CostMatrix& m);

// Bid on the cheapest task not in `taken`; equal costs go to the lower task id.
std::optional<Bid> local_bid(RobotId robot, const Position& where, std::span<const Position> tasks,
                             const std::set<int>& taken, int round);

// Winner determination for one round: per task the lowest (cost, robot id).
// Independent of bid order.
std::vector<Bid> consensus_round(std::span<const Bid> bids);

// Sequential auction: free robots bid on their cheapest open task, winners are
// fixed, losers re-bid on what remains. Finishes in at most |tasks| rounds.
Assignment run_consensus(const CostMatrix& m, int* rounds_used = nullptr);

// Exhaustive search over injective maps of the smaller side (test scale only).
inline constexpr std::size_t kOracleCap = 8;
Assignment optimal_oracle(const CostMatrix& m);

}  // namespace relay
