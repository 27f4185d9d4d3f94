#include "relay/allocation.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace relay {

bool Assignment::feasible() const {
  std::set<int> tasks;
  for (const auto& [robot, task] : robot_to_task)
    if (!tasks.insert(task).second) return false;
  return true;  // one entry per robot by construction of the map
}

std::optional<int> Assignment::task_of(RobotId r) const {
  const auto it = robot_to_task.find(r);
  if (it == robot_to_task.end()) return std::nullopt;
  return it->second;
}

std::optional<RobotId> Assignment::robot_for(int task) const {
  for (const auto& [robot, t] : robot_to_task)
    if (t == task) return robot;
  return std::nullopt;
}

CostMatrix CostMatrix::euclidean(std::span<const RobotId> ids, std::span<const Position> robot_pos,
                                 std::span<const Position> task_pos) {
  CostMatrix m;
  m.robots.assign(ids.begin(), ids.end());
  for (const auto& r : robot_pos) {
    auto& row = m.cost.emplace_back();
    for (const auto& t : task_pos) row.push_back(distance(r, t));
  }
  return m;
}

double total_cost(const Assignment& a, const CostMatrix& m) {
  double sum = 0.0;
  for (const auto& [robot, task] : a.robot_to_task) {
    const auto row = std::find(m.robots.begin(), m.robots.end(), robot) - m.robots.begin();
    sum += m.cost[static_cast<std::size_t>(row)][static_cast<std::size_t>(task)];
  }
  return sum;
}

namespace {

std::optional<Bid> cheapest(RobotId robot, std::span<const double> costs, const std::set<int>& taken, int round) {
  std::optional<Bid> best;
  for (std::size_t t = 0; t < costs.size(); ++t) {
    const int task = static_cast<int>(t);
    if (taken.contains(task)) continue;
    if (!best || costs[t] < best->cost) best = Bid{robot, task, costs[t], round};
  }
  return best;
}

}  // namespace

std::optional<Bid> local_bid(RobotId robot, const Position& where, std::span<const Position> tasks,
                             const std::set<int>& taken, int round) {
  std::vector<double> costs;
  costs.reserve(tasks.size());
  for (const auto& t : tasks) costs.push_back(distance(where, t));
  return cheapest(robot, costs, taken, round);
}

std::vector<Bid> consensus_round(std::span<const Bid> bids) {
  std::map<int, Bid> winners;
  for (const auto& b : bids) {
    auto [it, fresh] = winners.try_emplace(b.task, b);
    if (!fresh && std::tie(b.cost, b.robot) < std::tie(it->second.cost, it->second.robot)) it->second = b;
  }
  std::vector<Bid> out;
  for (auto& [task, bid] : winners) out.push_back(bid);
  return out;
}

Assignment run_consensus(const CostMatrix& m, int* rounds_used) {
  Assignment result;
  std::set<int> taken;
  int round = 0;
  const std::size_t limit = m.tasks();
  while (taken.size() < limit) {
    std::vector<Bid> bids;
    for (std::size_t i = 0; i < m.robots.size(); ++i) {
      if (result.robot_to_task.contains(m.robots[i])) continue;
      if (auto b = cheapest(m.robots[i], m.cost[i], taken, round)) bids.push_back(*b);
    }
    if (bids.empty()) break;
    for (const auto& w : consensus_round(bids)) {
      result.robot_to_task[w.robot] = w.task;
      taken.insert(w.task);
    }
    ++round;
  }
  if (rounds_used) *rounds_used = round;
  return result;
}

Assignment optimal_oracle(const CostMatrix& m) {
  const std::size_t nr = m.robots.size();
  const std::size_t nt = m.tasks();
  if (nr > kOracleCap || nt > kOracleCap) throw std::invalid_argument("optimal_oracle: instance exceeds 8x8 cap");
  Assignment best;
  if (nr == 0 || nt == 0) return best;
  double best_cost = std::numeric_limits<double>::infinity();
  // Permute the larger side and pair it position-wise with the smaller one.
  const bool robots_small = nr <= nt;
  std::vector<std::size_t> perm(robots_small ? nt : nr);
  std::iota(perm.begin(), perm.end(), 0);
  const std::size_t k = std::min(nr, nt);
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < k; ++i) c += robots_small ? m.cost[i][perm[i]] : m.cost[perm[i]][i];
    if (c < best_cost) {
      best_cost = c;
      best.robot_to_task.clear();
      for (std::size_t i = 0; i < k; ++i) {
        if (robots_small)
          best.robot_to_task[m.robots[i]] = static_cast<int>(perm[i]);
        else
          best.robot_to_task[m.robots[perm[i]]] = static_cast<int>(i);
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace relay
