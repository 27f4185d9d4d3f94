#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "relay/codec.hpp"
#include "relay/geometry.hpp"
#include "relay/world.hpp"

namespace relay {

class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PlanMode : std::uint8_t { Ground2D = 0, Full3D = 1 };

// Piecewise-linear path through free space.
struct Path {
  std::vector<Position> waypoints;
  PlanMode mode = PlanMode::Ground2D;

  bool empty() const { return waypoints.empty(); }
  double length() const;
  // Point at arc length s (clamped to the path).
  Position at(double s) const;
};

// Shared plan for one chain: the path, whether it exists, and the prefix
// ground robots can drive.
struct PathTuple {
  Path path;
  bool path_exists = false;
  Path ground;
  std::uint32_t version = 0;
  int target = -1;

  // Compact encoding for stigmergy (float32 waypoints; the ground prefix is
  // rebuilt by the reader with project_ground).
  Bytes encode() const;
  static PathTuple decode(std::span<const std::uint8_t> bytes, const GridMap& map);
};

// Depth-first search over 4-connected (ground) or 6-connected (3D) free cells.
// Throws PlannerError when the start lies in an obstacle.
bool check_reachable(const GridMap& map, const Position& start, const Position& target, PlanMode mode);

struct PlannerConfig {
  int budget = 20000;         // RRT* iterations
  double step = 0.7;          // steering distance (m)
  double goal_bias = 0.05;
  double goal_tolerance = 0.7;  // delta_tol (m)
  bool smooth = true;         // greedy line-of-sight shortcutting
  bool operator==(const PlannerConfig&) const = default;
};

// RRT* with the shrinking-ball rewiring radius. Deterministic for a given seed.
std::optional<Path> plan_rrt_star(const GridMap& map, const Position& start, const Position& target, PlanMode mode,
                                  const PlannerConfig& cfg, std::uint64_t seed);

// Shortest 8-connected (ground) / 26-connected (3D) grid path with no corner
// cutting. Endpoints are the exact query positions, interior points cell centers.
std::optional<Path> astar_oracle(const GridMap& map, const Position& start, const Position& target, PlanMode mode);

// Maximal ground-traversable prefix: waypoints with z = 0, truncated before the
// first segment whose ground projection is blocked.
Path project_ground(const Path& path, const GridMap& map);

// Greedy single pass: from each kept waypoint jump to the farthest visible one.
Path shortcut(const Path& path, const GridMap& map);

// Inserts waypoints so no segment is longer than `spacing`.
Path densify(const Path& path, double spacing);

// Chain size needed to span d_path with links of d_s.
int required_robots(double d_path, double d_s);

class Planner {
 public:
  virtual ~Planner() = default;
  virtual std::optional<Path> plan(const GridMap& map, const Position& start, const Position& target, PlanMode mode,
                                   std::uint64_t seed) const = 0;
};

class RrtStarPlanner final : public Planner {
 public:
  explicit RrtStarPlanner(PlannerConfig cfg) : cfg_(cfg) {}
  std::optional<Path> plan(const GridMap& map, const Position& start, const Position& target, PlanMode mode,
                           std::uint64_t seed) const override {
    return plan_rrt_star(map, start, target, mode, cfg_, seed);
  }

 private:
  PlannerConfig cfg_;
};

class AStarPlanner final : public Planner {
 public:
  explicit AStarPlanner(bool smooth = true) : smooth_(smooth) {}
  std::optional<Path> plan(const GridMap& map, const Position& start, const Position& target, PlanMode mode,
                           std::uint64_t) const override;

 private:
  bool smooth_;
};

// RRT* first, A* when the sampling budget runs out.
class FallbackPlanner final : public Planner {
 public:
  explicit FallbackPlanner(PlannerConfig cfg) : rrt_(cfg), astar_(cfg.smooth) {}
  std::optional<Path> plan(const GridMap& map, const Position& start, const Position& target, PlanMode mode,
                           std::uint64_t seed) const override {
    if (auto p = rrt_.plan(map, start, target, mode, seed)) return p;
    return astar_.plan(map, start, target, mode, seed);
  }

 private:
  RrtStarPlanner rrt_;
  AStarPlanner astar_;
};

}  // namespace relay
