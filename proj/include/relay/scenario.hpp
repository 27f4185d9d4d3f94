#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "relay/engine.hpp"

namespace relay {

// Malformed scenario text: bad JSON, wrong types, unknown fields. The message
// names the offending key path.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kScenarioVersion = 1;

struct WallSpec {
  CellRange wall;
  std::vector<WindowCell> window;
  int window_layer = 1;
  bool operator==(const WallSpec&) const = default;
};

struct MapSpec {
  std::string file;  // relative to the scenario file
  double resolution = 1.0;
  int layers = 3;
  bool extrude = false;
  std::optional<WallSpec> wall;
  bool operator==(const MapSpec&) const = default;
};

struct PlacedRobot {
  RobotKind kind = RobotKind::Ground;
  Position position{};
  bool operator==(const PlacedRobot&) const = default;
};

// Ground robots get ids 0..ground-1, flying robots follow. A fixed root is
// placed on the anchor; everybody else is scattered in the spawn box.
struct RosterSpec {
  int ground = 0;
  int flying = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // spawn box (m)
  double separation = 0.5;
  double flying_altitude = 0.0;
  std::vector<PlacedRobot> placed;  // overrides the counts when present
  bool operator==(const RosterSpec&) const = default;
};

struct ScenarioSpec {
  int version = kScenarioVersion;
  std::string id = "scenario";
  MapSpec map;
  RosterSpec robots;
  RootMode root_mode = RootMode::Fixed;
  RobotId root = 0;
  Position anchor{};
  std::vector<Position> targets;
  int links = 1;
  RadioConfig radio;
  ControlConfig control;
  FailurePlan failures;
  PlannerConfig planner;
  bool astar_only = false;
  std::uint64_t seed = 1;
  Tick tick_budget = 6000;
  std::string output;
  std::string sweep_axis;
  std::vector<double> sweep_values;

  std::filesystem::path base_dir;  // not serialized

  bool operator==(const ScenarioSpec& o) const;
};

ScenarioSpec parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {});
ScenarioSpec load_scenario(const std::filesystem::path& file);
// Canonical form with every field spelled out.
std::string serialize_scenario(const ScenarioSpec& spec);

// Loads the map and validates everything the engine needs. Throws SpecError
// or ConfigError.
GridMap build_map(const ScenarioSpec& spec);
std::vector<RobotSpawn> build_roster(const ScenarioSpec& spec, const GridMap& map);
SimConfig build_sim(const ScenarioSpec& spec);

// Sweep axes: failure_count, fraction, links, flying, p.
std::vector<std::string> sweep_axes();
void apply_sweep(ScenarioSpec& spec, std::string_view axis, double value);

}  // namespace relay
