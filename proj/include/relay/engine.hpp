#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "relay/controller.hpp"
#include "relay/planner.hpp"
#include "relay/radio.hpp"
#include "relay/rng.hpp"
#include "relay/world.hpp"

namespace relay {

struct FailurePlan {
  enum class Mode { None, Scripted, Random, Consecutive };
  struct Scripted {
    Tick tick = 0;
    std::vector<RobotId> robots;
    bool operator==(const Scripted&) const = default;
  };

  Mode mode = Mode::None;
  std::vector<Scripted> scripted;
  double p = 0.0005;      // per robot per step
  double fraction = 0.0;  // F: cap on failed robots as a fraction of the roster
  // Consecutive mode: once every chain is complete, wait `delay` seconds and
  // fail `count` robots of chain 0 starting at depth `start_depth`.
  int count = 0;
  int start_depth = 2;
  double delay = 2.0;

  void validate() const;
  bool operator==(const FailurePlan&) const = default;
};

std::string_view to_string(FailurePlan::Mode m);

struct RobotSpawn {
  RobotKind kind = RobotKind::Ground;
  Position position{};
};

struct SimConfig {
  std::shared_ptr<const GridMap> map;
  RadioConfig radio;
  ControlConfig control;
  Mission mission;
  PlannerConfig planner;
  bool astar_only = false;
  std::vector<RobotSpawn> robots;
  FailurePlan failures;
  std::uint64_t seed = 1;
  Tick tick_budget = 6000;
  bool strict_audit = false;
  bool record_trajectory = true;
  bool stop_on_complete = true;
  double completion_slack = 0.05;  // extra link length tolerated by the completion test
  Tick audit_grace = 5;            // ticks a structural anomaly may persist (join handshakes)
  std::string scenario_id = "scenario";
};

struct AuditViolation {
  Tick tick = 0;
  std::string kind;  // "link", "structure", "ground", "obstacle"
  RobotId a = kNoRobot;
  RobotId b = kNoRobot;
  double value = 0.0;
  std::string detail;
};

class AuditAbort : public std::runtime_error {
 public:
  AuditAbort(const std::string& what, std::string snapshot) : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

struct HealEvent {
  Tick failure_tick = 0;
  std::vector<RobotId> robots;
  std::vector<int> chains;
  Tick recovered_tick = -1;
  Tick recovery_ticks() const { return recovered_tick < 0 ? -1 : recovered_tick - failure_tick; }
};

struct Metrics {
  std::string scenario_id;
  std::uint64_t seed = 0;
  bool complete = false;
  Tick ticks = 0;
  double dt = 0.1;
  std::vector<Tick> completion_tick;     // first completion per chain, -1 if never
  std::vector<double> traversal_time;    // plan length / v_max per chain
  std::vector<double> time_factor;       // completion time / traversal time per chain
  std::vector<HealEvent> heals;
  std::vector<double> max_link;          // per tick, over mutual chain links
  double max_link_at_completion = 0.0;
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
  int failed = 0;
  std::size_t link_violations = 0;
  std::size_t other_violations = 0;
  std::uint64_t parked_requests = 0;

  // Completion time of the slowest chain over its traversal time.
  double overall_time_factor() const;
  double completion_seconds() const;
};

struct TrajRow {
  Tick tick = 0;
  RobotId robot = kNoRobot;
  Position pos{};
  std::string role;
  int chain = -1;
  RobotId parent = kNoRobot;
  RobotId child = kNoRobot;
  double speed = 0.0;
};

inline constexpr const char* kTrajectoryHeader = "tick,robot,x,y,z,role,chain,parent,child,speed";
inline constexpr const char* kMetricsHeader =
    "scenario,seed,complete,ticks,completion_ticks,time_factor,link_time_factors,heal_events,recovery_ticks,"
    "messages,bytes,failed,link_violations,other_violations,parked_requests";

std::string trajectory_csv(const std::vector<TrajRow>& rows);
// Throws std::runtime_error on a header or column mismatch.
std::vector<TrajRow> parse_trajectory_csv(const std::string& text);
std::string metrics_row(const Metrics& m);
std::string decisions_csv(const std::vector<DecisionEvent>& events);

struct RenderOptions {
  std::vector<Position> targets;
  double safe_radius = 1.4;
  double scale = 24.0;  // pixels per meter
};
// Snapshot at `tick` over the full history in `rows`. Throws std::out_of_range
// when the tick is not in the log.
std::string render_svg(const GridMap& map, const std::vector<TrajRow>& rows, Tick tick, const RenderOptions& opt);

class Simulation {
 public:
  explicit Simulation(SimConfig cfg);

  void step();
  // Steps until done() or the tick budget; returns the metrics.
  const Metrics& run();
  bool done() const;

  Tick tick() const { return tick_; }
  const SimConfig& config() const { return cfg_; }
  const GridMap& map() const { return *cfg_.map; }
  const std::vector<RobotState>& robots() const { return robots_; }
  RobotState& robot(RobotId id) { return robots_.at(static_cast<std::size_t>(id)); }
  const Metrics& metrics() const { return metrics_; }
  const std::vector<DecisionEvent>& events() const { return events_; }
  const std::vector<AuditViolation>& violations() const { return violations_; }
  const std::vector<TrajRow>& trajectory() const { return trajectory_; }
  std::vector<TrajRow> snapshot_rows() const;

  // Fixture hooks.
  void fail(RobotId id);
  void teleport(RobotId id, const Position& p);

  // Omniscient checks over the current state.
  std::vector<AuditViolation> audit();
  // Members of a chain from the root outward, following mutual links.
  std::vector<RobotId> chain_members(int chain) const;
  bool chain_complete(int chain) const;
  bool all_complete() const;
  int alive_count() const;
  RobotId root() const;

  std::string render_final() const;
  // Writes metrics.csv, trajectory.csv, decisions.csv and final.svg.
  void write_artifacts(const std::string& dir) const;

 private:
  void apply_failures(std::vector<RobotId> ids);
  void schedule_failures();
  void random_failures();
  void record();
  void update_completion();
  bool mutual(RobotId parent, RobotId child) const;
  std::string describe_state() const;

  SimConfig cfg_;
  std::unique_ptr<Planner> planner_;
  std::vector<RobotState> robots_;
  std::vector<Outbox> outboxes_;
  std::vector<Vec3> commands_;
  Rng delivery_rng_;
  Rng failure_rng_;
  Tick tick_ = 0;
  Metrics metrics_;
  std::vector<DecisionEvent> events_;
  std::vector<AuditViolation> violations_;
  std::map<std::string, Tick> anomalies_;
  std::vector<TrajRow> trajectory_;
  bool completed_once_ = false;
  Tick consecutive_at_ = -1;
  bool consecutive_done_ = false;
  Tick last_failure_tick_ = -1;
};

}  // namespace relay
