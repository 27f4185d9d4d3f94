#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "relay/geometry.hpp"
#include "relay/messages.hpp"
#include "relay/planner.hpp"
#include "relay/radio.hpp"
#include "relay/stigmergy.hpp"
#include "relay/world.hpp"

namespace relay {

struct ControlConfig {
  double v_max = 0.5;  // m/s
  double dt = 0.1;     // s
  double alpha = 1.0;
  double r_col = 0.25;         // m
  double avoid_radius = 1.0;   // neighbors closer than this enter the RVO sum
  double link_failure_time = 5.0;
  double status_period = 0.1;
  double forgetting_time = 3.0;
  double bidding_time = 10.0;
  double query_period = 1.0;
  bool wp_prediction = false;
  double target_tolerance = 0.0;  // delta_tol; <= 0 means d_s / 2
  double lookahead = 0.5;         // carrot distance along the path (m)
  double tight_fraction = 0.97;   // parent link counts as exhausted above this * d_s
  double join_fraction = 0.95;    // joins and re-links need d <= this * d_s
  int window_k = 2;
  double request_timeout = 5.0;
  double join_timeout = 60.0;
  double claim_timeout = 2.0;
  double replan_interval = 10.0;
  double loiter_radius = 0.0;  // <= 0 means 2 * d_s

  // Throws ConfigError; needs v_max * dt < d_b - d_c among others.
  void validate(const RadioConfig& radio) const;
  Tick ticks(double seconds) const;
  double tolerance(const RadioConfig& radio) const { return target_tolerance > 0 ? target_tolerance : radio.safe / 2; }
  double loiter(const RadioConfig& radio) const { return loiter_radius > 0 ? loiter_radius : 2 * radio.safe; }
  bool operator==(const ControlConfig&) const = default;
};

enum class RootMode { Fixed, Elected };

// What every robot knows before the mission starts.
struct Mission {
  std::vector<Position> targets;
  int links = 1;  // C_n
  Position anchor{};
  RootMode root_mode = RootMode::Fixed;
  RobotId root = 0;  // fixed mode
  std::uint64_t seed = 0;

  int chains() const { return static_cast<int>(targets.size()) * links; }
  int target_of(int chain) const { return chain / links; }
};

struct DecisionEvent {
  Tick tick = 0;
  RobotId robot = kNoRobot;
  std::string event;
  std::string detail;
};

// Densified polyline with cumulative arc length.
class Track {
 public:
  Track() = default;
  Track(const Path& path, double spacing);

  bool empty() const { return pts_.empty(); }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
  Position at(double s) const;
  // Arc of the closest point restricted to [lo, hi].
  double project(const Position& p, double lo, double hi) const;
  // Closest point with line of sight from p; closest overall if none is visible.
  double project_visible(const GridMap& map, const Position& p) const;
  const std::vector<Position>& points() const { return pts_; }

 private:
  std::vector<Position> pts_;
  std::vector<double> cum_;
};

// Decoded plan shared by all robots that read the same stigmergy value.
struct PlanView {
  PathTuple tuple;
  Track full;
  Track ground;
  const Track& for_kind(RobotKind k) const { return k == RobotKind::Ground ? ground : full; }
};

enum class Direction { Forward, Backward };

// Carrot following: unit direction toward the point `lookahead` further along
// (or back along) the track, scaled to v_max; slows only to land on the end.
// With a map the carrot is pulled back until it is in line of sight.
Vec3 u_path(const Track& track, double arc, const Position& x, Direction dir, double v_max, double lookahead,
            double dt, const GridMap* map = nullptr);
// Moves along the track toward arc `goal` and onto the path there.
Vec3 u_to_arc(const Track& track, double arc, const Position& x, double goal, double v_max, double lookahead,
              double dt, const GridMap* map = nullptr);

struct PrefInputs {
  Role role = Role::Networker;
  bool has_plan = false;
  std::optional<double> d_parent;
  std::optional<double> d_child;
  Vec3 forward{};
  Vec3 backward{};
  double d_s = 1.4;
};

// Chain motion rule: expand with the child gate while the parent link is
// safe, retract along the path otherwise.
Vec3 preferred_velocity(const PrefInputs& in);

// Largest speed at which a robot may move straight away from its chain
// partners: min over links of max(0, (d_s - d) / (2 dt)); v_max without links.
double connectivity_bound(std::optional<double> d_parent, std::optional<double> d_child, double d_s, double dt,
                          double v_max);

// Per-link admissibility. A candidate velocity is accepted when, for every
// link, its own elongation of the link plus a cross-term margin stays within
// half the remaining margin to the link ceiling. With both ends obeying this,
// no link can grow past max(ceiling, current length).
struct LinkLimit {
  Position other{};
  double ceiling = 1.4;
};

class MotionLimits {
 public:
  MotionLimits(const GridMap* map, Position self, double dt, double v_max) : map_(map), self_(self), dt_(dt), v_max_(v_max) {}
  void add_link(const LinkLimit& l) { links_.push_back(l); }
  const std::vector<LinkLimit>& links() const { return links_; }
  // Actual displacement after the obstacle clamp.
  Vec3 displacement(const Vec3& u) const;
  bool admissible(const Vec3& u) const;
  // Largest s in [0, |dir|] with admissible(unit(dir) * s), by bisection.
  double max_speed_along(const Vec3& dir) const;

 private:
  const GridMap* map_;
  Position self_;
  double dt_;
  double v_max_;
  std::vector<LinkLimit> links_;
};

struct RvoNeighbor {
  Vec3 offset{};    // neighbor position minus own position
  Vec3 velocity{};
};

struct RvoParams {
  double alpha = 1.0;
  double r_col = 0.25;
  int directions = 32;
  int magnitudes = 6;
};

// Time until the reciprocal velocity u' (relative to the mean of own and
// neighbor velocity) brings the pair within r_col; infinity if never.
double time_to_collision(const RvoNeighbor& n, const Vec3& candidate, const Vec3& current, double r_col);

// Argmin over a fixed grid of directions x magnitudes in [0, cap]. The grid is
// aligned with u_pref so mirrored situations select mirrored samples.
Vec3 rvo_select(const Vec3& u_pref, const Vec3& current, std::span<const RvoNeighbor> neighbors, double cap,
                const RvoParams& params, const std::function<bool(const Vec3&)>& admissible = {},
                bool horizontal = false);

// Lowest (bid, id) wins. Empty input elects nobody.
std::optional<RobotId> gradient_elect(std::span<const std::pair<RobotId, double>> bids);

enum class Heal : std::uint8_t { None, Forward, Backward };

struct PendingOffer {
  RecruitMsg request;
  RobotId robot = kNoRobot;
  Tick since = 0;
  bool seen_pending = false;
};

// Root-side bookkeeping for one chain.
struct RootChain {
  RobotId child = kNoRobot;
  Tick child_heard = 0;
  Tick childless_since = 0;
  std::deque<RecruitMsg> queue;
  std::set<std::pair<RobotId, std::uint32_t>> seen;
  std::set<std::pair<RobotId, std::uint32_t>> parked;
  std::optional<PendingOffer> offer;
  std::uint64_t parked_count = 0;
  std::uint64_t done_ts = 0;
};

struct PendingJoin {
  int chain = -1;
  RobotId insert_parent = kNoRobot;
  bool as_worker = false;
  Tick since = 0;
  bool elected = false;
  Position where{};
};

struct RobotState {
  RobotId id = kNoRobot;
  RobotKind kind = RobotKind::Ground;
  Position position{};
  Vec3 velocity{};
  Role role = Role::Free;
  int chain = -1;
  int depth = 0;
  RobotId parent = kNoRobot;
  RobotId child = kNoRobot;
  std::vector<RobotId> window;
  std::uint32_t plan_version = 0;
  Heal heal = Heal::None;
  Tick heal_since = 0;
  bool temporary = false;
  bool at_target = false;
  bool stalled = false;
  bool rooted = false;
  VirtualStigmergy store;
  NeighborTable neighbors;

  // Latest status per neighbor (positions overwritten with the situated stamp).
  std::map<RobotId, StatusMsg> heard;
  std::vector<RobotId> heard_now;

  Tick parent_heard = 0;
  Tick child_heard = 0;
  Position parent_pos{};
  Position child_pos{};
  Role child_role = Role::Networker;
  bool child_temporary = false;
  bool claim = false;
  Tick claim_since = 0;
  bool claim_from_free = false;

  std::shared_ptr<const PlanView> plan;
  std::uint64_t plan_ts = 0;
  double arc = 0.0;
  bool arc_valid = false;

  RobotId root_id = kNoRobot;
  Position root_pos{};
  Tick election_origin = 0;
  int root_round = 0;
  Tick root_round_start = 0;
  Tick root_round_len = 0;
  Tick root_wait_until = -1;

  int bid_round = -1;
  std::optional<PendingJoin> join;

  std::uint32_t request_seq = 0;
  int request_depth = -1;
  Tick request_tick = -1;
  Tick request_first = -1;  // when the current seq was first sent
  bool switch_out = false;
  Tick switch_tick = 0;
  std::uint32_t wp_version = 0;
  int wp_depth = 0;
  Tick next_plan_tick = 0;
  int stuck = 0;
  Tick sidestep_until = -1;
  bool done_put = false;

  std::map<int, RootChain> root_chains;
  std::uint32_t offer_seq = 0;

  std::uint64_t malformed = 0;
  std::uint64_t parked = 0;
  Tick last_status = -1000000;
  std::vector<Message> outgoing;
};

RobotState make_robot(RobotId id, RobotKind kind, const Position& where, std::size_t max_value_bytes = 448);

struct TickContext {
  Tick tick = 0;
  const GridMap* map = nullptr;
  const RadioConfig* radio = nullptr;
  const ControlConfig* control = nullptr;
  const Mission* mission = nullptr;
  const Planner* planner = nullptr;
  std::vector<DecisionEvent>* events = nullptr;
};

struct TickOutput {
  Outbox outbox;
  Vec3 command{};
};

// One control step: ingest, fault check, role logic, motion, broadcast.
// Failed robots produce nothing.
TickOutput robot_tick(RobotState& state, const Inbox& inbox, const TickContext& ctx);

// Stigmergy keys.
std::string path_key(int chain);
std::string worker_key(int chain);

}  // namespace relay
