#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "relay/controller.hpp"

namespace relay {

void ControlConfig::validate(const RadioConfig& radio) const {
  if (!(dt > 0)) throw ConfigError("control: dt must be positive");
  if (!(v_max > 0)) throw ConfigError("control: v_max must be positive");
  if (!(v_max * dt < radio.breakaway - radio.critical))
    throw ConfigError("control: v_max * dt must be below d_b - d_c");
  if (alpha < 0) throw ConfigError("control: alpha must be non-negative");
  if (!(r_col > 0)) throw ConfigError("control: r_col must be positive");
  if (avoid_radius < r_col) throw ConfigError("control: avoid_radius must be at least r_col");
  if (!(link_failure_time > 0)) throw ConfigError("control: link_failure_time must be positive");
  if (status_period < dt) throw ConfigError("control: status_period must be at least dt");
  if (status_period >= link_failure_time) throw ConfigError("control: status_period must be below link_failure_time");
  if (!(forgetting_time > 0)) throw ConfigError("control: forgetting_time must be positive");
  if (!(bidding_time > 0)) throw ConfigError("control: bidding_time must be positive");
  if (!(query_period > 0)) throw ConfigError("control: query_period must be positive");
  if (!(lookahead > 0)) throw ConfigError("control: lookahead must be positive");
  if (!(tight_fraction > 0 && tight_fraction <= 1)) throw ConfigError("control: tight_fraction must be in (0, 1]");
  if (!(join_fraction > 0 && join_fraction <= 1)) throw ConfigError("control: join_fraction must be in (0, 1]");
  if (window_k < 1) throw ConfigError("control: window_k must be >= 1");
  if (target_tolerance < 0) throw ConfigError("control: target_tolerance must be non-negative");
}

Tick ControlConfig::ticks(double seconds) const {
  return std::max<Tick>(1, static_cast<Tick>(std::llround(seconds / dt)));
}

Track::Track(const Path& path, double spacing) {
  const Path dense = densify(path, spacing);
  pts_ = dense.waypoints;
  double acc = 0.0;
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    if (i > 0) acc += distance(pts_[i - 1], pts_[i]);
    cum_.push_back(acc);
  }
}

Position Track::at(double s) const {
  if (pts_.empty()) return {};
  if (s <= 0.0) return pts_.front();
  if (s >= cum_.back()) return pts_.back();
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  const auto i = static_cast<std::size_t>(it - cum_.begin());
  const double seg = cum_[i] - cum_[i - 1];
  const double f = seg > 0 ? (s - cum_[i - 1]) / seg : 0.0;
  return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * f;
}

namespace {

// Closest parameter on segment i to p, restricted to arc range [lo, hi].
double closest_on_segment(const std::vector<Position>& pts, const std::vector<double>& cum, std::size_t i,
                          const Position& p, double lo, double hi) {
  const Vec3 d = pts[i + 1] - pts[i];
  const double len2 = d.norm2();
  double t = len2 > 0 ? (p - pts[i]).dot(d) / len2 : 0.0;
  const double seg = cum[i + 1] - cum[i];
  double s = cum[i] + std::clamp(t, 0.0, 1.0) * seg;
  return std::clamp(s, lo, hi);
}

}  // namespace

double Track::project(const Position& p, double lo, double hi) const {
  if (pts_.size() < 2) return 0.0;
  lo = std::clamp(lo, 0.0, length());
  hi = std::clamp(hi, lo, length());
  double best_s = lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
    if (cum_[i + 1] < lo || cum_[i] > hi) continue;
    const double s = closest_on_segment(pts_, cum_, i, p, lo, hi);
    const double dd = distance(at(s), p);
    if (dd < best_d - 1e-12) {
      best_d = dd;
      best_s = s;
    }
  }
  return best_s;
}

double Track::project_visible(const GridMap& map, const Position& p) const {
  if (pts_.size() < 2) return 0.0;
  double best_s = 0.0;
  double best_d = std::numeric_limits<double>::infinity();
  bool best_visible = false;
  for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
    const double s = closest_on_segment(pts_, cum_, i, p, 0.0, length());
    const Position q = at(s);
    const double dd = distance(q, p);
    if (best_visible && dd >= best_d) continue;
    const bool visible = segment_free(map, p, q);
    if ((visible && !best_visible) || (visible == best_visible && dd < best_d - 1e-12)) {
      best_visible = visible;
      best_d = dd;
      best_s = s;
    }
  }
  return best_s;
}

namespace {

Vec3 toward(const Position& carrot, const Position& x, double v_max, double dt) {
  const Vec3 v = carrot - x;
  const double n = v.norm();
  if (n < 1e-9) return {};
  if (n <= v_max * dt) return v / dt;
  return v * (v_max / n);
}

}  // namespace

namespace {

// Pulls the carrot back toward `arc` until it is in line of sight.
Position visible_carrot(const Track& track, double arc, double goal, const Position& x, const GridMap* map) {
  Position c = track.at(goal);
  if (!map) return c;
  double s = goal;
  for (int i = 0; i < 6 && !segment_free(*map, x, c); ++i) {
    s = arc + 0.5 * (s - arc);
    c = track.at(s);
  }
  return c;
}

}  // namespace

Vec3 u_path(const Track& track, double arc, const Position& x, Direction dir, double v_max, double lookahead,
            double dt, const GridMap* map) {
  if (track.empty()) return {};
  const double goal = std::clamp(dir == Direction::Forward ? arc + lookahead : arc - lookahead, 0.0, track.length());
  return toward(visible_carrot(track, arc, goal, x, map), x, v_max, dt);
}

Vec3 u_to_arc(const Track& track, double arc, const Position& x, double goal, double v_max, double lookahead,
              double dt, const GridMap* map) {
  if (track.empty()) return {};
  goal = std::clamp(goal, 0.0, track.length());
  double s = goal;
  if (std::abs(goal - arc) > lookahead) s = arc + (goal > arc ? lookahead : -lookahead);
  return toward(visible_carrot(track, arc, s, x, map), x, v_max, dt);
}

Vec3 preferred_velocity(const PrefInputs& in) {
  if (in.role != Role::Worker && in.role != Role::Networker) return {};
  if (!in.has_plan) return {};
  if (!in.d_parent || *in.d_parent <= in.d_s) {
    const double gate = (!in.d_child || *in.d_child <= in.d_s) ? 1.0 : 0.0;
    return in.forward * gate;
  }
  return in.backward;
}

double connectivity_bound(std::optional<double> d_parent, std::optional<double> d_child, double d_s, double dt,
                          double v_max) {
  if (!d_parent && !d_child) return v_max;
  double u = std::numeric_limits<double>::infinity();
  for (const auto& d : {d_parent, d_child})
    if (d) u = std::min(u, std::max(0.0, (d_s - *d) / (2 * dt)));
  return u;
}

Vec3 MotionLimits::displacement(const Vec3& u) const {
  const Vec3 delta = u * dt_;
  if (!map_) return delta;
  return clamp_motion(*map_, self_, delta) - self_;
}

bool MotionLimits::admissible(const Vec3& u) const {
  if (u.norm() > v_max_ * (1 + 1e-9)) return false;
  const Vec3 a = displacement(u);
  const double step = a.norm();
  if (step == 0.0) return true;
  for (const auto& l : links_) {
    const double d = distance(self_, l.other);
    const double moved = distance(self_ + a, l.other);
    const double allowance = d < l.ceiling ? (l.ceiling - d) / 2 : 0.0;
    const double margin = d > 1e-9 ? step * v_max_ * dt_ / d : 0.0;
    if (moved - d + margin > allowance + 1e-12) return false;
  }
  return true;
}

double MotionLimits::max_speed_along(const Vec3& dir) const {
  const double full = dir.norm();
  if (full == 0.0) return 0.0;
  const Vec3 unit = dir / full;
  if (admissible(unit * full)) return full;
  double lo = 0.0;
  double hi = full;
  for (int i = 0; i < 30; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (admissible(unit * mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double time_to_collision(const RvoNeighbor& n, const Vec3& candidate, const Vec3& current, double r_col) {
  const Vec3 v = candidate * 2.0 - current - n.velocity;
  const Vec3& p = n.offset;
  const double pv = p.dot(v);
  const double c = p.norm2() - r_col * r_col;
  if (c <= 0) return pv > 0 ? 0.0 : std::numeric_limits<double>::infinity();
  const double a = v.norm2();
  if (a == 0.0 || pv <= 0) return std::numeric_limits<double>::infinity();
  const double disc = pv * pv - a * c;
  if (disc < 0) return std::numeric_limits<double>::infinity();
  return (pv - std::sqrt(disc)) / a;
}

Vec3 rvo_select(const Vec3& u_pref, const Vec3& current, std::span<const RvoNeighbor> neighbors, double cap,
                const RvoParams& params, const std::function<bool(const Vec3&)>& admissible, bool horizontal) {
  if (!(cap > 0)) return {};
  Vec3 e1 = horizontal ? Vec3{u_pref.x, u_pref.y, 0.0} : u_pref;
  e1 = e1.norm() > 1e-12 ? e1.normalized() : Vec3{1, 0, 0};
  Vec3 e2 = cross(Vec3{0, 0, 1}, e1);
  e2 = e2.norm() > 1e-9 ? e2.normalized() : Vec3{0, 1, 0};

  Vec3 best{};
  double best_cost = std::numeric_limits<double>::infinity();
  double best_dev = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec3& u) {
    double cost = 0.0;
    for (const auto& n : neighbors) {
      const double t = time_to_collision(n, u, current, params.r_col);
      if (std::isfinite(t)) cost += params.alpha / std::max(t, 1e-3);
    }
    const double dev = (u_pref - u).norm();
    cost += dev;
    if (cost < best_cost - 1e-12 || (std::abs(cost - best_cost) <= 1e-12 && dev < best_dev - 1e-12)) {
      best = u;
      best_cost = cost;
      best_dev = dev;
    }
  };

  consider(Vec3{});
  const int levels = std::max(2, params.magnitudes);
  for (int k = 1; k < levels; ++k) {
    const double mag = cap * k / (levels - 1);
    for (int j = 0; j < params.directions; ++j) {
      const double th = 2 * std::numbers::pi * j / params.directions;
      const Vec3 u = (e1 * std::cos(th) + e2 * std::sin(th)) * mag;
      if (admissible && !admissible(u)) continue;
      consider(u);
    }
  }
  return best;
}

std::optional<RobotId> gradient_elect(std::span<const std::pair<RobotId, double>> bids) {
  std::optional<std::pair<double, RobotId>> best;
  for (const auto& [id, bid] : bids) {
    if (!std::isfinite(bid)) continue;
    const std::pair<double, RobotId> key{bid, id};
    if (!best || key < *best) best = key;
  }
  if (!best) return std::nullopt;
  return best->second;
}

}  // namespace relay
