#pragma once

#include <map>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "relay/codec.hpp"
#include "relay/geometry.hpp"
#include "relay/rng.hpp"

namespace relay {

enum class Zone { Safe, Critical, BreakAway, OutOfRange };
enum class DeliveryMode { Deterministic, Probabilistic };

std::string_view to_string(Zone z);

struct RadioConfig {
  double range = 3.0;        // Z; covers the 2 d_s loiter disc
  double near_field = 0.1;   // delta
  double safe = 1.4;         // d_s
  double critical = 1.6;     // d_c
  double breakaway = 1.8;    // d_b
  double e_min = 0.1;
  DeliveryMode mode = DeliveryMode::Deterministic;
  std::size_t mtu = 512;

  double critical_tolerance() const { return critical - safe; }
  double breakaway_tolerance() const { return breakaway - critical; }
  // Throws ConfigError naming the first violated ordering.
  void validate() const;
  bool operator==(const RadioConfig&) const = default;
};

// 1 inside the near field, 0 at or beyond the range, exp(-5 d / Z) between.
double link_quality(double d, const RadioConfig& cfg);
// Safe for d <= d_s, Critical for d <= d_c, BreakAway for d <= d_b.
Zone classify_zone(double d, const RadioConfig& cfg);

// One broadcast frame. `situated` is stamped by the channel on delivery with
// the sender's position at reception time, so receivers learn relative
// positions from the message itself.
struct Envelope {
  RobotId sender = kNoRobot;
  Tick tick = 0;
  std::shared_ptr<const Bytes> payload;
  Position situated{};
};

using Outbox = std::vector<Envelope>;
using Inbox = std::vector<Envelope>;

struct NeighborInfo {
  Position position{};
  Vec3 velocity{};
  double distance = 0.0;
  double quality = 0.0;
  Zone zone = Zone::OutOfRange;
  Tick last_heard = 0;
};

// Per-robot view of who is nearby, rebuilt from situated messages.
class NeighborTable {
 public:
  void observe(RobotId id, const Position& where, Tick tick, double dt);
  // Recomputes distance, quality and zone from the robot's own position.
  void refresh(const Position& self, const RadioConfig& cfg);
  // Drops entries not heard since `tick - horizon`.
  void evict_older_than(Tick tick, Tick horizon);
  void erase(RobotId id) { entries_.erase(id); }

  const NeighborInfo* find(RobotId id) const;
  const std::map<RobotId, NeighborInfo>& entries() const { return entries_; }
  std::vector<RobotId> in_zone(Zone z) const;
  // N_i: every neighbor currently inside the break-away distance.
  std::vector<RobotId> connected() const;

 private:
  std::map<RobotId, NeighborInfo> entries_;
};

// Routes every live robot's outbox to every live robot in range. Inboxes are
// ordered by (sender, tick); failed robots neither send nor receive.
std::vector<Inbox> deliver(std::span<const Outbox> outboxes, std::span<const Position> positions,
                           std::span<const bool> alive, const RadioConfig& cfg, Rng& rng);

}  // namespace relay
