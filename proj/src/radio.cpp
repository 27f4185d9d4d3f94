#include "relay/radio.hpp"

#include <algorithm>
#include <cmath>

#include "relay/world.hpp"

namespace relay {

std::string_view to_string(Zone z) {
  switch (z) {
    case Zone::Safe:
      return "safe";
    case Zone::Critical:
      return "critical";
    case Zone::BreakAway:
      return "breakaway";
    case Zone::OutOfRange:
      return "out_of_range";
  }
  return "?";
}

void RadioConfig::validate() const {
  if (!(near_field > 0.0)) throw ConfigError("radio: near_field must be > 0");
  if (!(near_field < safe)) throw ConfigError("radio: near_field < d_s violated");
  if (!(safe < critical)) throw ConfigError("radio: d_s < d_c violated");
  if (!(critical < breakaway)) throw ConfigError("radio: d_c < d_b violated");
  if (!(breakaway <= range)) throw ConfigError("radio: d_b <= Z violated");
  if (!(e_min > 0.0 && e_min < 1.0)) throw ConfigError("radio: e_min must be in (0,1)");
  if (mtu < 64) throw ConfigError("radio: mtu must be >= 64 bytes");
}

double link_quality(double d, const RadioConfig& cfg) {
  if (d >= cfg.range) return 0.0;
  if (d < cfg.near_field) return 1.0;
  return std::exp(-5.0 * d / cfg.range);
}

Zone classify_zone(double d, const RadioConfig& cfg) {
  if (d <= cfg.safe) return Zone::Safe;
  if (d <= cfg.critical) return Zone::Critical;
  if (d <= cfg.breakaway) return Zone::BreakAway;
  return Zone::OutOfRange;
}

void NeighborTable::observe(RobotId id, const Position& where, Tick tick, double dt) {
  auto [it, inserted] = entries_.try_emplace(id);
  auto& n = it->second;
  if (!inserted && tick > n.last_heard) {
    n.velocity = (where - n.position) / (static_cast<double>(tick - n.last_heard) * dt);
  } else if (inserted) {
    n.velocity = {};
  }
  n.position = where;
  n.last_heard = tick;
}

void NeighborTable::refresh(const Position& self, const RadioConfig& cfg) {
  for (auto& [id, n] : entries_) {
    n.distance = distance(self, n.position);
    n.quality = link_quality(n.distance, cfg);
    n.zone = classify_zone(n.distance, cfg);
  }
}

void NeighborTable::evict_older_than(Tick tick, Tick horizon) {
  std::erase_if(entries_, [&](const auto& kv) { return tick - kv.second.last_heard > horizon; });
}

const NeighborInfo* NeighborTable::find(RobotId id) const {
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<RobotId> NeighborTable::in_zone(Zone z) const {
  std::vector<RobotId> out;
  for (const auto& [id, n] : entries_)
    if (n.zone == z) out.push_back(id);
  return out;
}

std::vector<RobotId> NeighborTable::connected() const {
  std::vector<RobotId> out;
  for (const auto& [id, n] : entries_)
    if (n.zone != Zone::OutOfRange) out.push_back(id);
  return out;
}

std::vector<Inbox> deliver(std::span<const Outbox> outboxes, std::span<const Position> positions,
                           std::span<const bool> alive, const RadioConfig& cfg, Rng& rng) {
  const std::size_t n = positions.size();
  std::vector<Inbox> inboxes(n);
  // Sender-major iteration yields (sender, tick) order per inbox directly;
  // the final sort only guards against out-of-order ticks within a sender.
  for (std::size_t s = 0; s < outboxes.size() && s < n; ++s) {
    if (!alive[s] || outboxes[s].empty()) continue;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == s || !alive[r]) continue;
      const double d = distance(positions[s], positions[r]);
      if (d >= cfg.range) continue;
      for (const auto& env : outboxes[s]) {
        if (cfg.mode == DeliveryMode::Probabilistic && !rng.bernoulli(link_quality(d, cfg))) continue;
        Envelope copy = env;
        copy.situated = positions[s];
        inboxes[r].push_back(std::move(copy));
      }
    }
  }
  for (auto& inbox : inboxes)
    std::stable_sort(inbox.begin(), inbox.end(), [](const Envelope& a, const Envelope& b) {
      return a.sender != b.sender ? a.sender < b.sender : a.tick < b.tick;
    });
  return inboxes;
}

}  // namespace relay
