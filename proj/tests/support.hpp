#pragma once

// Shared fixtures and hand-rolled generators for the test binaries.

#include <filesystem>
#include <fstream>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "relay/engine.hpp"
#include "relay/rng.hpp"
#include "relay/scenario.hpp"
#include "relay/stigmergy.hpp"
#include "relay/world.hpp"

namespace relay::testing {

inline std::filesystem::path data_dir() { return RELAY_DATA_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline GridMap open_map(int w, int h, int layers = 1, double res = 1.0) { return GridMap(w, h, layers, res); }

// Random blocked cells, with `keep` cells forced open.
inline GridMap random_map(Rng& rng, int w, int h, double density, const std::vector<Cell>& keep = {}) {
  GridMap m(w, h, 1, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (rng.bernoulli(density)) m.set_passable({x, y, 0}, false);
  for (const auto& c : keep) m.set_passable(c, true);
  return m;
}

inline Position random_point(Rng& rng, double x0, double y0, double x1, double y1, double z = 0.0) {
  return {rng.uniform(x0, x1), rng.uniform(y0, y1), z};
}

inline Position random_free_point(Rng& rng, const GridMap& m) {
  for (;;) {
    const Position p = random_point(rng, 0.0, 0.0, m.width_m(), m.height_m());
    if (m.is_free(p)) return p;
  }
}

// A scenario with the given robots on an open map, ready for the engine.
inline SimConfig open_sim(int w, int h, std::vector<RobotSpawn> robots, Position anchor, Position target,
                          std::uint64_t seed = 1) {
  SimConfig c;
  c.map = std::make_shared<GridMap>(w, h, 3, 1.0);
  c.robots = std::move(robots);
  c.mission.anchor = anchor;
  c.mission.targets = {target};
  c.mission.root = 0;
  c.mission.seed = seed;
  c.seed = seed;
  c.record_trajectory = true;
  return c;
}

inline ScenarioSpec load_bundled(const std::string& name) {
  return load_scenario(data_dir() / "scenarios" / (name + ".scenario"));
}

inline Simulation make_sim(const ScenarioSpec& spec) { return Simulation(build_sim(spec)); }

inline std::vector<std::string> bundled_scenarios() {
  return {"open_field",      "consecutive_failure", "random_failure", "bench_warehouse",
          "bench_rooms",     "bench_forest",        "wall_window"};
}

inline std::vector<std::string> bundled_maps() {
  return {"open20.map", "warehouse64.map", "rooms64.map", "forest64.map", "arena20x12.map"};
}

inline double chain_span(const Simulation& sim, int chain) {
  double total = 0.0;
  Position prev = sim.robots()[static_cast<std::size_t>(sim.root())].position;
  for (RobotId id : sim.chain_members(chain)) {
    const Position p = sim.robots()[static_cast<std::size_t>(id)].position;
    total += distance(prev, p);
    prev = p;
  }
  return total;
}

// Steps until the chain has `members` robots and its length has not moved by
// more than 1 mm over the last 5 s. False on timeout.
inline bool settle(Simulation& sim, std::size_t members, Tick limit) {
  const Tick window = sim.config().control.ticks(5.0);
  double ref = -1.0;
  Tick since = 0;
  const Tick end = sim.tick() + limit;
  while (sim.tick() < end) {
    sim.step();
    const double len = chain_span(sim, 0);
    if (sim.chain_members(0).size() != members || std::abs(len - ref) > 1e-3) {
      ref = len;
      since = sim.tick();
      continue;
    }
    if (sim.tick() - since >= window) return true;
  }
  return false;
}

struct InsertionResult {
  double before = 0.0;
  double after = 0.0;
  bool settled_before = false;
  bool settled_after = false;
};

// Root plus two robots stretch toward a far target and stall for lack of
// recruits. A fourth robot, parked out of radio range, is then brought next to
// the root and joins as a networker.
inline InsertionResult insertion_fixture(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "insertion"));
  std::vector<RobotSpawn> robots{{RobotKind::Ground, {2.0, 5.0, 0}},
                                 {RobotKind::Ground, {rng.uniform(1.0, 1.6), rng.uniform(3.5, 6.5), 0}},
                                 {RobotKind::Ground, {rng.uniform(2.4, 3.0), rng.uniform(3.5, 6.5), 0}},
                                 {RobotKind::Ground, {28.5, 9.5, 0}}};
  SimConfig cfg = open_sim(30, 10, robots, {2.0, 5.0, 0}, {26.0, 5.0, 0}, seed);
  cfg.stop_on_complete = false;
  cfg.record_trajectory = false;
  Simulation sim(cfg);
  InsertionResult r;
  r.settled_before = settle(sim, 2, 4000);
  r.before = chain_span(sim, 0);
  sim.teleport(3, {1.0, 5.0, 0});
  r.settled_after = settle(sim, 3, 4000);
  r.after = chain_span(sim, 0);
  return r;
}

// Synchronous flooding on a static graph: every round each replica's queued
// messages reach its graph neighbors. An older value of the key is spread
// first, then one random node overwrites it. Returns the rounds until every
// replica holds the new value, or -1.
inline int flood_rounds(const std::vector<std::set<int>>& graph, std::uint64_t seed) {
  const int n = static_cast<int>(graph.size());
  Rng rng(derive_seed(seed, "flood"));
  std::vector<VirtualStigmergy> nodes;
  for (int i = 0; i < n; ++i) nodes.emplace_back(i);
  auto round = [&] {
    std::vector<std::vector<StigMessage>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = nodes[static_cast<std::size_t>(i)].take_outgoing();
    for (int i = 0; i < n; ++i)
      for (int j : graph[static_cast<std::size_t>(i)])
        for (const auto& m : out[static_cast<std::size_t>(i)]) nodes[static_cast<std::size_t>(j)].on_message(m);
  };
  const int old_writer = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
  nodes[static_cast<std::size_t>(old_writer)].put("k", Bytes{1});
  for (int i = 0; i < 2 * n; ++i) round();
  const int writer = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
  const Bytes fresh{2, static_cast<std::uint8_t>(rng.index(256))};
  nodes[static_cast<std::size_t>(writer)].put("k", fresh);
  auto converged = [&] {
    for (const auto& s : nodes) {
      const auto* e = s.peek("k");
      if (!e || e->value != fresh) return false;
    }
    return true;
  };
  for (int r = 1; r <= 4 * n; ++r) {
    round();
    if (converged()) return r;
  }
  return -1;
}

}  // namespace relay::testing
