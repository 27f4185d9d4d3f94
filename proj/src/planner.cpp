#include "relay/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "relay/rng.hpp"

namespace relay {

double Path::length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) len += distance(waypoints[i - 1], waypoints[i]);
  return len;
}

Position Path::at(double s) const {
  if (waypoints.empty()) return {};
  if (s <= 0.0) return waypoints.front();
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const double seg = distance(waypoints[i - 1], waypoints[i]);
    if (s <= seg && seg > 0.0) return waypoints[i - 1] + (waypoints[i] - waypoints[i - 1]) * (s / seg);
    s -= seg;
  }
  return waypoints.back();
}

namespace {

constexpr std::uint8_t kTupleVersion = 1;

Path ground_prefix_for(const Path& path, const GridMap& map) {
  if (path.mode == PlanMode::Ground2D) return path;
  return project_ground(densify(path, map.resolution() * 0.5), map);
}

}  // namespace

Bytes PathTuple::encode() const {
  ByteWriter w;
  w.u8(kTupleVersion);
  w.u8(static_cast<std::uint8_t>(path.mode));
  w.u8(path_exists ? 1 : 0);
  w.u32(version);
  w.i16(static_cast<std::int16_t>(target));
  w.u16(static_cast<std::uint16_t>(path.waypoints.size()));
  for (const auto& p : path.waypoints) {
    w.f32(static_cast<float>(p.x));
    w.f32(static_cast<float>(p.y));
    w.f32(static_cast<float>(p.z));
  }
  return w.take();
}

PathTuple PathTuple::decode(std::span<const std::uint8_t> bytes, const GridMap& map) {
  ByteReader r(bytes);
  if (r.u8() != kTupleVersion) throw DecodeError("unsupported path tuple version");
  PathTuple t;
  const auto mode = r.u8();
  if (mode > 1) throw DecodeError("bad plan mode");
  t.path.mode = static_cast<PlanMode>(mode);
  t.path_exists = r.u8() != 0;
  t.version = r.u32();
  t.target = r.i16();
  const auto n = r.u16();
  t.path.waypoints.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = r.f32();
    const double y = r.f32();
    const double z = r.f32();
    t.path.waypoints.push_back({x, y, z});
  }
  if (!r.done()) throw DecodeError("trailing bytes in path tuple");
  if (t.path_exists != !t.path.empty()) throw DecodeError("PE flag disagrees with path");
  t.ground = ground_prefix_for(t.path, map);
  return t;
}

namespace {

Cell query_cell(const GridMap& map, const Position& p, PlanMode mode) {
  Cell c = map.world_to_cell(p);
  if (mode == PlanMode::Ground2D) c.layer = 0;
  return c;
}

std::vector<Cell> neighbors(const GridMap& map, const Cell& c, PlanMode mode, bool diagonal) {
  std::vector<Cell> out;
  const int lz = mode == PlanMode::Full3D ? 1 : 0;
  for (int dz = -lz; dz <= lz; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int moved = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (moved == 0 || (!diagonal && moved > 1)) continue;
        const Cell n{c.x + dx, c.y + dy, c.layer + dz};
        if (!map.passable(n)) continue;
        if (moved > 1) {
          // No corner cutting: every cell in the move's bounding box is free.
          bool clear = true;
          for (int a = std::min(0, dz); a <= std::max(0, dz) && clear; ++a)
            for (int b = std::min(0, dy); b <= std::max(0, dy) && clear; ++b)
              for (int e = std::min(0, dx); e <= std::max(0, dx) && clear; ++e)
                clear = map.passable({c.x + e, c.y + b, c.layer + a});
          if (!clear) continue;
        }
        out.push_back(n);
      }
  return out;
}

}  // namespace

bool check_reachable(const GridMap& map, const Position& start, const Position& target, PlanMode mode) {
  const Cell s = query_cell(map, start, mode);
  const Cell t = query_cell(map, target, mode);
  if (!map.passable(s)) throw PlannerError("start position is inside an obstacle");
  if (!map.passable(t)) return false;
  const auto idx = [&](const Cell& c) {
    return (static_cast<std::size_t>(c.layer) * map.height() + c.y) * map.width() + c.x;
  };
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(map.width()) * map.height() * map.layers(), 0);
  std::vector<Cell> stack{s};
  seen[idx(s)] = 1;
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    if (c == t) return true;
    for (const auto& n : neighbors(map, c, mode, false)) {
      if (seen[idx(n)]) continue;
      seen[idx(n)] = 1;
      stack.push_back(n);
    }
  }
  return false;
}

std::optional<Path> astar_oracle(const GridMap& map, const Position& start, const Position& target, PlanMode mode) {
  const Cell s = query_cell(map, start, mode);
  const Cell t = query_cell(map, target, mode);
  if (!map.passable(s) || !map.passable(t)) return std::nullopt;
  Path path;
  path.mode = mode;
  if (s == t) {
    path.waypoints.push_back(start);
    if (distance(start, target) > 0.0) path.waypoints.push_back(target);
    return path;
  }
  const std::size_t n = static_cast<std::size_t>(map.width()) * map.height() * map.layers();
  const auto idx = [&](const Cell& c) {
    return (static_cast<std::size_t>(c.layer) * map.height() + c.y) * map.width() + c.x;
  };
  const auto cell_of = [&](std::size_t i) {
    const int x = static_cast<int>(i % map.width());
    const int y = static_cast<int>((i / map.width()) % map.height());
    const int l = static_cast<int>(i / (static_cast<std::size_t>(map.width()) * map.height()));
    return Cell{x, y, l};
  };
  const double r = map.resolution();
  const auto h = [&](const Cell& c) {
    const double dx = c.x - t.x, dy = c.y - t.y, dz = c.layer - t.layer;
    return std::sqrt(dx * dx + dy * dy + dz * dz) * r;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, kInf);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  using Item = std::tuple<double, double, std::size_t>;  // f, g, index: deterministic ordering
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  g[idx(s)] = 0.0;
  open.emplace(h(s), 0.0, idx(s));
  while (!open.empty()) {
    const auto [f, gc, i] = open.top();
    open.pop();
    if (closed[i]) continue;
    closed[i] = 1;
    const Cell c = cell_of(i);
    if (c == t) break;
    for (const auto& nb : neighbors(map, c, mode, true)) {
      const std::size_t j = idx(nb);
      if (closed[j]) continue;
      const double dx = nb.x - c.x, dy = nb.y - c.y, dz = nb.layer - c.layer;
      const double ng = gc + std::sqrt(dx * dx + dy * dy + dz * dz) * r;
      if (ng < g[j]) {
        g[j] = ng;
        parent[j] = static_cast<std::int64_t>(i);
        open.emplace(ng + h(nb), ng, j);
      }
    }
  }
  if (!closed[idx(t)]) return std::nullopt;
  std::vector<Cell> cells;
  for (std::int64_t i = static_cast<std::int64_t>(idx(t)); i >= 0; i = parent[static_cast<std::size_t>(i)])
    cells.push_back(cell_of(static_cast<std::size_t>(i)));
  std::reverse(cells.begin(), cells.end());
  path.waypoints.push_back(start);
  for (std::size_t k = 1; k + 1 < cells.size(); ++k) {
    Position p = map.cell_to_world(cells[k]);
    if (mode == PlanMode::Ground2D) p.z = 0.0;
    path.waypoints.push_back(p);
  }
  path.waypoints.push_back(target);
  return path;
}

std::optional<Path> AStarPlanner::plan(const GridMap& map, const Position& start, const Position& target,
                                       PlanMode mode, std::uint64_t) const {
  auto p = astar_oracle(map, start, target, mode);
  if (p && smooth_) *p = shortcut(*p, map);
  return p;
}

Path project_ground(const Path& path, const GridMap& map) {
  Path out;
  out.mode = PlanMode::Ground2D;
  if (path.empty()) return out;
  auto flat = [](Position p) {
    p.z = 0.0;
    return p;
  };
  const Position first = flat(path.waypoints.front());
  if (!map.is_free(first)) return out;
  out.waypoints.push_back(first);
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    const Position next = flat(path.waypoints[i]);
    if (!segment_free(map, out.waypoints.back(), next)) break;
    out.waypoints.push_back(next);
  }
  return out;
}

Path shortcut(const Path& path, const GridMap& map) {
  if (path.waypoints.size() <= 2) return path;
  Path out;
  out.mode = path.mode;
  std::size_t i = 0;
  out.waypoints.push_back(path.waypoints[0]);
  while (i + 1 < path.waypoints.size()) {
    std::size_t j = path.waypoints.size() - 1;
    while (j > i + 1 && !segment_free(map, path.waypoints[i], path.waypoints[j])) --j;
    out.waypoints.push_back(path.waypoints[j]);
    i = j;
  }
  return out;
}

Path densify(const Path& path, double spacing) {
  if (path.waypoints.size() < 2 || !(spacing > 0.0)) return path;
  Path out;
  out.mode = path.mode;
  out.waypoints.push_back(path.waypoints[0]);
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    const Position a = path.waypoints[i - 1];
    const Position b = path.waypoints[i];
    const int pieces = std::max(1, static_cast<int>(std::ceil(distance(a, b) / spacing)));
    for (int k = 1; k <= pieces; ++k) out.waypoints.push_back(a + (b - a) * (static_cast<double>(k) / pieces));
  }
  return out;
}

int required_robots(double d_path, double d_s) {
  if (!(d_s > 0.0)) throw PlannerError("d_s must be > 0");
  if (d_path <= 0.0) return 0;
  return static_cast<int>(std::ceil(d_path / d_s - 1e-9));
}

namespace {

// Uniform bucket grid over the planning volume for nearest / radius queries.
class BucketIndex {
 public:
  BucketIndex(const GridMap& map, double cell, bool three_d)
      : cell_(cell),
        nx_(std::max(1, static_cast<int>(std::ceil(map.width_m() / cell)))),
        ny_(std::max(1, static_cast<int>(std::ceil(map.height_m() / cell)))),
        nz_(three_d ? std::max(1, static_cast<int>(std::ceil(map.ceiling_m() / cell))) : 1),
        buckets_(static_cast<std::size_t>(nx_) * ny_ * nz_) {}

  void insert(int id, const Position& p) { buckets_[bucket(key(p))].push_back(id); }

  template <typename Fn>
  void visit_ring(const std::array<int, 3>& k, int ring, Fn&& fn) const {
    for (int z = k[2] - ring; z <= k[2] + ring; ++z) {
      if (z < 0 || z >= nz_) continue;
      for (int y = k[1] - ring; y <= k[1] + ring; ++y) {
        if (y < 0 || y >= ny_) continue;
        for (int x = k[0] - ring; x <= k[0] + ring; ++x) {
          if (x < 0 || x >= nx_) continue;
          const bool on_shell =
              std::abs(x - k[0]) == ring || std::abs(y - k[1]) == ring || std::abs(z - k[2]) == ring;
          if (!on_shell) continue;
          for (int id : buckets_[bucket({x, y, z})]) fn(id);
        }
      }
    }
  }

  int max_ring() const { return std::max({nx_, ny_, nz_}); }
  std::array<int, 3> key(const Position& p) const {
    auto q = [this](double v, int n) { return std::clamp(static_cast<int>(std::floor(v / cell_)), 0, n - 1); };
    return {q(p.x, nx_), q(p.y, ny_), q(p.z, nz_)};
  }
  double cell() const { return cell_; }

 private:
  std::size_t bucket(const std::array<int, 3>& k) const {
    return (static_cast<std::size_t>(k[2]) * ny_ + k[1]) * nx_ + k[0];
  }
  double cell_;
  int nx_, ny_, nz_;
  std::vector<std::vector<int>> buckets_;
};

struct TreeNode {
  Position p;
  int parent = -1;
  double cost = 0.0;
  std::vector<int> children;
};

}  // namespace

std::optional<Path> plan_rrt_star(const GridMap& map, const Position& start_in, const Position& target_in,
                                  PlanMode mode, const PlannerConfig& cfg, std::uint64_t seed) {
  Position start = start_in;
  Position target = target_in;
  if (mode == PlanMode::Ground2D) {
    start.z = 0.0;
    target.z = 0.0;
  }
  if (!map.is_free(start) || !map.is_free(target)) return std::nullopt;
  Path result;
  result.mode = mode;
  if (distance(start, target) < 1e-9) {
    result.waypoints.push_back(start);
    return result;
  }
  const bool three_d = mode == PlanMode::Full3D;
  const double dims = three_d ? 3.0 : 2.0;
  const double free_volume =
      three_d ? [&] {
        double v = 0;
        for (int l = 0; l < map.layers(); ++l) v += static_cast<double>(map.free_cell_count(l));
        return v * std::pow(map.resolution(), 3);
      }()
              : static_cast<double>(map.free_cell_count(0)) * map.resolution() * map.resolution();
  const double unit_ball = three_d ? 4.0 / 3.0 * std::numbers::pi : std::numbers::pi;
  const double gamma = 1.1 * 2.0 * std::pow(1.0 + 1.0 / dims, 1.0 / dims) * std::pow(free_volume / unit_ball, 1.0 / dims);

  Rng rng(seed);
  std::vector<TreeNode> tree;
  tree.reserve(static_cast<std::size_t>(cfg.budget) + 1);
  BucketIndex index(map, std::max(cfg.step, map.resolution()), three_d);
  tree.push_back({start, -1, 0.0, {}});
  index.insert(0, start);
  std::vector<int> goal_nodes;

  auto nearest = [&](const Position& q) {
    const auto k = index.key(q);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int ring = 0; ring <= index.max_ring(); ++ring) {
      if (best >= 0 && best_d <= (ring - 1) * index.cell()) break;
      index.visit_ring(k, ring, [&](int id) {
        const double d = distance(tree[static_cast<std::size_t>(id)].p, q);
        if (d < best_d || (d == best_d && id < best)) {
          best_d = d;
          best = id;
        }
      });
    }
    return best;
  };
  auto near = [&](const Position& q, double radius) {
    std::vector<int> out;
    const auto k = index.key(q);
    const int rings = static_cast<int>(std::ceil(radius / index.cell()));
    for (int ring = 0; ring <= rings; ++ring)
      index.visit_ring(k, ring, [&](int id) {
        if (distance(tree[static_cast<std::size_t>(id)].p, q) <= radius) out.push_back(id);
      });
    std::sort(out.begin(), out.end());
    return out;
  };
  auto propagate = [&](int root_id, double delta) {
    std::vector<int> stack{root_id};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      for (int c : tree[static_cast<std::size_t>(id)].children) {
        tree[static_cast<std::size_t>(c)].cost += delta;
        stack.push_back(c);
      }
    }
  };

  const double zmax = three_d ? map.ceiling_m() : 0.0;
  for (int it = 0; it < cfg.budget; ++it) {
    Position sample;
    if (rng.uniform() < cfg.goal_bias) {
      sample = target;
    } else {
      sample = {rng.uniform(0.0, map.width_m()), rng.uniform(0.0, map.height_m()), three_d ? rng.uniform(0.0, zmax) : 0.0};
      if (!map.is_free(sample)) continue;
    }
    const int nn = nearest(sample);
    const Position from = tree[static_cast<std::size_t>(nn)].p;
    const double d = distance(from, sample);
    if (d < 1e-9) continue;
    const Position fresh = d <= cfg.step ? sample : from + (sample - from) * (cfg.step / d);
    if (!map.is_free(fresh) || !segment_free(map, from, fresh)) continue;

    const double n = static_cast<double>(tree.size());
    const double radius = std::min(gamma * std::pow(std::log(n + 1.0) / (n + 1.0), 1.0 / dims), cfg.step * 2.0);
    auto neighborhood = near(fresh, std::max(radius, 1e-9));
    int best_parent = nn;
    double best_cost = tree[static_cast<std::size_t>(nn)].cost + distance(from, fresh);
    std::vector<std::uint8_t> visible(neighborhood.size(), 0);
    for (std::size_t k = 0; k < neighborhood.size(); ++k) {
      const auto& cand = tree[static_cast<std::size_t>(neighborhood[k])];
      if (neighborhood[k] == nn) {
        visible[k] = 1;
        continue;
      }
      visible[k] = segment_free(map, cand.p, fresh) ? 1 : 0;
      const double c = cand.cost + distance(cand.p, fresh);
      if (visible[k] && c < best_cost) {
        best_cost = c;
        best_parent = neighborhood[k];
      }
    }
    const int id = static_cast<int>(tree.size());
    tree.push_back({fresh, best_parent, best_cost, {}});
    tree[static_cast<std::size_t>(best_parent)].children.push_back(id);
    index.insert(id, fresh);

    for (std::size_t k = 0; k < neighborhood.size(); ++k) {
      const int nb = neighborhood[k];
      if (nb == best_parent || !visible[k]) continue;
      auto& node = tree[static_cast<std::size_t>(nb)];
      const double c = best_cost + distance(fresh, node.p);
      if (c + 1e-12 < node.cost) {
        auto& siblings = tree[static_cast<std::size_t>(node.parent)].children;
        siblings.erase(std::find(siblings.begin(), siblings.end(), nb));
        const double delta = c - node.cost;
        node.parent = id;
        node.cost = c;
        tree[static_cast<std::size_t>(id)].children.push_back(nb);
        propagate(nb, delta);
      }
    }
    if (distance(fresh, target) <= cfg.step && segment_free(map, fresh, target)) goal_nodes.push_back(id);
  }

  int best_goal = -1;
  double best_total = std::numeric_limits<double>::infinity();
  for (int g : goal_nodes) {
    const double c = tree[static_cast<std::size_t>(g)].cost + distance(tree[static_cast<std::size_t>(g)].p, target);
    if (c < best_total) {
      best_total = c;
      best_goal = g;
    }
  }
  if (best_goal < 0) return std::nullopt;
  for (int id = best_goal; id >= 0; id = tree[static_cast<std::size_t>(id)].parent)
    result.waypoints.push_back(tree[static_cast<std::size_t>(id)].p);
  std::reverse(result.waypoints.begin(), result.waypoints.end());
  if (distance(result.waypoints.back(), target) > 1e-12) result.waypoints.push_back(target);
  if (cfg.smooth) result = shortcut(result, map);
  return result;
}

}  // namespace relay
