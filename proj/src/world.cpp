#include "relay/world.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace relay {

GridMap::GridMap(int width, int height, int layers, double resolution)
    : width_(width), height_(height), layers_(layers), resolution_(resolution) {
  if (width < 1 || height < 1 || layers < 1) throw ConfigError("map dimensions must be >= 1");
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw ConfigError("map resolution must be > 0");
  cells_.assign(static_cast<std::size_t>(width) * height * layers, 1);
}

void GridMap::set_passable(const Cell& c, bool free) {
  if (!in_bounds(c)) throw ConfigError("cell out of bounds");
  cells_[index(c)] = free ? 1 : 0;
}

Cell GridMap::world_to_cell(const Position& p) const {
  auto q = [this](double v) {
    const double f = std::floor(v / resolution_);
    // Saturate far outside so the cast stays defined; such cells are out of bounds anyway.
    return static_cast<int>(std::clamp(f, -1.0e6, 1.0e6));
  };
  return {q(p.x), q(p.y), q(p.z)};
}

Position GridMap::cell_to_world(const Cell& c) const {
  return {(c.x + 0.5) * resolution_, (c.y + 0.5) * resolution_, (c.layer + 0.5) * resolution_};
}

bool GridMap::is_free(const Position& p) const {
  if (!p.finite()) return false;
  return passable(world_to_cell(p));
}

std::size_t GridMap::free_cell_count(int layer) const {
  std::size_t n = 0;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) n += passable({x, y, layer}) ? 1 : 0;
  return n;
}

namespace {

std::string_view trim_right(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(trim_right(text.substr(start)));
      break;
    }
    lines.push_back(trim_right(text.substr(start, nl - start)));
    start = nl + 1;
  }
  return lines;
}

int header_value(std::string_view line, std::string_view key, int lineno) {
  if (line.substr(0, key.size()) != key || line.size() <= key.size() || line[key.size()] != ' ')
    throw MapParseError(lineno, "expected '" + std::string(key) + " <n>'");
  auto rest = line.substr(key.size() + 1);
  while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
  if (ec != std::errc{} || ptr != rest.data() + rest.size() || v < 1)
    throw MapParseError(lineno, "invalid " + std::string(key) + " value");
  return v;
}

}  // namespace

GridMap parse_map(std::string_view text, double resolution, int layers) {
  const auto lines = split_lines(text);
  auto line_at = [&](std::size_t i) -> std::string_view {
    if (i >= lines.size()) throw MapParseError(static_cast<int>(i + 1), "unexpected end of file");
    return lines[i];
  };
  if (line_at(0).substr(0, 5) != "type " && line_at(0) != "type") throw MapParseError(1, "expected 'type' header");
  const int height = header_value(line_at(1), "height", 2);
  const int width = header_value(line_at(2), "width", 3);
  if (line_at(3) != "map") throw MapParseError(4, "expected 'map'");

  GridMap map(width, height, layers, resolution);
  std::size_t row_count = 0;
  for (std::size_t i = 4; i < lines.size(); ++i) {
    const auto row = lines[i];
    const int lineno = static_cast<int>(i + 1);
    if (row.empty()) {
      // Trailing blank lines are tolerated; blank lines inside the grid are not.
      const bool rest_blank =
          std::all_of(lines.begin() + static_cast<std::ptrdiff_t>(i), lines.end(), [](auto l) { return l.empty(); });
      if (rest_blank) break;
      throw MapParseError(lineno, "empty map row");
    }
    if (static_cast<int>(row_count) >= height) throw MapParseError(lineno, "more rows than declared height");
    if (static_cast<int>(row.size()) != width)
      throw MapParseError(lineno, "row length " + std::to_string(row.size()) + " != width " + std::to_string(width));
    for (int x = 0; x < width; ++x) {
      switch (row[static_cast<std::size_t>(x)]) {
        case '.':
        case 'G':
          break;
        case '@':
        case 'O':
        case 'T':
          map.set_passable({x, static_cast<int>(row_count), 0}, false);
          break;
        default:
          throw MapParseError(lineno, std::string("unknown map character '") + row[static_cast<std::size_t>(x)] + "'");
      }
    }
    ++row_count;
  }
  if (static_cast<int>(row_count) != height)
    throw MapParseError(static_cast<int>(lines.size()),
                        "found " + std::to_string(row_count) + " rows, header says " + std::to_string(height));
  return map;
}

GridMap load_map(const std::filesystem::path& file, double resolution, int layers) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open map file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_map(ss.str(), resolution, layers);
}

void extrude_obstacles(GridMap& map) {
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (!map.passable({x, y, 0}))
        for (int l = 1; l < map.layers(); ++l) map.set_passable({x, y, l}, false);
}

GridMap add_wall_with_window(GridMap map, const CellRange& wall, const std::vector<WindowCell>& window,
                             int window_layer) {
  if (wall.x0 > wall.x1 || wall.y0 > wall.y1) throw ConfigError("wall range is empty");
  if (!map.in_bounds({wall.x0, wall.y0, 0}) || !map.in_bounds({wall.x1, wall.y1, 0}))
    throw ConfigError("wall range outside map");
  if (window_layer < 1 || window_layer >= map.layers())
    throw ConfigError("window layer must be in [1, layers)");
  for (const auto& w : window)
    if (!wall.contains(w.x, w.y)) throw ConfigError("window cell outside wall range");

  for (int y = wall.y0; y <= wall.y1; ++y)
    for (int x = wall.x0; x <= wall.x1; ++x)
      for (int l = 0; l < map.layers(); ++l) map.set_passable({x, y, l}, false);
  for (const auto& w : window) map.set_passable({w.x, w.y, window_layer}, true);
  return map;
}

bool segment_free(const GridMap& map, const Position& a, const Position& b) {
  const double r = map.resolution();
  Cell c = map.world_to_cell(a);
  const Cell end = map.world_to_cell(b);
  if (!map.passable(c) || !map.passable(end)) return false;

  const std::array<double, 3> origin{a.x / r, a.y / r, a.z / r};
  const std::array<double, 3> dir{(b.x - a.x) / r, (b.y - a.y) / r, (b.z - a.z) / r};
  std::array<int, 3> cell{c.x, c.y, c.layer};
  const std::array<int, 3> target{end.x, end.y, end.layer};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (dir[i] > 0) {
      step[i] = 1;
      t_max[i] = (std::floor(origin[i]) + 1.0 - origin[i]) / dir[i];
      t_delta[i] = 1.0 / dir[i];
    } else if (dir[i] < 0) {
      step[i] = -1;
      t_max[i] = (origin[i] - std::floor(origin[i])) / -dir[i];
      t_delta[i] = -1.0 / dir[i];
    } else {
      t_max[i] = kInf;
      t_delta[i] = kInf;
    }
  }
  auto free_at = [&](const std::array<int, 3>& v) { return map.passable({v[0], v[1], v[2]}); };

  const int max_steps = std::abs(target[0] - cell[0]) + std::abs(target[1] - cell[1]) + std::abs(target[2] - cell[2]);
  constexpr double kTie = 1e-9;
  for (int n = 0; n < max_steps && cell != target; ++n) {
    const double t = std::min({t_max[0], t_max[1], t_max[2]});
    if (t > 1.0) break;
    std::array<bool, 3> crossing{};
    int crossings = 0;
    for (int i = 0; i < 3; ++i) {
      crossing[i] = t_max[i] <= t + kTie;
      crossings += crossing[i] ? 1 : 0;
    }
    if (crossings > 1) {
      // Passing exactly through an edge or corner: every cell sharing it must
      // be free, which rules out squeezing between diagonal obstacles.
      for (int i = 0; i < 3; ++i) {
        if (!crossing[i]) continue;
        auto side = cell;
        side[i] += step[i];
        if (!free_at(side)) return false;
      }
      if (crossings == 3) {
        for (int skip = 0; skip < 3; ++skip) {
          auto side = cell;
          for (int i = 0; i < 3; ++i)
            if (i != skip) side[i] += step[i];
          if (!free_at(side)) return false;
        }
      }
    }
    for (int i = 0; i < 3; ++i) {
      if (!crossing[i]) continue;
      cell[i] += step[i];
      t_max[i] += t_delta[i];
    }
    if (!free_at(cell)) return false;
  }
  return true;
}

Position clamp_motion(const GridMap& map, const Position& from, const Vec3& delta) {
  Position p = from;
  const double parts[3] = {delta.x, delta.y, delta.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (parts[axis] == 0.0) continue;
    Position q = p;
    if (axis == 0) q.x += parts[axis];
    if (axis == 1) q.y += parts[axis];
    if (axis == 2) q.z += parts[axis];
    if (segment_free(map, p, q)) p = q;
  }
  return p;
}

}  // namespace relay
