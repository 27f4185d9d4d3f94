#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "relay/geometry.hpp"

namespace relay {

class MapParseError : public std::runtime_error {
 public:
  MapParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  int x = 0;
  int y = 0;
  int layer = 0;
  constexpr bool operator==(const Cell&) const = default;
};

// Layered occupancy grid. Layer 0 is the ground plane; each layer above it
// spans one resolution step of altitude. Immutable once a scenario starts.
class GridMap {
 public:
  GridMap(int width, int height, int layers, double resolution);

  int width() const { return width_; }
  int height() const { return height_; }
  int layers() const { return layers_; }
  double resolution() const { return resolution_; }
  double width_m() const { return width_ * resolution_; }
  double height_m() const { return height_ * resolution_; }
  double ceiling_m() const { return layers_ * resolution_; }

  bool in_bounds(const Cell& c) const {
    return c.x >= 0 && c.y >= 0 && c.layer >= 0 && c.x < width_ && c.y < height_ && c.layer < layers_;
  }
  // Out-of-bounds cells are never passable.
  bool passable(const Cell& c) const { return in_bounds(c) && cells_[index(c)] != 0; }
  void set_passable(const Cell& c, bool free);

  Cell world_to_cell(const Position& p) const;
  Position cell_to_world(const Cell& c) const;
  bool is_free(const Position& p) const;

  std::size_t free_cell_count(int layer) const;

 private:
  std::size_t index(const Cell& c) const {
    return (static_cast<std::size_t>(c.layer) * height_ + c.y) * width_ + c.x;
  }

  int width_;
  int height_;
  int layers_;
  double resolution_;
  std::vector<std::uint8_t> cells_;
};

// Reads the benchmark grid format: `type`, `height N`, `width M`, `map`
// header lines followed by N rows of M characters. '.' and 'G' are
// passable; '@', 'O' and 'T' are blocked. Layers above the ground start
// fully passable.
GridMap parse_map(std::string_view text, double resolution, int layers);
GridMap load_map(const std::filesystem::path& file, double resolution, int layers);

// Copies every ground obstacle to all layers above it.
void extrude_obstacles(GridMap& map);

struct CellRange {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // inclusive
  int y1 = 0;  // inclusive
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const CellRange&) const = default;
};

struct WindowCell {
  int x = 0;
  int y = 0;
  bool operator==(const WindowCell&) const = default;
};

// Blocks `wall` on every layer, then reopens `window` on `window_layer` only.
GridMap add_wall_with_window(GridMap map, const CellRange& wall, const std::vector<WindowCell>& window,
                             int window_layer);

// Exact grid traversal: true iff every cell touched by the segment is passable.
bool segment_free(const GridMap& map, const Position& a, const Position& b);

// Applies `delta` one axis at a time (x, y, z), dropping any axis component
// whose move would touch a blocked cell. Robots slide along walls.
Position clamp_motion(const GridMap& map, const Position& from, const Vec3& delta);

}  // namespace relay
