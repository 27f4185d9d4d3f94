#include "relay/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace relay {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown fields.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SpecError(label() + ": expected an object");
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json* find(const std::string& key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  template <typename T>
  void opt(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw SpecError(where(key) + ": wrong type");
      }
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw SpecError("unknown field '" + where(k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Position read_position(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() < 2 || v.size() > 3) throw SpecError(where + ": expected [x, y] or [x, y, z]");
  Position p;
  try {
    p.x = v[0].get<double>();
    p.y = v[1].get<double>();
    if (v.size() == 3) p.z = v[2].get<double>();
  } catch (const json::exception&) {
    throw SpecError(where + ": coordinates must be numbers");
  }
  return p;
}

json write_position(const Position& p) { return json::array({p.x, p.y, p.z}); }

RobotKind read_kind(const std::string& s, const std::string& where) {
  if (s == "ground") return RobotKind::Ground;
  if (s == "flying") return RobotKind::Flying;
  throw SpecError(where + ": expected 'ground' or 'flying'");
}

FailurePlan::Mode read_failure_mode(const std::string& s, const std::string& where) {
  if (s == "none") return FailurePlan::Mode::None;
  if (s == "scripted") return FailurePlan::Mode::Scripted;
  if (s == "random") return FailurePlan::Mode::Random;
  if (s == "consecutive") return FailurePlan::Mode::Consecutive;
  throw SpecError(where + ": unknown failure mode '" + s + "'");
}

void read_map(const json& j, MapSpec& m) {
  Obj o(j, "map");
  o.opt("file", m.file);
  o.opt("resolution", m.resolution);
  o.opt("layers", m.layers);
  o.opt("extrude", m.extrude);
  if (const json* w = o.find("wall")) {
    Obj ow(*w, "map.wall");
    WallSpec ws;
    if (const json* r = ow.find("cells")) {
      Obj orr(*r, "map.wall.cells");
      orr.opt("x0", ws.wall.x0);
      orr.opt("y0", ws.wall.y0);
      orr.opt("x1", ws.wall.x1);
      orr.opt("y1", ws.wall.y1);
      orr.finish();
    }
    if (const json* win = ow.find("window")) {
      if (!win->is_array()) throw SpecError("map.wall.window: expected a list of [x, y]");
      for (std::size_t i = 0; i < win->size(); ++i) {
        const auto& c = (*win)[i];
        if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer())
          throw SpecError("map.wall.window[" + std::to_string(i) + "]: expected [x, y] cell");
        ws.window.push_back({c[0].get<int>(), c[1].get<int>()});
      }
    }
    ow.opt("layer", ws.window_layer);
    ow.finish();
    m.wall = ws;
  }
  o.finish();
  if (m.file.empty()) throw SpecError("map.file: missing");
}

void read_robots(const json& j, RosterSpec& r) {
  Obj o(j, "robots");
  o.opt("ground", r.ground);
  o.opt("flying", r.flying);
  o.opt("separation", r.separation);
  o.opt("flying_altitude", r.flying_altitude);
  if (const json* s = o.find("spawn")) {
    Obj os(*s, "robots.spawn");
    os.opt("x0", r.x0);
    os.opt("y0", r.y0);
    os.opt("x1", r.x1);
    os.opt("y1", r.y1);
    os.finish();
  }
  if (const json* p = o.find("placed")) {
    if (!p->is_array()) throw SpecError("robots.placed: expected a list");
    for (std::size_t i = 0; i < p->size(); ++i) {
      const std::string path = "robots.placed[" + std::to_string(i) + "]";
      Obj op((*p)[i], path);
      PlacedRobot pr;
      std::string kind = "ground";
      op.opt("kind", kind);
      pr.kind = read_kind(kind, path + ".kind");
      if (const json* pos = op.find("position")) pr.position = read_position(*pos, path + ".position");
      op.finish();
      r.placed.push_back(pr);
    }
  }
  o.finish();
}

void read_radio(const json& j, RadioConfig& r) {
  Obj o(j, "radio");
  o.opt("range", r.range);
  o.opt("near_field", r.near_field);
  o.opt("safe", r.safe);
  o.opt("critical", r.critical);
  o.opt("breakaway", r.breakaway);
  o.opt("e_min", r.e_min);
  o.opt("mtu", r.mtu);
  std::string mode = r.mode == DeliveryMode::Deterministic ? "deterministic" : "probabilistic";
  o.opt("delivery", mode);
  if (mode == "deterministic")
    r.mode = DeliveryMode::Deterministic;
  else if (mode == "probabilistic")
    r.mode = DeliveryMode::Probabilistic;
  else
    throw SpecError("radio.delivery: expected 'deterministic' or 'probabilistic'");
  o.finish();
}

void read_control(const json& j, ControlConfig& c) {
  Obj o(j, "control");
  o.opt("v_max", c.v_max);
  o.opt("dt", c.dt);
  o.opt("alpha", c.alpha);
  o.opt("r_col", c.r_col);
  o.opt("avoid_radius", c.avoid_radius);
  o.opt("link_failure_time", c.link_failure_time);
  o.opt("status_period", c.status_period);
  o.opt("forgetting_time", c.forgetting_time);
  o.opt("bidding_time", c.bidding_time);
  o.opt("query_period", c.query_period);
  o.opt("wp_prediction", c.wp_prediction);
  o.opt("target_tolerance", c.target_tolerance);
  o.opt("lookahead", c.lookahead);
  o.opt("tight_fraction", c.tight_fraction);
  o.opt("join_fraction", c.join_fraction);
  o.opt("window_k", c.window_k);
  o.opt("request_timeout", c.request_timeout);
  o.opt("join_timeout", c.join_timeout);
  o.opt("claim_timeout", c.claim_timeout);
  o.opt("replan_interval", c.replan_interval);
  o.opt("loiter_radius", c.loiter_radius);
  o.finish();
}

void read_failures(const json& j, FailurePlan& f) {
  Obj o(j, "failures");
  std::string mode(to_string(f.mode));
  o.opt("mode", mode);
  f.mode = read_failure_mode(mode, "failures.mode");
  o.opt("p", f.p);
  o.opt("fraction", f.fraction);
  o.opt("count", f.count);
  o.opt("start_depth", f.start_depth);
  o.opt("delay", f.delay);
  if (const json* s = o.find("scripted")) {
    if (!s->is_array()) throw SpecError("failures.scripted: expected a list");
    for (std::size_t i = 0; i < s->size(); ++i) {
      Obj os((*s)[i], "failures.scripted[" + std::to_string(i) + "]");
      FailurePlan::Scripted sc;
      os.opt("tick", sc.tick);
      os.opt("robots", sc.robots);
      os.finish();
      f.scripted.push_back(sc);
    }
  }
  o.finish();
}

void read_planner(const json& j, PlannerConfig& p, bool& astar_only) {
  Obj o(j, "planner");
  o.opt("budget", p.budget);
  o.opt("step", p.step);
  o.opt("goal_bias", p.goal_bias);
  o.opt("goal_tolerance", p.goal_tolerance);
  o.opt("smooth", p.smooth);
  o.opt("astar_only", astar_only);
  o.finish();
}

}  // namespace

bool ScenarioSpec::operator==(const ScenarioSpec& o) const {
  return version == o.version && id == o.id && map == o.map && robots == o.robots && root_mode == o.root_mode &&
         root == o.root && anchor == o.anchor && targets == o.targets && links == o.links && radio == o.radio &&
         control == o.control && failures == o.failures && planner == o.planner && astar_only == o.astar_only &&
         seed == o.seed && tick_budget == o.tick_budget && output == o.output && sweep_axis == o.sweep_axis &&
         sweep_values == o.sweep_values;
}

ScenarioSpec parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("not valid JSON: ") + e.what());
  }
  ScenarioSpec s;
  s.base_dir = base_dir;
  Obj o(j, "");
  o.opt("version", s.version);
  if (s.version != kScenarioVersion)
    throw SpecError("version: unsupported schema version " + std::to_string(s.version));
  o.opt("id", s.id);
  if (const json* m = o.find("map"))
    read_map(*m, s.map);
  else
    throw SpecError("map: missing");
  if (const json* r = o.find("robots")) read_robots(*r, s.robots);
  if (const json* r = o.find("root")) {
    Obj orr(*r, "root");
    std::string mode = "fixed";
    orr.opt("mode", mode);
    if (mode == "fixed")
      s.root_mode = RootMode::Fixed;
    else if (mode == "elected")
      s.root_mode = RootMode::Elected;
    else
      throw SpecError("root.mode: expected 'fixed' or 'elected'");
    orr.opt("id", s.root);
    orr.finish();
  }
  if (const json* a = o.find("anchor")) s.anchor = read_position(*a, "anchor");
  if (const json* t = o.find("targets")) {
    if (!t->is_array()) throw SpecError("targets: expected a list");
    for (std::size_t i = 0; i < t->size(); ++i)
      s.targets.push_back(read_position((*t)[i], "targets[" + std::to_string(i) + "]"));
  }
  o.opt("links", s.links);
  if (const json* r = o.find("radio")) read_radio(*r, s.radio);
  if (const json* c = o.find("control")) read_control(*c, s.control);
  if (const json* f = o.find("failures")) read_failures(*f, s.failures);
  if (const json* p = o.find("planner")) read_planner(*p, s.planner, s.astar_only);
  o.opt("seed", s.seed);
  o.opt("tick_budget", s.tick_budget);
  o.opt("output", s.output);
  if (const json* sw = o.find("sweep")) {
    Obj os(*sw, "sweep");
    os.opt("axis", s.sweep_axis);
    os.opt("values", s.sweep_values);
    os.finish();
  }
  o.finish();
  return s;
}

ScenarioSpec load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw SpecError("cannot open scenario file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), file.parent_path());
}

std::string serialize_scenario(const ScenarioSpec& s) {
  json j;
  j["version"] = s.version;
  j["id"] = s.id;
  json m = {{"file", s.map.file}, {"resolution", s.map.resolution}, {"layers", s.map.layers}, {"extrude", s.map.extrude}};
  if (s.map.wall) {
    json win = json::array();
    for (const auto& c : s.map.wall->window) win.push_back({c.x, c.y});
    const auto& w = s.map.wall->wall;
    m["wall"] = {{"cells", {{"x0", w.x0}, {"y0", w.y0}, {"x1", w.x1}, {"y1", w.y1}}},
                 {"window", win},
                 {"layer", s.map.wall->window_layer}};
  }
  j["map"] = m;
  json placed = json::array();
  for (const auto& p : s.robots.placed)
    placed.push_back({{"kind", std::string(to_string(p.kind))}, {"position", write_position(p.position)}});
  j["robots"] = {{"ground", s.robots.ground},
                 {"flying", s.robots.flying},
                 {"separation", s.robots.separation},
                 {"flying_altitude", s.robots.flying_altitude},
                 {"spawn", {{"x0", s.robots.x0}, {"y0", s.robots.y0}, {"x1", s.robots.x1}, {"y1", s.robots.y1}}},
                 {"placed", placed}};
  j["root"] = {{"mode", s.root_mode == RootMode::Fixed ? "fixed" : "elected"}, {"id", s.root}};
  j["anchor"] = write_position(s.anchor);
  json targets = json::array();
  for (const auto& t : s.targets) targets.push_back(write_position(t));
  j["targets"] = targets;
  j["links"] = s.links;
  const auto& r = s.radio;
  j["radio"] = {{"range", r.range},       {"near_field", r.near_field}, {"safe", r.safe},
                {"critical", r.critical}, {"breakaway", r.breakaway},   {"e_min", r.e_min},
                {"mtu", r.mtu},
                {"delivery", r.mode == DeliveryMode::Deterministic ? "deterministic" : "probabilistic"}};
  const auto& c = s.control;
  j["control"] = {{"v_max", c.v_max},
                  {"dt", c.dt},
                  {"alpha", c.alpha},
                  {"r_col", c.r_col},
                  {"avoid_radius", c.avoid_radius},
                  {"link_failure_time", c.link_failure_time},
                  {"status_period", c.status_period},
                  {"forgetting_time", c.forgetting_time},
                  {"bidding_time", c.bidding_time},
                  {"query_period", c.query_period},
                  {"wp_prediction", c.wp_prediction},
                  {"target_tolerance", c.target_tolerance},
                  {"lookahead", c.lookahead},
                  {"tight_fraction", c.tight_fraction},
                  {"join_fraction", c.join_fraction},
                  {"window_k", c.window_k},
                  {"request_timeout", c.request_timeout},
                  {"join_timeout", c.join_timeout},
                  {"claim_timeout", c.claim_timeout},
                  {"replan_interval", c.replan_interval},
                  {"loiter_radius", c.loiter_radius}};
  const auto& f = s.failures;
  json scripted = json::array();
  for (const auto& sc : f.scripted) scripted.push_back({{"tick", sc.tick}, {"robots", sc.robots}});
  j["failures"] = {{"mode", std::string(to_string(f.mode))},
                   {"p", f.p},
                   {"fraction", f.fraction},
                   {"count", f.count},
                   {"start_depth", f.start_depth},
                   {"delay", f.delay},
                   {"scripted", scripted}};
  const auto& p = s.planner;
  j["planner"] = {{"budget", p.budget},
                  {"step", p.step},
                  {"goal_bias", p.goal_bias},
                  {"goal_tolerance", p.goal_tolerance},
                  {"smooth", p.smooth},
                  {"astar_only", s.astar_only}};
  j["seed"] = s.seed;
  j["tick_budget"] = s.tick_budget;
  j["output"] = s.output;
  j["sweep"] = {{"axis", s.sweep_axis}, {"values", s.sweep_values}};
  return j.dump(2) + "\n";
}

GridMap build_map(const ScenarioSpec& spec) {
  if (!(spec.map.resolution > 0)) throw ConfigError("map.resolution must be positive");
  if (spec.map.layers < 1) throw ConfigError("map.layers must be >= 1");
  const auto file = spec.base_dir / spec.map.file;
  GridMap map = load_map(file, spec.map.resolution, spec.map.layers);
  if (spec.map.extrude) extrude_obstacles(map);
  if (spec.map.wall) {
    const auto& w = *spec.map.wall;
    if (w.window_layer < 0 || w.window_layer >= map.layers())
      throw ConfigError("map.wall.layer must name an existing layer");
    map = add_wall_with_window(std::move(map), w.wall, w.window, w.window_layer);
  }
  return map;
}

std::vector<RobotSpawn> build_roster(const ScenarioSpec& spec, const GridMap& map) {
  std::vector<RobotSpawn> out;
  if (!spec.robots.placed.empty()) {
    for (const auto& p : spec.robots.placed) out.push_back({p.kind, p.position});
    return out;
  }
  if (spec.robots.ground < 0 || spec.robots.flying < 0) throw ConfigError("robots: counts must be non-negative");
  const int n = spec.robots.ground + spec.robots.flying;
  if (n < 1) throw ConfigError("robots: roster is empty");
  const auto& r = spec.robots;
  if (r.x1 < r.x0 || r.y1 < r.y0) throw ConfigError("robots.spawn: empty box");
  Rng rng(derive_seed(spec.seed, "spawn"));
  for (int i = 0; i < n; ++i) {
    const RobotKind kind = i < r.ground ? RobotKind::Ground : RobotKind::Flying;
    if (spec.root_mode == RootMode::Fixed && i == spec.root) {
      Position p = spec.anchor;
      if (kind == RobotKind::Ground) p.z = 0.0;
      out.push_back({kind, p});
      continue;
    }
    bool placed = false;
    for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
      Position p{rng.uniform(r.x0, r.x1), rng.uniform(r.y0, r.y1),
                 kind == RobotKind::Flying ? r.flying_altitude : 0.0};
      if (!map.is_free(p)) continue;
      bool clear = true;
      for (const auto& o : out) clear = clear && distance(o.position, p) >= r.separation;
      if (spec.root_mode == RootMode::Fixed && spec.root > i)
        clear = clear && distance(spec.anchor, p) >= r.separation;
      if (!clear) continue;
      out.push_back({kind, p});
      placed = true;
    }
    if (!placed) throw ConfigError("robots.spawn: no room for robot " + std::to_string(i));
  }
  return out;
}

SimConfig build_sim(const ScenarioSpec& spec) {
  spec.radio.validate();
  spec.control.validate(spec.radio);
  spec.failures.validate();
  if (spec.links < 1) throw ConfigError("links must be >= 1");
  if (spec.targets.empty()) throw ConfigError("targets: at least one target is required");
  if (spec.tick_budget < 1) throw ConfigError("tick_budget must be >= 1");
  if (spec.planner.budget < 1) throw ConfigError("planner.budget must be >= 1");
  if (!(spec.planner.step > 0)) throw ConfigError("planner.step must be positive");

  SimConfig cfg;
  auto map = std::make_shared<GridMap>(build_map(spec));
  cfg.robots = build_roster(spec, *map);
  cfg.map = std::move(map);
  cfg.radio = spec.radio;
  cfg.control = spec.control;
  cfg.mission.targets = spec.targets;
  cfg.mission.links = spec.links;
  cfg.mission.anchor = spec.anchor;
  cfg.mission.root_mode = spec.root_mode;
  cfg.mission.root = spec.root;
  cfg.mission.seed = spec.seed;
  cfg.planner = spec.planner;
  cfg.astar_only = spec.astar_only;
  cfg.failures = spec.failures;
  cfg.seed = spec.seed;
  cfg.tick_budget = spec.tick_budget;
  cfg.scenario_id = spec.id;
  return cfg;
}

std::vector<std::string> sweep_axes() { return {"failure_count", "fraction", "links", "flying", "p"}; }

void apply_sweep(ScenarioSpec& spec, std::string_view axis, double value) {
  if (axis == "failure_count")
    spec.failures.count = static_cast<int>(value);
  else if (axis == "fraction")
    spec.failures.fraction = value;
  else if (axis == "links")
    spec.links = static_cast<int>(value);
  else if (axis == "flying")
    spec.robots.flying = static_cast<int>(value);
  else if (axis == "p")
    spec.failures.p = value;
  else
    throw SpecError("unknown sweep axis '" + std::string(axis) + "'");
}

}  // namespace relay
