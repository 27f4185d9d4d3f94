#include <gtest/gtest.h>

#include "relay/scenario.hpp"
#include "support.hpp"

using namespace relay;
using relay::testing::data_dir;
using relay::testing::load_bundled;

namespace {

std::string minimal(const std::string& extra = "") {
  return R"({"version": 1, "id": "t", "map": {"file": "maps/open20.map"}, "robots": {"ground": 3,
             "spawn": {"x0": 1, "y0": 1, "x1": 4, "y1": 4}}, "anchor": [2, 2], "targets": [[10, 10]])" +
         extra + "}";
}

std::string spec_error(const std::string& text) {
  try {
    parse_scenario(text, data_dir());
  } catch (const SpecError& e) {
    return e.what();
  }
  return "";
}

// Hand-rolled generator: a spec with every section filled with random but
// well-typed values.
ScenarioSpec random_spec(Rng& rng) {
  ScenarioSpec s;
  s.id = "gen" + std::to_string(rng.index(1000));
  s.map.file = rng.bernoulli(0.5) ? "maps/open20.map" : "maps/forest64.map";
  s.map.resolution = rng.uniform(0.1, 2.0);
  s.map.layers = 1 + static_cast<int>(rng.index(4));
  s.map.extrude = rng.bernoulli(0.5);
  if (rng.bernoulli(0.5)) {
    WallSpec w;
    w.wall = {3, 0, 3, 9};
    w.window = {{3, static_cast<int>(rng.index(10))}};
    w.window_layer = 1;
    s.map.wall = w;
  }
  s.robots.ground = static_cast<int>(rng.index(30));
  s.robots.flying = static_cast<int>(rng.index(10));
  s.robots.x0 = rng.uniform(0, 5);
  s.robots.y0 = rng.uniform(0, 5);
  s.robots.x1 = s.robots.x0 + rng.uniform(0, 5);
  s.robots.y1 = s.robots.y0 + rng.uniform(0, 5);
  s.robots.separation = rng.uniform(0.1, 1.0);
  s.robots.flying_altitude = rng.uniform(0, 2);
  if (rng.bernoulli(0.3))
    s.robots.placed = {{RobotKind::Ground, {1.25, 2.5, 0}}, {RobotKind::Flying, {3, 4, rng.uniform(0, 2)}}};
  s.root_mode = rng.bernoulli(0.5) ? RootMode::Fixed : RootMode::Elected;
  s.root = static_cast<RobotId>(rng.index(5));
  s.anchor = {rng.uniform(0, 20), rng.uniform(0, 20), 0};
  for (std::uint64_t i = 0, n = 1 + rng.index(3); i < n; ++i) s.targets.push_back({rng.uniform(0, 20), rng.uniform(0, 20), 0});
  s.links = 1 + static_cast<int>(rng.index(3));
  s.radio.range = rng.uniform(2, 20);
  s.radio.safe = rng.uniform(1, 2);
  s.radio.mtu = 64 + rng.index(1000);
  s.radio.mode = rng.bernoulli(0.5) ? DeliveryMode::Deterministic : DeliveryMode::Probabilistic;
  s.control.v_max = rng.uniform(0.05, 2.0);
  s.control.wp_prediction = rng.bernoulli(0.5);
  s.control.window_k = 1 + static_cast<int>(rng.index(4));
  s.control.lookahead = rng.uniform(0.1, 3.0);
  const FailurePlan::Mode modes[] = {FailurePlan::Mode::None, FailurePlan::Mode::Scripted, FailurePlan::Mode::Random,
                                     FailurePlan::Mode::Consecutive};
  s.failures.mode = modes[rng.index(4)];
  s.failures.p = rng.uniform(0, 0.01);
  s.failures.fraction = rng.uniform(0, 1);
  s.failures.count = static_cast<int>(rng.index(6));
  s.failures.delay = rng.uniform(0, 5);
  if (rng.bernoulli(0.5)) s.failures.scripted = {{static_cast<Tick>(rng.index(500)), {1, 2}}, {700, {}}};
  s.planner.budget = 1 + static_cast<int>(rng.index(30000));
  s.planner.step = rng.uniform(0.1, 3);
  s.planner.smooth = rng.bernoulli(0.5);
  s.astar_only = rng.bernoulli(0.2);
  s.seed = rng.next();
  s.tick_budget = 1 + static_cast<Tick>(rng.index(100000));
  s.output = rng.bernoulli(0.5) ? "" : "out_" + std::to_string(rng.index(9));
  if (rng.bernoulli(0.5)) {
    s.sweep_axis = "fraction";
    s.sweep_values = {0.0, rng.uniform(0, 1)};
  }
  return s;
}

}  // namespace

TEST(Scenario, BundledScenariosParseAndBuild) {
  for (const auto& name : relay::testing::bundled_scenarios()) {
    SCOPED_TRACE(name);
    const ScenarioSpec spec = load_bundled(name);
    EXPECT_EQ(spec.id, name);
    const SimConfig cfg = build_sim(spec);
    EXPECT_EQ(static_cast<int>(cfg.robots.size()), spec.robots.ground + spec.robots.flying);
    EXPECT_NO_THROW(Simulation{cfg});
  }
}

TEST(Scenario, MinimalSpecFillsDefaults) {
  const ScenarioSpec s = parse_scenario(minimal(), data_dir());
  EXPECT_EQ(s.links, 1);
  EXPECT_EQ(s.radio, RadioConfig{});
  EXPECT_EQ(s.control, ControlConfig{});
  EXPECT_EQ(s.failures.mode, FailurePlan::Mode::None);
  EXPECT_EQ(s.targets.size(), 1u);
  EXPECT_EQ(s.anchor, (Position{2, 2, 0}));
}

TEST(Scenario, UnknownFieldsNameTheKeyPath) {
  EXPECT_NE(spec_error(minimal(R"(, "radio": {"rnage": 3})")).find("radio.rnage"), std::string::npos);
  EXPECT_NE(spec_error(minimal(R"(, "colour": 1)")).find("colour"), std::string::npos);
  EXPECT_NE(spec_error(minimal(R"(, "map2": {})")).find("map2"), std::string::npos);
  EXPECT_NE(spec_error(minimal(R"(, "control": {"v_max": "fast"})")).find("control.v_max"), std::string::npos);
}

TEST(Scenario, StructuralErrors) {
  EXPECT_FALSE(spec_error("{not json").empty());
  EXPECT_NE(spec_error(R"({"version": 2})").find("version"), std::string::npos);
  EXPECT_NE(spec_error(minimal(R"(, "root": {"mode": "boss"})")).find("root.mode"), std::string::npos);
  EXPECT_NE(spec_error(minimal(R"(, "failures": {"mode": "often"})")).find("failures"), std::string::npos);
  EXPECT_NE(spec_error(minimal(R"(, "radio": {"delivery": "sometimes"})")).find("radio.delivery"), std::string::npos);
  EXPECT_THROW(load_scenario(data_dir() / "scenarios" / "missing.scenario"), SpecError);
}

TEST(Scenario, OrderingViolationNamesTheOrdering) {
  const ScenarioSpec s = parse_scenario(minimal(R"(, "radio": {"safe": 1.7})"), data_dir());
  try {
    build_sim(s);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d_s < d_c"), std::string::npos);
  }
}

TEST(Scenario, SweepAxes) {
  ScenarioSpec s = load_bundled("random_failure");
  for (const auto& axis : sweep_axes()) EXPECT_NO_THROW(apply_sweep(s, axis, 2));
  EXPECT_EQ(s.failures.count, 2);
  EXPECT_EQ(s.links, 2);
  EXPECT_EQ(s.robots.flying, 2);
  EXPECT_DOUBLE_EQ(s.failures.p, 2.0);
  EXPECT_THROW(apply_sweep(s, "colour", 1), SpecError);
}

// Property: serialize then parse gives back the same structure, and the
// canonical text is a fixed point.
TEST(ScenarioProperty, SerializeParseRoundTrip) {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const ScenarioSpec s = random_spec(rng);
    const std::string text = serialize_scenario(s);
    const ScenarioSpec back = parse_scenario(text, data_dir());
    ASSERT_EQ(back, s) << text;
    ASSERT_EQ(serialize_scenario(back), text);
  }
  for (const auto& name : relay::testing::bundled_scenarios()) {
    const ScenarioSpec s = load_bundled(name);
    EXPECT_EQ(parse_scenario(serialize_scenario(s), s.base_dir), s) << name;
  }
}

// Property: spawned rosters are deterministic, inside the box, on free cells
// and separated.
TEST(ScenarioProperty, RosterRespectsSpawnRules) {
  for (const auto& name : relay::testing::bundled_scenarios()) {
    SCOPED_TRACE(name);
    ScenarioSpec spec = load_bundled(name);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      spec.seed = seed;
      const GridMap map = build_map(spec);
      const auto a = build_roster(spec, map);
      const auto b = build_roster(spec, map);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].position, b[i].position);
        EXPECT_TRUE(map.is_free(a[i].position));
        EXPECT_EQ(a[i].kind, static_cast<int>(i) < spec.robots.ground ? RobotKind::Ground : RobotKind::Flying);
        if (spec.root_mode == RootMode::Fixed && static_cast<RobotId>(i) == spec.root) {
          EXPECT_EQ(a[i].position, spec.anchor);
          continue;
        }
        EXPECT_GE(a[i].position.x, spec.robots.x0);
        EXPECT_LE(a[i].position.x, spec.robots.x1);
        EXPECT_GE(a[i].position.y, spec.robots.y0);
        EXPECT_LE(a[i].position.y, spec.robots.y1);
        for (std::size_t j = 0; j < i; ++j) EXPECT_GE(distance(a[i].position, a[j].position), spec.robots.separation);
      }
    }
  }
}

TEST(Scenario, CrowdedSpawnBoxFails) {
  ScenarioSpec s = parse_scenario(minimal(), data_dir());
  s.robots.ground = 50;
  s.robots.x1 = 1.5;
  s.robots.y1 = 1.5;
  EXPECT_THROW(build_roster(s, build_map(s)), ConfigError);
}
