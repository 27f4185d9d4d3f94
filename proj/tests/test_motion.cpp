#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "relay/controller.hpp"
#include "support.hpp"

using namespace relay;

namespace {

Vec3 random_velocity(Rng& rng, double v_max) {
  for (;;) {
    const Vec3 v{rng.uniform(-v_max, v_max), rng.uniform(-v_max, v_max), 0.0};
    if (v.norm() <= v_max) return v;
  }
}

Track straight(double len) {
  Path p;
  p.waypoints = {{0, 0, 0}, {len, 0, 0}};
  return Track(p, 0.25);
}

}  // namespace

TEST(ControlConfig, ValidatesStepAgainstBreakawayBand) {
  RadioConfig r;
  ControlConfig c;
  EXPECT_NO_THROW(c.validate(r));
  c.v_max = 2.0;  // 0.2 m per tick, band is 0.2 m
  EXPECT_THROW(c.validate(r), ConfigError);
  c = ControlConfig{};
  c.status_period = 0.05;
  EXPECT_THROW(c.validate(r), ConfigError);
  c = ControlConfig{};
  EXPECT_EQ(c.ticks(5.0), 50);
  EXPECT_EQ(c.ticks(0.0), 1);
  EXPECT_DOUBLE_EQ(c.tolerance(r), 0.7);
  EXPECT_DOUBLE_EQ(c.loiter(r), 2.8);
}

TEST(Track, ProjectAndLookup) {
  const Track t = straight(4.0);
  EXPECT_DOUBLE_EQ(t.length(), 4.0);
  EXPECT_NEAR(t.project({1.3, 0.7, 0}, 0, 4), 1.3, 1e-12);
  EXPECT_NEAR(t.project({3.5, 0, 0}, 0, 2), 2.0, 1e-12);
  EXPECT_NEAR(t.at(2.5).x, 2.5, 1e-12);
}

TEST(Carrot, ForwardBackwardAndLanding) {
  const Track t = straight(4.0);
  const Vec3 f = u_path(t, 1.0, {1, 0, 0}, Direction::Forward, 0.5, 0.5, 0.1);
  EXPECT_NEAR(f.x, 0.5, 1e-12);
  const Vec3 b = u_path(t, 1.0, {1, 0, 0}, Direction::Backward, 0.5, 0.5, 0.1);
  EXPECT_NEAR(b.x, -0.5, 1e-12);
  // within one step of the end: land exactly
  const Vec3 l = u_path(t, 3.98, {3.98, 0, 0}, Direction::Forward, 0.5, 0.5, 0.1);
  EXPECT_NEAR(l.x * 0.1, 0.02, 1e-12);
  const Vec3 g = u_to_arc(t, 1.0, {1, 0.3, 0}, 1.0, 0.5, 0.5, 0.1);
  EXPECT_LT(g.y, 0.0);
}

TEST(Carrot, PulledBackIntoLineOfSight) {
  GridMap m(6, 6, 1, 1.0);
  m.set_passable({2, 1, 0}, false);
  Path p;
  p.waypoints = {{1.5, 0.5, 0}, {1.5, 2.5, 0}, {4.5, 2.5, 0}};
  const Track t(p, 0.25);
  const Position x{1.5, 1.5, 0};
  const Vec3 blind = u_path(t, 1.0, x, Direction::Forward, 0.5, 2.0, 0.1);
  const Vec3 seen = u_path(t, 1.0, x, Direction::Forward, 0.5, 2.0, 0.1, &m);
  EXPECT_FALSE(segment_free(m, x, x + blind.normalized() * 1.5));
  EXPECT_TRUE(segment_free(m, x, x + seen.normalized() * 0.5));
}

TEST(PreferredVelocity, ExpandGateAndRetract) {
  PrefInputs in;
  in.has_plan = true;
  in.forward = {0.5, 0, 0};
  in.backward = {-0.5, 0, 0};
  in.d_parent = 1.0;
  EXPECT_EQ(preferred_velocity(in).x, 0.5);
  in.d_child = 1.5;  // child lagging: hold
  EXPECT_EQ(preferred_velocity(in).x, 0.0);
  in.d_parent = 1.5;  // parent link stretched: retract
  EXPECT_EQ(preferred_velocity(in).x, -0.5);
  in.role = Role::Free;
  EXPECT_EQ(preferred_velocity(in).x, 0.0);
  in.role = Role::Worker;
  in.has_plan = false;
  EXPECT_EQ(preferred_velocity(in).x, 0.0);
}

TEST(ConnectivityBound, Formula) {
  EXPECT_DOUBLE_EQ(connectivity_bound(std::nullopt, std::nullopt, 1.4, 0.1, 0.5), 0.5);
  EXPECT_NEAR(connectivity_bound(1.0, std::nullopt, 1.4, 0.1, 0.5), 2.0, 1e-12);
  EXPECT_NEAR(connectivity_bound(1.0, 1.3, 1.4, 0.1, 0.5), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(connectivity_bound(1.6, 1.3, 1.4, 0.1, 0.5), 0.0);
}

TEST(MotionLimits, SpeedAndWalls) {
  GridMap m(4, 4, 1, 1.0);
  m.set_passable({2, 1, 0}, false);
  MotionLimits lim(&m, {1.95, 1.5, 0}, 0.1, 0.5);
  EXPECT_FALSE(lim.admissible({0.6, 0, 0}));
  EXPECT_TRUE(lim.admissible({0.5, 0, 0}));
  EXPECT_DOUBLE_EQ(lim.displacement({0.5, 0, 0}).x, 0.0);  // blocked axis dropped
  // link already at 1.45 > 1.4: standing still is fine, moving away is not
  MotionLimits far(nullptr, {1.95, 1.5, 0}, 0.1, 0.5);
  EXPECT_TRUE(far.admissible({0, 0, 0}));
  far.add_link({{0.5, 1.5, 0}, 1.4});
  EXPECT_FALSE(far.admissible({0.5, 0, 0}));
  EXPECT_TRUE(far.admissible({-0.5, 0, 0}));
  EXPECT_DOUBLE_EQ(far.max_speed_along({1, 0, 0}), 0.0);
  EXPECT_NEAR(far.max_speed_along({-0.5, 0, 0}), 0.5, 1e-9);
}

// Property: two linked robots that each only pick admissible velocities never
// push their link past max(ceiling, current length).
TEST(MotionLimitsProperty, LinkNeverGrowsPastCeiling) {
  Rng rng(77);
  const double dt = 0.1, v = 0.5, ceiling = 1.4;
  for (int trial = 0; trial < 300; ++trial) {
    Position a{0, 0, 0};
    Position b = relay::testing::random_point(rng, -1.6, -1.6, 1.6, 1.6);
    for (int k = 0; k < 60; ++k) {
      MotionLimits la(nullptr, a, dt, v), lb(nullptr, b, dt, v);
      la.add_link({b, ceiling});
      lb.add_link({a, ceiling});
      Vec3 ua{}, ub{};
      for (int tries = 0; tries < 20; ++tries) {
        const Vec3 c = random_velocity(rng, v);
        if (la.admissible(c)) {
          ua = c;
          break;
        }
      }
      for (int tries = 0; tries < 20; ++tries) {
        const Vec3 c = random_velocity(rng, v);
        if (lb.admissible(c)) {
          ub = c;
          break;
        }
      }
      const double before = distance(a, b);
      a = a + ua * dt;
      b = b + ub * dt;
      ASSERT_LE(distance(a, b), std::max(ceiling, before) + 1e-9) << "trial " << trial << " step " << k;
    }
  }
}

TEST(Rvo, TimeToCollision) {
  const RvoNeighbor head_on{{2, 0, 0}, {0, 0, 0}};
  // relative velocity 2u - current - v_n = 1 m/s toward the neighbor
  EXPECT_NEAR(time_to_collision(head_on, {0.5, 0, 0}, {0, 0, 0}, 0.5), 1.5, 1e-12);
  EXPECT_TRUE(std::isinf(time_to_collision(head_on, {-0.5, 0, 0}, {0, 0, 0}, 0.5)));
  EXPECT_TRUE(std::isinf(time_to_collision(head_on, {0, 0.5, 0}, {0, 0, 0}, 0.5)));
  const RvoNeighbor touching{{0.2, 0, 0}, {}};
  EXPECT_EQ(time_to_collision(touching, {0.5, 0, 0}, {}, 0.5), 0.0);
}

TEST(Rvo, FreeSpaceKeepsPreference) {
  const Vec3 pref{0.5, 0, 0};
  const Vec3 u = rvo_select(pref, {}, {}, 0.5, RvoParams{});
  EXPECT_NEAR(u.x, 0.5, 1e-12);
  EXPECT_NEAR(u.y, 0.0, 1e-12);
  EXPECT_EQ(rvo_select(pref, {}, {}, 0.0, RvoParams{}), Vec3{});
}

TEST(Rvo, SwerveIsMirrorSymmetric) {
  const Vec3 pref{0.5, 0, 0};
  const std::vector<RvoNeighbor> above{{{1.0, 0.05, 0}, {-0.5, 0, 0}}};
  const std::vector<RvoNeighbor> below{{{1.0, -0.05, 0}, {-0.5, 0, 0}}};
  RvoParams params;
  params.r_col = 0.4;  // so only one of the two smallest swerves clears the neighbor
  const Vec3 ua = rvo_select(pref, pref, above, 0.5, params);
  const Vec3 ub = rvo_select(pref, pref, below, 0.5, params);
  EXPECT_NEAR(ua.x, ub.x, 1e-12);
  EXPECT_NEAR(ua.y, -ub.y, 1e-12);
  EXPECT_LT(ua.y, 0.0);  // steers away from the neighbor
}

TEST(Rvo, RespectsAdmissibility) {
  const Vec3 pref{0.5, 0, 0};
  const Vec3 u = rvo_select(pref, {}, {}, 0.5, RvoParams{}, [](const Vec3& c) { return c.x <= 0.0; });
  EXPECT_LE(u.x, 1e-12);
}

TEST(Election, LowestBidThenLowestId) {
  const std::vector<std::pair<RobotId, double>> bids{{4, 2.0}, {2, 2.0}, {7, 3.0}, {1, std::nan("")}};
  EXPECT_EQ(gradient_elect(bids), 2);
  EXPECT_FALSE(gradient_elect(std::span<const std::pair<RobotId, double>>{}));
}
