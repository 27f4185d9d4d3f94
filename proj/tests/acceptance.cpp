// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: relay_acceptance [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "relay/allocation.hpp"
#include "relay/planner.hpp"
#include "relay/radio.hpp"
#include "relay/stigmergy.hpp"
#include "support.hpp"

using namespace relay;
using relay::testing::data_dir;
using relay::testing::load_bundled;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Largest consecutive distance along a chain, root first.
double max_consecutive(const Simulation& sim, int chain) {
  const auto members = sim.chain_members(chain);
  double worst = 0.0;
  Position prev = sim.robots()[static_cast<std::size_t>(sim.root())].position;
  for (RobotId id : members) {
    const Position p = sim.robots()[static_cast<std::size_t>(id)].position;
    worst = std::max(worst, distance(prev, p));
    prev = p;
  }
  return worst;
}

// 1. link model
Outcome link_model() {
  const auto t0 = std::chrono::steady_clock::now();
  RadioConfig c;
  c.range = 3.0;
  c.near_field = 0.1;
  bool ok = link_quality(0.0, c) == 1.0 && link_quality(0.0999, c) == 1.0 && link_quality(3.0, c) == 0.0 &&
            link_quality(7.0, c) == 0.0;
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double d = rng.uniform(c.near_field, c.range);
    worst = std::max(worst, std::abs(link_quality(d, c) - std::exp(-5.0 * d / c.range)));
  }
  ok = ok && worst <= 1e-12;
  const std::vector<std::pair<double, Zone>> cases{{0.0, Zone::Safe},        {1.4, Zone::Safe},
                                                   {1.4000001, Zone::Critical}, {1.6, Zone::Critical},
                                                   {1.6000001, Zone::BreakAway}, {1.8, Zone::BreakAway},
                                                   {1.8000001, Zone::OutOfRange}, {2.9, Zone::OutOfRange}};
  for (const auto& [d, z] : cases) ok = ok && classify_zone(d, c) == z;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 1.0;
  return {ok, "max abs error " + fmt("%.2e", worst) + ", " + fmt("%.3f", secs) + " s"};
}

// 2. failure-free open field
Outcome connectivity_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioSpec spec = load_bundled("open_field");
  int complete = 0;
  std::size_t link_viol = 0;
  double worst_final = 0.0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    spec.seed = seed;
    Simulation sim(build_sim(spec));
    const Metrics& m = sim.run();
    complete += m.complete ? 1 : 0;
    link_viol += m.link_violations;
    if (m.complete) worst_final = std::max(worst_final, m.max_link_at_completion);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double bound = spec.radio.safe + 0.05;
  const bool ok = link_viol == 0 && worst_final <= bound && secs < 120.0;
  return {ok, std::to_string(complete) + "/30 complete, " + std::to_string(link_viol) + " link violations, longest link at completion " +
                  fmt("%.3f", worst_final) + " m, " + fmt("%.1f", secs) + " s"};
}

// 3. inserting one networker into a settled 3-robot chain adds one d_s
Outcome proposition_one() {
  std::vector<double> growth;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = relay::testing::insertion_fixture(seed);
    ok = ok && r.settled_before && r.settled_after;
    growth.push_back(r.after - r.before);
  }
  const double d_s = RadioConfig{}.safe;
  for (double g : growth) ok = ok && std::abs(g - d_s) <= 0.05 * d_s;
  std::string detail = "growth per seed:";
  for (double g : growth) detail += " " + fmt("%.3f", g);
  return {ok, detail + " m (d_s = " + fmt("%.2f", d_s) + ")"};
}

// 4. consecutive failures
Outcome consecutive_recovery() {
  ScenarioSpec base = load_bundled("consecutive_failure");
  const double bound = base.radio.safe + 0.05;
  std::vector<double> medians;
  bool ok = true;
  int healed = 0, total = 0;
  std::size_t min_chain = 1000;
  for (int k = 1; k <= 5; ++k) {
    ScenarioSpec spec = base;
    apply_sweep(spec, "failure_count", k);
    std::vector<double> rec;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      spec.seed = seed;
      Simulation sim(build_sim(spec));
      std::size_t members_before = 0;
      while (!sim.done() && sim.tick() < spec.tick_budget) {
        if (sim.metrics().heals.empty()) members_before = sim.chain_members(0).size();
        sim.step();
      }
      const Metrics& m = sim.metrics();
      ++total;
      const bool recovered = !m.heals.empty() && std::all_of(m.heals.begin(), m.heals.end(), [](const HealEvent& h) {
        return h.recovered_tick >= 0;
      });
      const bool good = recovered && sim.all_complete() && m.link_violations == 0 && max_consecutive(sim, 0) <= bound;
      if (good) {
        ++healed;
        rec.push_back(static_cast<double>(m.heals.back().recovery_ticks()) * spec.control.dt);
      }
      ok = ok && good;
      // Networkers below the root: every member but the worker.
      min_chain = std::min(min_chain, members_before > 0 ? members_before - 1 : 0);
    }
    medians.push_back(median(rec));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) ok = ok && medians[i] >= medians[i - 1];
  ok = ok && min_chain >= 6;
  std::string detail = std::to_string(healed) + "/" + std::to_string(total) + " healed; median recovery s by k:";
  for (double m : medians) detail += " " + fmt("%.2f", m);
  return {ok, detail + "; fewest networkers before failure " + std::to_string(min_chain)};
}

// 5. random failures
Outcome random_failures() {
  ScenarioSpec base = load_bundled("random_failure");
  const std::vector<double> fs{0.0, 0.1, 0.2, 0.3, 0.5, 0.6};
  std::map<double, double> med;
  std::map<double, int> done;
  for (double f : fs) {
    ScenarioSpec spec = base;
    apply_sweep(spec, "fraction", f);
    std::vector<double> t;
    int c = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      spec.seed = seed;
      Simulation sim(build_sim(spec));
      const Metrics& m = sim.run();
      if (m.complete) {
        ++c;
        t.push_back(m.completion_seconds());
      }
    }
    med[f] = median(t);
    done[f] = c;
  }
  bool ok = true;
  for (double f : {0.0, 0.1, 0.2, 0.3}) ok = ok && done[f] == 20;
  ok = ok && med[0.3] <= 1.5 * med[0.0] && med[0.5] > med[0.0] && med[0.6] > med[0.0];
  std::string detail;
  for (double f : fs)
    detail += "F=" + fmt("%.1f", f) + " " + std::to_string(done[f]) + "/20 med " + fmt("%.2f", med[f]) + " s; ";
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 6. links built in parallel take about as long as one
Outcome multi_link_parity() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"bench_warehouse", "bench_rooms", "bench_forest"}) {
    ScenarioSpec base = load_bundled(name);
    std::map<int, double> med;
    int incomplete = 0;
    for (int links = 1; links <= 3; ++links) {
      ScenarioSpec spec = base;
      apply_sweep(spec, "links", links);
      std::vector<double> per_link;
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        spec.seed = seed;
        Simulation sim(build_sim(spec));
        const Metrics& m = sim.run();
        if (!m.complete) ++incomplete;
        for (Tick t : m.completion_tick)
          if (t >= 0) per_link.push_back(static_cast<double>(t) * spec.control.dt);
      }
      med[links] = median(per_link);
    }
    const double r2 = med[2] / med[1], r3 = med[3] / med[1];
    ok = ok && incomplete == 0 && r2 <= 1.3 && r3 <= 1.3;
    detail += std::string(name).substr(6) + " " + fmt("%.2f", r2) + "/" + fmt("%.2f", r3) + " (" +
              std::to_string(incomplete) + " incomplete); ";
  }
  detail.resize(detail.size() - 2);
  return {ok, "median per-link time vs C_n=1, C_n=2/3: " + detail};
}

// 7. wall with a window: only fliers cross
Outcome heterogeneity() {
  ScenarioSpec spec = load_bundled("wall_window");
  const GridMap map = build_map(spec);
  const bool pe_ground = check_reachable(map, spec.anchor, spec.targets.at(0), PlanMode::Ground2D);
  const bool pe_full = check_reachable(map, spec.anchor, spec.targets.at(0), PlanMode::Full3D);
  const double wall_far = (spec.map.wall->wall.x1 + 1) * spec.map.resolution;
  int complete = 0, ground_past = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.seed = seed;
    Simulation sim(build_sim(spec));
    sim.run();
    complete += sim.metrics().complete ? 1 : 0;
    for (const auto& r : sim.robots())
      if (r.position.x >= wall_far && r.kind != RobotKind::Flying) ++ground_past;
  }
  const bool ok = !pe_ground && pe_full && spec.robots.flying >= 2 && complete == 10 && ground_past == 0;
  return {ok, std::string("PE ground ") + (pe_ground ? "true" : "false") + ", " + std::to_string(complete) +
                  "/10 complete, ground robots past the wall " + std::to_string(ground_past)};
}

// 8. auction vs brute force
Outcome allocation_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(8);
  bool ok = true;
  double worst = 1.0;
  for (int i = 0; i < 200; ++i) {
    const int nr = 1 + static_cast<int>(rng.index(5)), nt = 1 + static_cast<int>(rng.index(5));
    std::vector<RobotId> ids;
    std::vector<Position> rp, tp;
    for (int r = 0; r < nr; ++r) {
      ids.push_back(r);
      rp.push_back(relay::testing::random_point(rng, 0, 0, 20, 20));
    }
    for (int t = 0; t < nt; ++t) tp.push_back(relay::testing::random_point(rng, 0, 0, 20, 20));
    const CostMatrix m = CostMatrix::euclidean(ids, rp, tp);
    const Assignment a = run_consensus(m);
    const Assignment o = optimal_oracle(m);
    const double ca = total_cost(a, m), co = total_cost(o, m);
    const bool full = a.robot_to_task.size() == std::min<std::size_t>(nr, nt);
    ok = ok && a.feasible() && full && ca <= 2.0 * co + 1e-9;
    if (co > 0) worst = std::max(worst, ca / co);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 10.0;
  return {ok, "worst cost ratio " + fmt("%.3f", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// 9. RRT* vs A*
Outcome planner_quality() {
  bool ok = true;
  std::string detail;
  for (const auto& name : relay::testing::bundled_maps()) {
    const GridMap m = load_map(data_dir() / "maps" / name, 1.0, 1);
    Rng rng(derive_seed(9, name));
    PlannerConfig cfg;
    cfg.budget = 20000;
    int good = 0, n = 0;
    while (n < 50) {
      const Position a = relay::testing::random_free_point(rng, m);
      const Position b = relay::testing::random_free_point(rng, m);
      const auto oracle = astar_oracle(m, a, b, PlanMode::Ground2D);
      if (!oracle || oracle->length() < 1.0) continue;
      ++n;
      const auto p = plan_rrt_star(m, a, b, PlanMode::Ground2D, cfg, derive_seed(9, name, static_cast<std::uint64_t>(n)));
      if (p && p->length() <= 1.5 * oracle->length()) ++good;
    }
    ok = ok && good >= 45;
    detail += name.substr(0, name.size() - 4) + " " + std::to_string(good) + "/50; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 10. flooding reaches every replica within diameter + 1 rounds
Outcome stigmergy_convergence() {
  const int n = 20;
  auto line = [&] {
    std::vector<std::set<int>> g(n);
    for (int i = 0; i + 1 < n; ++i) g[i].insert(i + 1), g[i + 1].insert(i);
    return std::pair{g, n - 1};
  };
  auto ring = [&] {
    std::vector<std::set<int>> g(n);
    for (int i = 0; i < n; ++i) g[i].insert((i + 1) % n), g[(i + 1) % n].insert(i);
    return std::pair{g, n / 2};
  };
  auto star = [&] {
    std::vector<std::set<int>> g(n);
    for (int i = 1; i < n; ++i) g[0].insert(i), g[i].insert(0);
    return std::pair{g, 2};
  };
  bool ok = true;
  std::string detail;
  for (const auto& [label, make] : std::vector<std::pair<std::string, std::function<std::pair<std::vector<std::set<int>>, int>()>>>{
           {"line", line}, {"ring", ring}, {"star", star}}) {
    const auto [g, diameter] = make();
    int worst = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      const int rounds = relay::testing::flood_rounds(g, seed);
      worst = std::max(worst, rounds);
      ok = ok && rounds >= 0 && rounds <= diameter + 1;
    }
    detail += label + " " + std::to_string(worst) + "/" + std::to_string(diameter + 1) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, "worst rounds/limit: " + detail};
}

// 11. same seed, same bytes
Outcome determinism() {
  bool ok = true;
  int checked = 0;
  for (const auto& name : relay::testing::bundled_scenarios()) {
    const ScenarioSpec spec = load_bundled(name);
    std::string traj[2], metrics[2];
    for (int i = 0; i < 2; ++i) {
      Simulation sim(build_sim(spec));
      metrics[i] = metrics_row(sim.run());
      traj[i] = trajectory_csv(sim.trajectory());
    }
    ok = ok && traj[0] == traj[1] && metrics[0] == metrics[1] && !traj[0].empty();
    ++checked;
  }
  return {ok, std::to_string(checked) + " bundled scenarios run twice"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"link model exactness", link_model},
      {"connectivity, failure-free open field", connectivity_suite},
      {"networker insertion adds d_s", proposition_one},
      {"consecutive-failure recovery", consecutive_recovery},
      {"random-failure robustness", random_failures},
      {"multi-link parity", multi_link_parity},
      {"heterogeneity, wall with window", heterogeneity},
      {"allocation quality", allocation_quality},
      {"planner quality", planner_quality},
      {"stigmergy convergence", stigmergy_convergence},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
