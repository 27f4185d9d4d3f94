// relay: run, batch and render connectivity-chain scenarios.
//
// Exit codes: 0 complete, 1 other error, 2 incomplete, 3 invalid spec,
// 4 audit abort.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "relay/scenario.hpp"

namespace fs = std::filesystem;
using namespace relay;

namespace {

constexpr int kExitComplete = 0;
constexpr int kExitOther = 1;
constexpr int kExitIncomplete = 2;
constexpr int kExitInvalid = 3;
constexpr int kExitAudit = 4;

fs::path output_root() {
  const char* env = std::getenv("RELAY_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("out");
}

fs::path output_dir(const ScenarioSpec& spec, const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  return output_root() / (spec.output.empty() ? spec.id : spec.output);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump_store(std::ostream& os, const Simulation& sim) {
  for (const auto& r : sim.robots()) {
    if (r.role == Role::Failed) continue;
    for (const auto& [key, e] : r.store.entries())
      os << sim.tick() << ',' << r.id << ',' << key << ',' << e.timestamp << ',' << e.writer << ',' << e.value.size()
         << '\n';
  }
}

int cmd_run(const std::string& file, const std::string& out, bool strict, bool dump, bool quiet) {
  ScenarioSpec spec;
  SimConfig cfg;
  try {
    spec = load_scenario(file);
    cfg = build_sim(spec);
  } catch (const SpecError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ConfigError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitInvalid;
  }
  cfg.strict_audit = strict;
  const fs::path dir = output_dir(spec, out);
  fs::create_directories(dir);

  std::optional<Simulation> sim;
  try {
    sim.emplace(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitInvalid;
  }
  std::ofstream store_log;
  if (dump) {
    store_log.open(dir / "stigmergy.csv", std::ios::binary);
    store_log << "tick,robot,key,timestamp,writer,bytes\n";
  }
  try {
    while (sim->tick() < cfg.tick_budget && !sim->done()) {
      sim->step();
      if (dump) dump_store(store_log, *sim);
    }
  } catch (const AuditAbort& e) {
    sim->write_artifacts(dir.string());
    std::ofstream(dir / "abort.txt", std::ios::binary) << e.what() << "\n" << e.snapshot();
    std::cerr << "audit abort: " << e.what() << "\n";
    return kExitAudit;
  }
  sim->write_artifacts(dir.string());
  const auto& m = sim->metrics();
  if (!quiet) {
    std::cout << "scenario " << spec.id << " seed " << spec.seed << ": " << (m.complete ? "complete" : "incomplete")
              << " after " << m.ticks << " ticks";
    if (m.complete) std::cout << ", time factor " << m.overall_time_factor();
    std::cout << "\nartifacts in " << dir.string() << "\n";
  }
  return m.complete ? kExitComplete : kExitIncomplete;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return xs[lo] + (xs[hi] - xs[lo]) * (pos - static_cast<double>(lo));
}

std::string num(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string value_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int cmd_batch(const std::string& file, int reps, std::optional<std::uint64_t> seed, const std::string& axis,
              std::vector<double> values, const std::string& out) {
  ScenarioSpec base;
  try {
    base = load_scenario(file);
  } catch (const SpecError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitInvalid;
  }
  if (reps < 1) {
    std::cerr << "--reps must be >= 1\n";
    return kExitInvalid;
  }
  const std::uint64_t first = seed.value_or(base.seed);
  // No --sweep: the scenario's own sweep, if any. "none" turns it off.
  std::string sweep = axis.empty() ? base.sweep_axis : axis;
  if (sweep == "none") sweep.clear();
  const auto axes = sweep_axes();
  if (!sweep.empty() && std::ranges::find(axes, sweep) == axes.end()) {
    std::cerr << "unknown sweep axis '" << sweep << "'\n";
    return kExitInvalid;
  }
  if (!sweep.empty() && values.empty() && sweep == base.sweep_axis) values = base.sweep_values;
  if (!sweep.empty() && values.empty()) {
    std::cerr << "sweep axis '" << sweep << "' has no values (set sweep.values or --values)\n";
    return kExitInvalid;
  }
  if (sweep.empty()) values = {std::numeric_limits<double>::quiet_NaN()};

  const fs::path dir = out.empty() ? output_root() / ((base.output.empty() ? base.id : base.output) + "_batch") : fs::path(out);
  fs::create_directories(dir);
  std::ofstream summary(dir / "summary.csv", std::ios::binary);
  summary << "scenario,axis,value,runs,complete,time_factor_median,time_factor_iqr,recovery_median,recovery_iqr,"
             "completion_s_median\n";

  for (double v : values) {
    ScenarioSpec spec = base;
    try {
      if (!sweep.empty()) apply_sweep(spec, sweep, v);
    } catch (const SpecError& e) {
      std::cerr << e.what() << "\n";
      return kExitInvalid;
    }
    const std::string label = sweep.empty() ? "runs" : sweep + "_" + value_label(v);
    std::ofstream runs(dir / ("batch_" + label + ".csv"), std::ios::binary);
    runs << kMetricsHeader << "\n";
    std::vector<double> tf, rec, secs;
    int complete = 0;
    for (int i = 0; i < reps; ++i) {
      spec.seed = first + static_cast<std::uint64_t>(i);
      SimConfig cfg;
      try {
        cfg = build_sim(spec);
        Simulation sim(cfg);
        const auto& m = sim.run();
        runs << metrics_row(m) << "\n";
        if (m.complete) {
          ++complete;
          tf.push_back(m.overall_time_factor());
          secs.push_back(m.completion_seconds());
        }
        for (const auto& h : m.heals)
          if (h.recovered_tick >= 0) rec.push_back(static_cast<double>(h.recovery_ticks()) * m.dt);
      } catch (const SpecError& e) {
        std::cerr << "invalid scenario (seed " << spec.seed << "): " << e.what() << "\n";
        return kExitInvalid;
      } catch (const ConfigError& e) {
        std::cerr << "invalid scenario (seed " << spec.seed << "): " << e.what() << "\n";
        return kExitInvalid;
      }
    }
    summary << spec.id << ',' << (sweep.empty() ? "none" : sweep) << ',' << (sweep.empty() ? "NA" : value_label(v))
            << ',' << reps << ',' << complete << ',' << num(quantile(tf, 0.5)) << ','
            << num(quantile(tf, 0.75) - quantile(tf, 0.25)) << ',' << num(quantile(rec, 0.5)) << ','
            << num(quantile(rec, 0.75) - quantile(rec, 0.25)) << ',' << num(quantile(secs, 0.5)) << "\n";
    std::cout << label << ": " << complete << "/" << reps << " complete, median time factor "
              << num(quantile(tf, 0.5)) << "\n";
  }
  std::cout << "summary in " << (dir / "summary.csv").string() << "\n";
  return kExitComplete;
}

int cmd_render(const std::string& csv, std::optional<Tick> tick, const std::string& scenario, const std::string& map_file,
               double resolution, int layers, const std::string& out) {
  std::vector<TrajRow> rows;
  try {
    rows = parse_trajectory_csv(read_file(csv));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitOther;
  }
  if (rows.empty()) {
    std::cerr << "trajectory is empty\n";
    return kExitOther;
  }
  std::optional<GridMap> map;
  RenderOptions opt;
  try {
    if (!scenario.empty()) {
      const auto spec = load_scenario(scenario);
      map = build_map(spec);
      opt.targets = spec.targets;
      opt.safe_radius = spec.radio.safe;
    } else if (!map_file.empty()) {
      map = load_map(map_file, resolution, layers);
    } else {
      std::cerr << "render needs --scenario or --map\n";
      return kExitInvalid;
    }
  } catch (const std::exception& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitInvalid;
  }
  Tick last = 0;
  for (const auto& r : rows) last = std::max(last, r.tick);
  const Tick t = tick.value_or(last);
  std::string svg;
  try {
    svg = render_svg(*map, rows, t, opt);
  } catch (const std::out_of_range& e) {
    std::cerr << e.what() << " (last tick " << last << ")\n";
    return kExitOther;
  }
  const fs::path target =
      out.empty() ? fs::path(fs::path(csv).replace_extension("").string() + "_" + std::to_string(t) + ".svg") : fs::path(out);
  std::ofstream(target, std::ios::binary) << svg;
  std::cout << target.string() << "\n";
  return kExitComplete;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relay: connectivity-chain simulator"};
  app.require_subcommand(1);

  std::string run_file, run_out;
  bool strict = false, dump = false, quiet = false;
  auto* run = app.add_subcommand("run", "Run one scenario and write artifacts");
  run->add_option("spec", run_file, "Scenario file")->required();
  run->add_option("--out", run_out, "Output directory (default $RELAY_OUTPUT_ROOT/<id>)");
  run->add_flag("--strict-audit", strict, "Abort on the first audit violation");
  run->add_flag("--dump-messages", dump, "Write every replica's stigmergy state per tick");
  run->add_flag("--quiet", quiet, "No summary on stdout");

  std::string batch_file, batch_out, axis;
  int reps = 1;
  std::optional<std::uint64_t> seed;
  std::vector<double> values;
  auto* batch = app.add_subcommand("batch", "Seeded repetitions with an optional sweep");
  batch->add_option("spec", batch_file, "Scenario file")->required();
  batch->add_option("--reps", reps, "Repetitions per sweep value")->check(CLI::PositiveNumber);
  batch->add_option("--seed", seed, "First seed (default: the scenario seed)");
  batch->add_option("--sweep", axis, "Sweep axis: failure_count, fraction, links, flying, p, or none (default: the scenario's sweep)");
  batch->add_option("--values", values, "Sweep values (default: the scenario's sweep.values)")->delimiter(',');
  batch->add_option("--out", batch_out, "Output directory");

  std::string csv, scenario, map_file, render_out;
  std::optional<Tick> tick;
  double resolution = 1.0;
  int layers = 3;
  auto* render = app.add_subcommand("render", "Render a trajectory CSV to SVG");
  render->add_option("csv", csv, "trajectory.csv")->required();
  render->add_option("--tick", tick, "Tick to draw (default: last)");
  render->add_option("--scenario", scenario, "Scenario file providing the map");
  render->add_option("--map", map_file, "Map file");
  render->add_option("--resolution", resolution, "Map resolution (m per cell)");
  render->add_option("--layers", layers, "Map layers");
  render->add_option("--out", render_out, "SVG file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitOther;
  }

  try {
    if (*run) return cmd_run(run_file, run_out, strict, dump, quiet);
    if (*batch) return cmd_batch(batch_file, reps, seed, axis, values, batch_out);
    if (*render) return cmd_render(csv, tick, scenario, map_file, resolution, layers, render_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
