#include "relay/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace relay {

std::string_view to_string(FailurePlan::Mode m) {
  switch (m) {
    case FailurePlan::Mode::None:
      return "none";
    case FailurePlan::Mode::Scripted:
      return "scripted";
    case FailurePlan::Mode::Random:
      return "random";
    case FailurePlan::Mode::Consecutive:
      return "consecutive";
  }
  return "?";
}

void FailurePlan::validate() const {
  if (fraction < 0 || fraction > 1) throw ConfigError("failures: fraction must be in [0, 1]");
  if (p < 0 || p > 1) throw ConfigError("failures: p must be in [0, 1]");
  if (mode == Mode::Consecutive) {
    if (count < 1) throw ConfigError("failures: count must be >= 1");
    if (start_depth < 1) throw ConfigError("failures: start_depth must be >= 1");
    if (delay < 0) throw ConfigError("failures: delay must be non-negative");
  }
  for (const auto& s : scripted)
    if (s.tick < 0) throw ConfigError("failures: scripted tick must be non-negative");
}

double Metrics::overall_time_factor() const {
  double worst = 0.0;
  for (std::size_t c = 0; c < completion_tick.size(); ++c) {
    if (completion_tick[c] < 0 || c >= time_factor.size()) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, time_factor[c]);
  }
  return completion_tick.empty() ? std::numeric_limits<double>::quiet_NaN() : worst;
}

double Metrics::completion_seconds() const {
  Tick worst = 0;
  for (Tick t : completion_tick) {
    if (t < 0) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, t);
  }
  return static_cast<double>(worst) * dt;
}

namespace {

std::string fmt(double v, int prec = 4) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ';';
    out += f(xs[i]);
  }
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Simulation::Simulation(SimConfig cfg)
    : cfg_(std::move(cfg)),
      delivery_rng_(derive_seed(cfg_.seed, "delivery")),
      failure_rng_(derive_seed(cfg_.seed, "failures")) {
  if (!cfg_.map) throw ConfigError("simulation: map missing");
  cfg_.radio.validate();
  cfg_.control.validate(cfg_.radio);
  cfg_.failures.validate();
  const auto& map = *cfg_.map;
  const auto n = cfg_.robots.size();
  if (n == 0) throw ConfigError("simulation: roster is empty");
  if (cfg_.mission.targets.empty()) throw ConfigError("simulation: no targets");
  if (cfg_.mission.links < 1) throw ConfigError("simulation: links must be >= 1");
  if (cfg_.mission.root_mode == RootMode::Fixed &&
      (cfg_.mission.root < 0 || static_cast<std::size_t>(cfg_.mission.root) >= n))
    throw ConfigError("simulation: root id outside the roster");
  for (const auto& t : cfg_.mission.targets)
    if (!map.is_free(t)) throw ConfigError("simulation: target inside an obstacle");
  if (!map.is_free(cfg_.mission.anchor)) throw ConfigError("simulation: anchor inside an obstacle");
  if (cfg_.tick_budget < 1) throw ConfigError("simulation: tick budget must be >= 1");

  if (cfg_.astar_only)
    planner_ = std::make_unique<AStarPlanner>(cfg_.planner.smooth);
  else
    planner_ = std::make_unique<FallbackPlanner>(cfg_.planner);

  const std::size_t max_value = std::min<std::size_t>(448, cfg_.radio.mtu > 64 ? cfg_.radio.mtu - 64 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = cfg_.robots[i].position;
    if (cfg_.robots[i].kind == RobotKind::Ground) p.z = 0.0;
    if (!map.is_free(p)) throw ConfigError("simulation: robot " + std::to_string(i) + " spawns inside an obstacle");
    robots_.push_back(make_robot(static_cast<RobotId>(i), cfg_.robots[i].kind, p, max_value));
  }
  outboxes_.resize(n);
  commands_.resize(n);

  metrics_.scenario_id = cfg_.scenario_id;
  metrics_.seed = cfg_.seed;
  metrics_.dt = cfg_.control.dt;
  const auto chains = static_cast<std::size_t>(cfg_.mission.chains());
  metrics_.completion_tick.assign(chains, -1);
  metrics_.traversal_time.assign(chains, std::numeric_limits<double>::quiet_NaN());
  metrics_.time_factor.assign(chains, std::numeric_limits<double>::quiet_NaN());
  record();
}

RobotId Simulation::root() const {
  if (cfg_.mission.root_mode == RootMode::Fixed) return cfg_.mission.root;
  for (const auto& r : robots_)
    if (r.role == Role::Root) return r.id;
  return kNoRobot;
}

int Simulation::alive_count() const {
  return static_cast<int>(std::count_if(robots_.begin(), robots_.end(), [](const auto& r) { return r.role != Role::Failed; }));
}

void Simulation::fail(RobotId id) { apply_failures({id}); }

void Simulation::teleport(RobotId id, const Position& p) { robot(id).position = p; }

void Simulation::apply_failures(std::vector<RobotId> ids) {
  HealEvent ev;
  ev.failure_tick = tick_;
  std::set<int> chains;
  for (RobotId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= robots_.size()) continue;
    auto& r = robots_[static_cast<std::size_t>(id)];
    if (r.role == Role::Failed) continue;
    if ((r.role == Role::Worker || r.role == Role::Networker) && r.chain >= 0) chains.insert(r.chain);
    r.role = Role::Failed;
    r.velocity = {};
    outboxes_[static_cast<std::size_t>(id)].clear();
    commands_[static_cast<std::size_t>(id)] = {};
    ++metrics_.failed;
    ev.robots.push_back(id);
    events_.push_back({tick_, id, "failed", ""});
  }
  if (ev.robots.empty()) return;
  last_failure_tick_ = tick_;
  ev.chains.assign(chains.begin(), chains.end());
  if (!ev.chains.empty()) metrics_.heals.push_back(std::move(ev));
}

void Simulation::schedule_failures() {
  const auto& fp = cfg_.failures;
  if (fp.mode == FailurePlan::Mode::Scripted) {
    for (const auto& s : fp.scripted)
      if (s.tick == tick_) apply_failures(s.robots);
  }
  if (fp.mode == FailurePlan::Mode::Consecutive && !consecutive_done_ && consecutive_at_ >= 0 &&
      consecutive_at_ <= tick_) {
    // Wait for a settled chain if it is mid-insertion.
    const auto members = chain_members(0);
    if (!chain_complete(0) || static_cast<int>(members.size()) < fp.start_depth - 1 + fp.count) return;
    std::vector<RobotId> ids;
    for (int k = 0; k < fp.count; ++k) {
      const std::size_t idx = static_cast<std::size_t>(fp.start_depth - 1 + k);
      if (idx < members.size()) ids.push_back(members[idx]);
    }
    consecutive_done_ = true;
    apply_failures(ids);
  }
}

void Simulation::random_failures() {
  const auto& fp = cfg_.failures;
  const int cap = static_cast<int>(std::floor(fp.fraction * static_cast<double>(robots_.size()) + 1e-9));
  if (metrics_.failed >= cap) return;
  const RobotId r0 = root();
  std::vector<RobotId> ids;
  for (const auto& r : robots_) {
    if (r.role == Role::Failed || r.id == r0) continue;
    if (metrics_.failed + static_cast<int>(ids.size()) >= cap) break;
    if (failure_rng_.bernoulli(fp.p)) ids.push_back(r.id);
  }
  if (!ids.empty()) apply_failures(ids);
}

void Simulation::step() {
  schedule_failures();
  const std::size_t n = robots_.size();
  std::vector<Position> positions(n);
  auto alive = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) {
    positions[i] = robots_[i].position;
    alive[i] = robots_[i].role != Role::Failed;
  }
  auto inboxes = deliver(outboxes_, positions, std::span<const bool>(alive.get(), n), cfg_.radio, delivery_rng_);

  TickContext ctx;
  ctx.tick = tick_;
  ctx.map = cfg_.map.get();
  ctx.radio = &cfg_.radio;
  ctx.control = &cfg_.control;
  ctx.mission = &cfg_.mission;
  ctx.planner = planner_.get();
  ctx.events = &events_;
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) {
      outboxes_[i].clear();
      commands_[i] = {};
      continue;
    }
    auto out = robot_tick(robots_[i], inboxes[i], ctx);
    metrics_.messages += out.outbox.size();
    for (const auto& e : out.outbox) metrics_.bytes += e.payload ? e.payload->size() : 0;
    outboxes_[i] = std::move(out.outbox);
    commands_[i] = out.command;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) continue;
    Vec3 delta = commands_[i] * cfg_.control.dt;
    if (robots_[i].kind == RobotKind::Ground) delta.z = 0.0;
    robots_[i].position = clamp_motion(*cfg_.map, robots_[i].position, delta);
  }
  if (cfg_.failures.mode == FailurePlan::Mode::Random) random_failures();
  ++tick_;

  const auto found = audit();
  update_completion();
  record();
  if (cfg_.strict_audit && !found.empty()) {
    const auto& v = found.front();
    throw AuditAbort("audit violation at tick " + std::to_string(v.tick) + ": " + v.kind + " " + v.detail,
                     describe_state());
  }
}

bool Simulation::mutual(RobotId parent, RobotId child) const {
  if (parent < 0 || child < 0) return false;
  const auto& c = robots_[static_cast<std::size_t>(child)];
  const auto& p = robots_[static_cast<std::size_t>(parent)];
  if (c.parent != parent || p.role == Role::Failed || c.role == Role::Failed) return false;
  if (p.role == Role::Root) {
    const auto it = p.root_chains.find(c.chain);
    return it != p.root_chains.end() && it->second.child == child;
  }
  return p.child == child && p.chain == c.chain;
}

std::vector<AuditViolation> Simulation::audit() {
  std::vector<AuditViolation> found;
  std::set<std::string> anomalies;
  double max_link = 0.0;
  std::map<int, int> workers;
  int roots = 0;
  for (const auto& r : robots_) {
    if (r.role == Role::Failed) continue;
    if (r.role == Role::Root) ++roots;
    if (r.kind == RobotKind::Ground && r.position.z != 0.0)
      found.push_back({tick_, "ground", r.id, kNoRobot, r.position.z, "ground robot above z = 0"});
    if (!cfg_.map->is_free(r.position))
      found.push_back({tick_, "obstacle", r.id, kNoRobot, 0.0, "robot inside a blocked cell"});
    if (r.role != Role::Worker && r.role != Role::Networker) continue;
    if (r.role == Role::Worker && !r.temporary) ++workers[r.chain];
    if (mutual(r.parent, r.id)) {
      const double d = distance(r.position, robots_[static_cast<std::size_t>(r.parent)].position);
      max_link = std::max(max_link, d);
      if (d > cfg_.radio.breakaway + 1e-9)
        found.push_back({tick_, "link", r.parent, r.id, d, "link longer than d_b"});
    }
    // Parent pointers must never loop.
    std::set<RobotId> seen{r.id};
    RobotId x = r.parent;
    while (x != kNoRobot) {
      if (!seen.insert(x).second) {
        anomalies.insert("cycle/" + std::to_string(r.id));
        break;
      }
      const auto& rx = robots_[static_cast<std::size_t>(x)];
      if (rx.role != Role::Worker && rx.role != Role::Networker) break;
      x = rx.parent;
    }
  }
  if (roots > 1) anomalies.insert("roots");
  for (const auto& [chain, count] : workers)
    if (count > 1) anomalies.insert("workers/" + std::to_string(chain));

  for (const auto& key : anomalies) {
    const Tick since = anomalies_.emplace(key, tick_).first->second;
    if (tick_ - since == cfg_.audit_grace) found.push_back({tick_, "structure", kNoRobot, kNoRobot, 0.0, key});
  }
  std::erase_if(anomalies_, [&](const auto& kv) { return !anomalies.contains(kv.first); });

  metrics_.max_link.push_back(max_link);
  for (const auto& v : found) {
    if (v.kind == "link")
      ++metrics_.link_violations;
    else
      ++metrics_.other_violations;
    violations_.push_back(v);
  }
  return found;
}

std::vector<RobotId> Simulation::chain_members(int chain) const {
  std::vector<RobotId> out;
  const RobotId r0 = root();
  if (r0 == kNoRobot) return out;
  const auto& root_state = robots_[static_cast<std::size_t>(r0)];
  if (root_state.role != Role::Root) return out;
  const auto it = root_state.root_chains.find(chain);
  if (it == root_state.root_chains.end()) return out;
  RobotId prev = r0;
  RobotId x = it->second.child;
  std::set<RobotId> seen;
  while (x != kNoRobot && seen.insert(x).second) {
    const auto& rx = robots_[static_cast<std::size_t>(x)];
    if ((rx.role != Role::Worker && rx.role != Role::Networker) || rx.chain != chain || rx.parent != prev) break;
    out.push_back(x);
    prev = x;
    x = rx.child;
  }
  return out;
}

bool Simulation::chain_complete(int chain) const {
  const auto members = chain_members(chain);
  if (members.empty()) return false;
  const auto& last = robots_[static_cast<std::size_t>(members.back())];
  if (last.role != Role::Worker || last.temporary || last.child != kNoRobot) return false;
  const auto& target =
      cfg_.mission.targets[static_cast<std::size_t>(cfg_.mission.target_of(chain))];
  if (distance(last.position, target) > cfg_.control.tolerance(cfg_.radio)) return false;
  const double limit = cfg_.radio.safe + cfg_.completion_slack;
  Position prev = robots_[static_cast<std::size_t>(root())].position;
  for (RobotId id : members) {
    const auto& p = robots_[static_cast<std::size_t>(id)].position;
    if (distance(prev, p) > limit) return false;
    prev = p;
  }
  return true;
}

bool Simulation::all_complete() const {
  for (int c = 0; c < cfg_.mission.chains(); ++c)
    if (!chain_complete(c)) return false;
  return true;
}

void Simulation::update_completion() {
  bool all = true;
  std::vector<bool> done(static_cast<std::size_t>(cfg_.mission.chains()));
  for (int c = 0; c < cfg_.mission.chains(); ++c) {
    done[static_cast<std::size_t>(c)] = chain_complete(c);
    all = all && done[static_cast<std::size_t>(c)];
    auto& first = metrics_.completion_tick[static_cast<std::size_t>(c)];
    if (!done[static_cast<std::size_t>(c)] || first >= 0) continue;
    first = tick_;
    double len = 0.0;
    std::uint64_t best_ts = 0;
    for (const auto& r : robots_) {
      const auto* e = r.store.peek(path_key(c));
      if (!e || e->timestamp < best_ts) continue;
      try {
        len = PathTuple::decode(e->value, *cfg_.map).path.length();
        best_ts = e->timestamp;
      } catch (const std::exception&) {
      }
    }
    const double traversal = len / cfg_.control.v_max;
    metrics_.traversal_time[static_cast<std::size_t>(c)] = traversal;
    metrics_.time_factor[static_cast<std::size_t>(c)] =
        traversal > 0 ? static_cast<double>(tick_) * cfg_.control.dt / traversal
                      : std::numeric_limits<double>::quiet_NaN();
  }
  for (auto& h : metrics_.heals) {
    if (h.recovered_tick >= 0 || h.failure_tick >= tick_) continue;
    bool ok = true;
    for (int c : h.chains) ok = ok && done[static_cast<std::size_t>(c)];
    if (ok) h.recovered_tick = tick_;
  }
  if (all && !completed_once_) {
    completed_once_ = true;
    double worst = 0.0;
    for (int c = 0; c < cfg_.mission.chains(); ++c) {
      RobotId prev = root();
      for (RobotId id : chain_members(c)) {
        worst = std::max(worst, distance(robots_[static_cast<std::size_t>(prev)].position,
                                         robots_[static_cast<std::size_t>(id)].position));
        prev = id;
      }
    }
    metrics_.max_link_at_completion = worst;
    if (cfg_.failures.mode == FailurePlan::Mode::Consecutive)
      consecutive_at_ = tick_ + cfg_.control.ticks(cfg_.failures.delay);
  }
  metrics_.complete = all;
  metrics_.ticks = tick_;
  std::uint64_t parked = 0;
  for (const auto& r : robots_) parked += r.parked;
  metrics_.parked_requests = parked;
}

bool Simulation::done() const {
  if (!cfg_.stop_on_complete || !metrics_.complete) return false;
  const auto& fp = cfg_.failures;
  switch (fp.mode) {
    case FailurePlan::Mode::Consecutive:
      return consecutive_done_ && std::all_of(metrics_.heals.begin(), metrics_.heals.end(),
                                              [](const HealEvent& h) { return h.recovered_tick >= 0; });
    case FailurePlan::Mode::Scripted:
      for (const auto& s : fp.scripted)
        if (s.tick >= tick_) return false;
      return std::all_of(metrics_.heals.begin(), metrics_.heals.end(),
                         [](const HealEvent& h) { return h.recovered_tick >= 0; });
    default:
      return true;
  }
}

const Metrics& Simulation::run() {
  while (tick_ < cfg_.tick_budget && !done()) step();
  return metrics_;
}

std::vector<TrajRow> Simulation::snapshot_rows() const {
  std::vector<TrajRow> rows;
  rows.reserve(robots_.size());
  for (std::size_t i = 0; i < robots_.size(); ++i) {
    const auto& r = robots_[i];
    rows.push_back({tick_, r.id, r.position, std::string(to_string(r.role)), r.chain, r.parent, r.child,
                    commands_[i].norm()});
  }
  return rows;
}

void Simulation::record() {
  if (!cfg_.record_trajectory) return;
  auto rows = snapshot_rows();
  trajectory_.insert(trajectory_.end(), rows.begin(), rows.end());
}

std::string Simulation::describe_state() const {
  std::ostringstream os;
  os << "tick " << tick_ << "\n";
  for (const auto& r : robots_) {
    os << "robot " << r.id << " " << to_string(r.kind) << " " << to_string(r.role) << " chain=" << r.chain
       << " depth=" << r.depth << " parent=" << r.parent << " child=" << r.child << " pos=(" << fmt(r.position.x)
       << "," << fmt(r.position.y) << "," << fmt(r.position.z) << ")" << (r.temporary ? " temporary" : "") << "\n";
  }
  return os.str();
}

std::string Simulation::render_final() const {
  RenderOptions opt;
  opt.targets = cfg_.mission.targets;
  opt.safe_radius = cfg_.radio.safe;
  if (cfg_.record_trajectory && !trajectory_.empty()) return render_svg(*cfg_.map, trajectory_, tick_, opt);
  return render_svg(*cfg_.map, snapshot_rows(), tick_, opt);
}

void Simulation::write_artifacts(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream f(base / "metrics.csv", std::ios::binary);
    f << kMetricsHeader << "\n" << metrics_row(metrics_) << "\n";
  }
  {
    std::ofstream f(base / "trajectory.csv", std::ios::binary);
    f << trajectory_csv(cfg_.record_trajectory ? trajectory_ : snapshot_rows());
  }
  {
    std::ofstream f(base / "decisions.csv", std::ios::binary);
    f << decisions_csv(events_);
  }
  {
    std::ofstream f(base / "final.svg", std::ios::binary);
    f << render_final();
  }
}

// ---- CSV ----

std::string trajectory_csv(const std::vector<TrajRow>& rows) {
  std::string out = std::string(kTrajectoryHeader) + "\n";
  out.reserve(rows.size() * 64);
  for (const auto& r : rows) {
    out += std::to_string(r.tick) + ',' + std::to_string(r.robot) + ',' + fmt(r.pos.x) + ',' + fmt(r.pos.y) + ',' +
           fmt(r.pos.z) + ',' + r.role + ',' + std::to_string(r.chain) + ',' + std::to_string(r.parent) + ',' +
           std::to_string(r.child) + ',' + fmt(r.speed) + '\n';
  }
  return out;
}

std::vector<TrajRow> parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trajectory: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTrajectoryHeader)
    throw std::runtime_error("trajectory: column mismatch (expected '" + std::string(kTrajectoryHeader) +
                             "'); file written by another tool version?");
  std::vector<TrajRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw std::runtime_error("trajectory: line " + std::to_string(lineno) + " has wrong column count");
    try {
      TrajRow r;
      r.tick = std::stoll(f[0]);
      r.robot = std::stoi(f[1]);
      r.pos = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
      r.role = f[5];
      r.chain = std::stoi(f[6]);
      r.parent = std::stoi(f[7]);
      r.child = std::stoi(f[8]);
      r.speed = std::stod(f[9]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error("trajectory: line " + std::to_string(lineno) + " is malformed");
    }
  }
  return rows;
}

std::string metrics_row(const Metrics& m) {
  std::vector<Tick> recovery;
  for (const auto& h : m.heals) recovery.push_back(h.recovery_ticks());
  std::ostringstream os;
  os << csv_escape(m.scenario_id) << ',' << m.seed << ',' << (m.complete ? 1 : 0) << ',' << m.ticks << ','
     << join(m.completion_tick, [](Tick t) { return std::to_string(t); }) << ',' << fmt(m.overall_time_factor())
     << ',' << join(m.time_factor, [](double v) { return fmt(v); }) << ',' << m.heals.size() << ','
     << join(recovery, [](Tick t) { return std::to_string(t); }) << ',' << m.messages << ',' << m.bytes << ','
     << m.failed << ',' << m.link_violations << ',' << m.other_violations << ',' << m.parked_requests;
  return os.str();
}

std::string decisions_csv(const std::vector<DecisionEvent>& events) {
  std::string out = "tick,robot,event,detail\n";
  for (const auto& e : events)
    out += std::to_string(e.tick) + ',' + std::to_string(e.robot) + ',' + csv_escape(e.event) + ',' +
           csv_escape(e.detail) + '\n';
  return out;
}

// ---- SVG ----

namespace {

const char* role_color(const std::string& role) {
  if (role == "root") return "#111111";
  if (role == "worker") return "#d62728";
  if (role == "networker") return "#1f77b4";
  if (role == "failed") return "#7f7f7f";
  return "#bcbd22";
}

}  // namespace

std::string render_svg(const GridMap& map, const std::vector<TrajRow>& rows, Tick tick, const RenderOptions& opt) {
  const bool present = std::any_of(rows.begin(), rows.end(), [&](const TrajRow& r) { return r.tick == tick; });
  if (!present) throw std::out_of_range("render: tick " + std::to_string(tick) + " is not in the trajectory log");
  const double s = opt.scale;
  const double w = map.width_m() * s;
  const double h = map.height_m() * s;
  auto X = [&](double x) { return fmt(x * s, 2); };
  auto Y = [&](double y) { return fmt(h - y * s, 2); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w, 0) << "\" height=\"" << fmt(h, 0)
     << "\" viewBox=\"0 0 " << fmt(w, 0) << ' ' << fmt(h, 0) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  const double r = map.resolution();
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.passable({x, y, 0})) continue;
      bool open_above = false;
      for (int l = 1; l < map.layers(); ++l) open_above = open_above || map.passable({x, y, l});
      const char* fill = open_above ? "#b0b0b0" : "#404040";
      os << "<rect class=\"obstacle\" x=\"" << X(x * r) << "\" y=\"" << Y((y + 1) * r) << "\" width=\"" << fmt(r * s, 2)
         << "\" height=\"" << fmt(r * s, 2) << "\" fill=\"" << fill << "\"/>\n";
    }
  }

  std::map<RobotId, std::vector<const TrajRow*>> history;
  std::map<RobotId, const TrajRow*> now;
  for (const auto& row : rows) {
    if (row.tick > tick) continue;
    history[row.robot].push_back(&row);
    if (row.tick == tick) now[row.robot] = &row;
  }
  for (const auto& [id, hist] : history) {
    if (hist.size() < 2) continue;
    os << "<polyline class=\"trail\" fill=\"none\" stroke=\"#1f77b4\" stroke-opacity=\"0.25\" stroke-width=\"1\" points=\"";
    for (const auto* p : hist) os << X(p->pos.x) << ',' << Y(p->pos.y) << ' ';
    os << "\"/>\n";
  }
  for (const auto& [id, row] : now) {
    if (row->role == "networker" || row->role == "worker" || row->role == "root")
      os << "<circle class=\"safe\" cx=\"" << X(row->pos.x) << "\" cy=\"" << Y(row->pos.y) << "\" r=\"" << fmt(opt.safe_radius * s, 2)
         << "\" fill=\"#2ca02c\" fill-opacity=\"0.06\" stroke=\"#2ca02c\" stroke-opacity=\"0.4\"/>\n";
  }
  for (const auto& [id, row] : now) {
    if (row->parent == kNoRobot) continue;
    const auto it = now.find(row->parent);
    if (it == now.end()) continue;
    os << "<line class=\"edge\" x1=\"" << X(it->second->pos.x) << "\" y1=\"" << Y(it->second->pos.y) << "\" x2=\"" << X(row->pos.x)
       << "\" y2=\"" << Y(row->pos.y) << "\" stroke=\"#111111\" stroke-width=\"2\"/>\n";
  }
  for (const auto& t : opt.targets)
    os << "<rect class=\"target\" x=\"" << X(t.x - 0.2) << "\" y=\"" << Y(t.y + 0.2) << "\" width=\"" << fmt(0.4 * s, 2)
       << "\" height=\"" << fmt(0.4 * s, 2) << "\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\"/>\n";
  for (const auto& [id, hist] : history) {
    const auto* first = hist.front();
    os << "<circle class=\"start\" cx=\"" << X(first->pos.x) << "\" cy=\"" << Y(first->pos.y)
       << "\" r=\"4\" fill=\"none\" stroke=\"#555555\"/>\n";
  }
  for (const auto& [id, row] : now) {
    os << "<circle class=\"robot\" cx=\"" << X(row->pos.x) << "\" cy=\"" << Y(row->pos.y) << "\" r=\"5\" fill=\"" << role_color(row->role)
       << "\"><title>robot " << id << " " << row->role << "</title></circle>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace relay
