#include "relay/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "relay/allocation.hpp"
#include "relay/rng.hpp"

namespace relay {

std::string path_key(int chain) { return "path/" + std::to_string(chain); }
std::string worker_key(int chain) { return "worker/" + std::to_string(chain); }

RobotState make_robot(RobotId id, RobotKind kind, const Position& where, std::size_t max_value_bytes) {
  RobotState s;
  s.id = id;
  s.kind = kind;
  s.position = where;
  if (kind == RobotKind::Ground) s.position.z = 0.0;
  s.store = VirtualStigmergy(id, max_value_bytes);
  return s;
}

namespace {

constexpr double kTrackSpacing = 0.25;
constexpr double kNoCost = 1e12;

struct Inputs {
  std::vector<RecruitMsg> recruits;
  std::vector<OfferMsg> offers;
};

void log(const TickContext& ctx, const RobotState& s, std::string event, std::string detail = {}) {
  if (ctx.events) ctx.events->push_back({ctx.tick, s.id, std::move(event), std::move(detail)});
}

const StatusMsg* latest(const RobotState& s, RobotId id) {
  const auto it = s.heard.find(id);
  return it == s.heard.end() ? nullptr : &it->second;
}

// Status received during this tick.
const StatusMsg* fresh(const RobotState& s, RobotId id, Tick tick) {
  const auto* n = s.neighbors.find(id);
  if (!n || n->last_heard != tick) return nullptr;
  return latest(s, id);
}

RobotId child_of(const StatusMsg& st, int chain) {
  if (st.role == Role::Root) {
    for (auto [c, id] : st.root_children)
      if (c == chain) return id;
    return kNoRobot;
  }
  return st.chain == chain ? st.child : kNoRobot;
}

bool is_member(Role r) { return r == Role::Worker || r == Role::Networker; }

// ---- small stigmergy value codecs ----

Bytes encode_id(RobotId id) {
  ByteWriter w;
  w.i16(static_cast<std::int16_t>(id));
  return w.take();
}

std::optional<RobotId> decode_id(const StigEntry* e) {
  if (!e) return std::nullopt;
  try {
    ByteReader r(e->value);
    const RobotId id = r.i16();
    return id;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

struct RootInfo {
  RobotId id = kNoRobot;
  Position pos{};
  Tick origin = 0;
};

Bytes encode_root(const RootInfo& info) {
  ByteWriter w;
  w.i16(static_cast<std::int16_t>(info.id));
  w.f64(info.pos.x);
  w.f64(info.pos.y);
  w.f64(info.pos.z);
  w.u64(static_cast<std::uint64_t>(info.origin));
  return w.take();
}

std::optional<RootInfo> decode_root(const StigEntry* e) {
  if (!e) return std::nullopt;
  try {
    ByteReader r(e->value);
    RootInfo info;
    info.id = r.i16();
    const double x = r.f64();
    const double y = r.f64();
    const double z = r.f64();
    info.pos = {x, y, z};
    info.origin = static_cast<Tick>(r.u64());
    return info;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

void send(RobotState& s, Message m) { s.outgoing.push_back(std::move(m)); }

void reset_worker_state(RobotState& s) {
  s.request_depth = -1;
  s.request_tick = -1;
  s.request_first = -1;
  s.switch_out = false;
  s.wp_version = 0;
  s.wp_depth = 0;
  s.done_put = false;
  s.at_target = false;
  s.stalled = false;
}

void become_free(RobotState& s) {
  s.role = Role::Free;
  s.chain = -1;
  s.depth = 0;
  s.parent = kNoRobot;
  s.child = kNoRobot;
  s.heal = Heal::None;
  s.temporary = false;
  s.claim = false;
  s.rooted = false;
  s.plan.reset();
  s.plan_ts = 0;
  s.arc_valid = false;
  reset_worker_state(s);
}

// ---- ingest ----

void ingest(RobotState& s, const Inbox& inbox, const TickContext& ctx, Inputs& in) {
  const auto& cc = *ctx.control;
  s.heard_now.clear();
  for (const auto& env : inbox) {
    if (!env.payload) continue;
    Message m;
    try {
      m = decode_message(*env.payload);
    } catch (const DecodeError&) {
      ++s.malformed;
      s.store.note_malformed();
      continue;
    }
    if (auto* st = std::get_if<StatusMsg>(&m)) {
      if (st->id == s.id || st->id != env.sender) continue;
      s.neighbors.observe(st->id, env.situated, ctx.tick, cc.dt);
      st->position = env.situated;
      s.heard[st->id] = std::move(*st);
      s.heard_now.push_back(env.sender);
    } else if (auto* sm = std::get_if<StigMessage>(&m)) {
      s.store.on_message(*sm);
    } else if (auto* rq = std::get_if<RecruitMsg>(&m)) {
      if (rq->to == s.id) in.recruits.push_back(*rq);
    } else if (auto* of = std::get_if<OfferMsg>(&m)) {
      if (of->to == s.id) in.offers.push_back(*of);
    }
  }
  s.neighbors.evict_older_than(ctx.tick, cc.ticks(cc.forgetting_time));
  std::erase_if(s.heard, [&](const auto& kv) { return s.neighbors.find(kv.first) == nullptr; });
  s.neighbors.refresh(s.position, *ctx.radio);
}

// ---- plan cache ----

void refresh_plan(RobotState& s, int chain, const TickContext& ctx) {
  if (chain < 0) {
    s.plan.reset();
    s.plan_ts = 0;
    return;
  }
  const auto* e = s.store.peek(path_key(chain));
  if (!e) {
    s.plan.reset();
    s.plan_ts = 0;
    return;
  }
  const std::uint64_t stamp = (e->timestamp << 16) ^ static_cast<std::uint64_t>(e->writer & 0xffff);
  if (s.plan && s.plan_ts == stamp) return;
  try {
    auto view = std::make_shared<PlanView>();
    view->tuple = PathTuple::decode(e->value, *ctx.map);
    view->full = Track(view->tuple.path, kTrackSpacing);
    view->ground = Track(view->tuple.ground, kTrackSpacing);
    const bool changed = !s.plan || s.plan->tuple.version != view->tuple.version;
    s.plan = std::move(view);
    s.plan_ts = stamp;
    if (changed) {
      s.arc_valid = false;
      s.plan_version = s.plan->tuple.version;
    }
  } catch (const std::exception&) {
    ++s.malformed;
  }
}

const Track* own_track(const RobotState& s) {
  if (!s.plan || !s.plan->tuple.path_exists) return nullptr;
  const Track& t = s.plan->for_kind(s.kind);
  return t.empty() ? nullptr : &t;
}

void ensure_arc(RobotState& s, const Track& t, const TickContext& ctx) {
  if (!s.arc_valid) {
    s.arc = t.project_visible(*ctx.map, s.position);
    s.arc_valid = true;
    return;
  }
  const double w = ctx.control->lookahead + 4 * ctx.control->v_max * ctx.control->dt + 0.5;
  s.arc = t.project(s.position, s.arc - w, s.arc + w);
}

bool compute_stalled(const RobotState& s, const TickContext& ctx) {
  if (s.kind != RobotKind::Ground || !s.plan || !s.plan->tuple.path_exists) return false;
  if (s.plan->tuple.path.mode != PlanMode::Full3D) return false;
  const double g = s.plan->ground.length();
  if (s.plan->ground.empty() || g + 1e-6 >= s.plan->full.length()) return false;
  const double tol = std::max(0.1, 0.5 * ctx.control->lookahead);
  return s.arc_valid && s.arc >= g - tol;
}

// ---- planning ----

void compute_plan(RobotState& s, const TickContext& ctx) {
  const auto& mission = *ctx.mission;
  const int tgt = mission.target_of(s.chain);
  const Position target = mission.targets[static_cast<std::size_t>(tgt)];
  const Position start = s.root_pos;
  PathTuple t;
  t.target = tgt;
  t.version = 1;
  if (const auto* e = s.store.peek(path_key(s.chain))) {
    try {
      t.version = PathTuple::decode(e->value, *ctx.map).version + 1;
    } catch (const std::exception&) {
    }
  }
  bool pe2 = false;
  bool pe3 = false;
  try {
    pe2 = check_reachable(*ctx.map, start, target, PlanMode::Ground2D);
    if (!pe2) pe3 = check_reachable(*ctx.map, start, target, PlanMode::Full3D);
  } catch (const PlannerError&) {
  }
  const PlanMode mode = pe2 ? PlanMode::Ground2D : PlanMode::Full3D;
  if (pe2 || pe3) {
    const auto seed = derive_seed(mission.seed, "plan", static_cast<std::uint64_t>(s.chain) * 65536 + t.version);
    if (auto p = ctx.planner->plan(*ctx.map, start, target, mode, seed)) {
      t.path = std::move(*p);
      t.path_exists = true;
    }
  }
  Bytes value = t.encode();
  try {
    s.store.put(path_key(s.chain), std::move(value));
  } catch (const StigmergyError&) {
    PathTuple none;
    none.target = tgt;
    none.version = t.version;
    s.store.put(path_key(s.chain), none.encode());
    t.path_exists = false;
  }
  log(ctx, s, "plan",
      std::string(t.path_exists ? "exists" : "none") + " ground_reachable=" + (pe2 ? "1" : "0") +
          " length=" + std::to_string(t.path_exists ? t.path.length() : 0.0) + " version=" + std::to_string(t.version));
}

// ---- root knowledge and election ----

void track_root(RobotState& s, const TickContext& ctx) {
  if (auto info = decode_root(s.store.peek("root"))) {
    s.root_id = info->id;
    s.root_pos = info->pos;
    s.election_origin = info->origin;
    return;
  }
  if (ctx.mission->root_mode == RootMode::Fixed) {
    s.root_id = ctx.mission->root;
    s.root_pos = ctx.mission->anchor;
    s.election_origin = 0;
  }
}

void become_root(RobotState& s, const TickContext& ctx, Tick origin) {
  s.role = Role::Root;
  s.root_id = s.id;
  s.root_pos = s.position;
  s.election_origin = origin;
  s.depth = 0;
  s.rooted = true;
  s.store.put("root", encode_root({s.id, s.position, origin}));
  for (int c = 0; c < ctx.mission->chains(); ++c) {
    RootChain rc;
    rc.childless_since = ctx.tick;
    s.root_chains.try_emplace(c, std::move(rc));
  }
  log(ctx, s, "role", "root");
}

void root_election(RobotState& s, const TickContext& ctx) {
  const auto& cc = *ctx.control;
  if (s.root_round_len == 0) s.root_round_len = cc.ticks(cc.bidding_time);
  if (s.root_wait_until >= 0) {
    if (ctx.tick <= s.root_wait_until) return;
    s.root_wait_until = -1;
    ++s.root_round;
    s.root_round_start = ctx.tick;
    log(ctx, s, "root-election-restart", "round=" + std::to_string(s.root_round));
  }
  const Tick end = s.root_round_start + s.root_round_len - 1;
  const std::string prefix = "rootbid/" + std::to_string(s.root_round) + "/";
  if (s.role == Role::Free && ctx.tick >= s.root_round_start && ctx.tick < end &&
      !s.store.peek(prefix + std::to_string(s.id))) {
    ByteWriter w;
    w.f64(distance(s.position, ctx.mission->anchor));
    s.store.put(prefix + std::to_string(s.id), w.take());
  }
  if (ctx.tick != end) return;
  std::vector<std::pair<RobotId, double>> bids;
  for (const auto* e : s.store.with_prefix(prefix)) {
    try {
      ByteReader r(e->value);
      bids.emplace_back(std::stoi(e->key.substr(prefix.size())), r.f64());
    } catch (const std::exception&) {
    }
  }
  const auto winner = gradient_elect(bids);
  if (!winner) {
    ++s.root_round;
    s.root_round_start = ctx.tick + 1;
    s.root_round_len *= 2;
    return;
  }
  if (*winner == s.id && s.role == Role::Free) {
    become_root(s, ctx, ctx.tick + 1);
    return;
  }
  s.root_wait_until = ctx.tick + cc.ticks(cc.link_failure_time) * 2;
}

// ---- worker election among free robots ----

std::vector<int> open_chains(const RobotState& s, const TickContext& ctx) {
  std::vector<int> out;
  for (int c = 0; c < ctx.mission->chains(); ++c) {
    const auto w = decode_id(s.store.peek(worker_key(c)));
    if (!w || *w == kNoRobot) out.push_back(c);
  }
  return out;
}

void worker_election(RobotState& s, const TickContext& ctx) {
  if (s.role != Role::Free || s.join || s.root_id == kNoRobot) return;
  const auto& cc = *ctx.control;
  if (ctx.tick < s.election_origin) return;
  const Tick len = cc.ticks(cc.bidding_time);
  const int round = static_cast<int>((ctx.tick - s.election_origin) / len);
  const Tick start = s.election_origin + static_cast<Tick>(round) * len;
  const Tick end = start + len - 1;
  const std::string prefix = "bid/" + std::to_string(round) + "/";

  if (s.bid_round != round && ctx.tick - start < len / 2) {
    const auto open = open_chains(s, ctx);
    if (!open.empty()) {
      ByteWriter w;
      w.u8(static_cast<std::uint8_t>(open.size()));
      for (int c : open) {
        w.i16(static_cast<std::int16_t>(c));
        w.f64(distance(s.position, ctx.mission->targets[static_cast<std::size_t>(ctx.mission->target_of(c))]));
      }
      s.store.put(prefix + std::to_string(s.id), w.take());
      s.bid_round = round;
    }
  }
  if (ctx.tick != end || s.bid_round != round) return;
  s.bid_round = -1;

  std::map<RobotId, std::map<int, double>> bids;
  std::set<int> chains;
  for (const auto* e : s.store.with_prefix(prefix)) {
    try {
      const RobotId who = std::stoi(e->key.substr(prefix.size()));
      ByteReader r(e->value);
      const int n = r.u8();
      auto& row = bids[who];
      for (int i = 0; i < n; ++i) {
        const int c = r.i16();
        row[c] = r.f64();
        chains.insert(c);
      }
    } catch (const std::exception&) {
    }
  }
  if (chains.empty()) return;
  const std::vector<int> tasks(chains.begin(), chains.end());
  CostMatrix m;
  for (const auto& [who, row] : bids) {
    m.robots.push_back(who);
    auto& costs = m.cost.emplace_back();
    for (int c : tasks) {
      const auto it = row.find(c);
      costs.push_back(it == row.end() ? kNoCost : it->second);
    }
  }
  const Assignment a = run_consensus(m);
  const auto mine = a.task_of(s.id);
  if (!mine) return;
  const int chain = tasks[static_cast<std::size_t>(*mine)];
  if (bids[s.id].find(chain) == bids[s.id].end()) return;
  const auto current = decode_id(s.store.peek(worker_key(chain)));
  if (current && *current != kNoRobot && *current != s.id) return;

  ByteWriter aw;
  aw.u8(static_cast<std::uint8_t>(a.robot_to_task.size()));
  for (const auto& [robot, task] : a.robot_to_task) {
    aw.i16(static_cast<std::int16_t>(robot));
    aw.i16(static_cast<std::int16_t>(tasks[static_cast<std::size_t>(task)]));
  }
  s.store.put("assign/" + std::to_string(round), aw.take());
  s.store.put(worker_key(chain), encode_id(s.id));
  s.join = PendingJoin{chain, kNoRobot, true, ctx.tick, true};
  log(ctx, s, "elected", "chain=" + std::to_string(chain));
}

// ---- free robot: offers and joining ----

void take_offers(RobotState& s, const Inputs& in, const TickContext& ctx) {
  for (const auto& o : in.offers) {
    if (s.join || s.bid_round >= 0) continue;
    s.join = PendingJoin{o.chain, o.insert_parent, o.as_worker, ctx.tick, false, o.where};
    log(ctx, s, "offer-accepted",
        "chain=" + std::to_string(o.chain) + " under=" + std::to_string(o.insert_parent) +
            (o.as_worker ? " worker" : ""));
  }
}

void try_join(RobotState& s, const TickContext& ctx) {
  if (!s.join) return;
  const auto& cc = *ctx.control;
  const auto& radio = *ctx.radio;
  auto j = *s.join;
  if (ctx.tick - j.since > cc.ticks(cc.join_timeout)) {
    log(ctx, s, "join-abandoned", "chain=" + std::to_string(j.chain));
    s.join.reset();
    return;
  }
  if (j.elected) {
    const auto w = decode_id(s.store.peek(worker_key(j.chain)));
    if (w && *w != s.id) {
      log(ctx, s, "join-superseded", "chain=" + std::to_string(j.chain));
      s.join.reset();
      return;
    }
  }
  const RobotId p = j.insert_parent == kNoRobot ? s.root_id : j.insert_parent;
  const StatusMsg* ps = fresh(s, p, ctx.tick);
  if (!ps) return;
  if (ps->role != Role::Root && (!is_member(ps->role) || ps->chain != j.chain)) {
    s.join.reset();
    return;
  }
  const RobotId c = child_of(*ps, j.chain);
  if (j.as_worker && c != kNoRobot) {
    log(ctx, s, "join-superseded", "chain=" + std::to_string(j.chain));
    s.join.reset();
    return;
  }
  const double reach = cc.join_fraction * radio.safe;
  if (distance(s.position, ps->position) > reach) return;
  const StatusMsg* cs = nullptr;
  if (c != kNoRobot) {
    cs = fresh(s, c, ctx.tick);
    if (!cs || distance(s.position, cs->position) > reach) return;
  }
  s.role = j.as_worker ? Role::Worker : Role::Networker;
  s.chain = j.chain;
  s.parent = p;
  s.child = c;
  s.depth = ps->depth + 1;
  s.claim = true;
  s.claim_since = ctx.tick;
  s.claim_from_free = true;
  s.parent_heard = ctx.tick;
  s.parent_pos = ps->position;
  s.rooted = ps->role == Role::Root || ps->has(StatusMsg::kRooted);
  if (cs) {
    s.child_heard = ctx.tick;
    s.child_pos = cs->position;
    s.child_role = cs->role;
    s.child_temporary = cs->has(StatusMsg::kTemporary);
  }
  s.heal = Heal::None;
  s.temporary = false;
  s.arc_valid = false;
  reset_worker_state(s);
  s.join.reset();
  log(ctx, s, "join",
      std::string(to_string(s.role)) + " chain=" + std::to_string(s.chain) + " parent=" + std::to_string(p) +
          " child=" + std::to_string(c));
}

// ---- chain members ----

void update_links(RobotState& s, const TickContext& ctx) {
  const Tick tick = ctx.tick;
  // Robots attaching below this one: joiners, re-linking fragments, or an
  // orphan whose pointer still names us.
  for (RobotId id : s.heard_now) {
    const auto& st = s.heard.at(id);
    if (!is_member(st.role) || st.chain != s.chain || st.parent != s.id || id == s.child) continue;
    if (s.child != kNoRobot && s.child != st.child) continue;
    s.child = id;
    s.child_heard = tick;
    s.child_pos = st.position;
    s.child_role = st.role;
    s.child_temporary = st.has(StatusMsg::kTemporary);
    if (s.role == Role::Worker) {
      s.role = Role::Networker;
      s.temporary = false;
      reset_worker_state(s);
      log(ctx, s, "role", "networker");
    }
    if (s.heal == Heal::Forward) s.heal = Heal::None;
    log(ctx, s, "child", std::to_string(id));
  }

  if (s.parent != kNoRobot) {
    if (const StatusMsg* ps = fresh(s, s.parent, tick)) {
      if (ps->role != Role::Root && (!is_member(ps->role) || ps->chain != s.chain)) {
        log(ctx, s, "parent-left", std::to_string(s.parent));
        s.parent = kNoRobot;
        s.heal = Heal::Backward;
        s.heal_since = tick;
        s.claim = false;
      } else {
        // A robot inserted between us: the parent lists it and it lists us.
        const RobotId pc = child_of(*ps, s.chain);
        const StatusMsg* xs = pc != kNoRobot && pc != s.id ? fresh(s, pc, tick) : nullptr;
        if (xs && is_member(xs->role) && xs->parent == s.parent && xs->child == s.id && xs->chain == s.chain) {
          s.parent = pc;
          s.parent_heard = tick;
          s.parent_pos = xs->position;
          s.depth = xs->depth + 1;
          s.rooted = xs->has(StatusMsg::kRooted);
          log(ctx, s, "parent", std::to_string(pc));
        } else {
          s.parent_heard = tick;
          s.parent_pos = ps->position;
          s.depth = ps->depth + 1;
          s.rooted = ps->role == Role::Root || ps->has(StatusMsg::kRooted);
          if (s.claim && pc == s.id) s.claim = false;
        }
      }
    }
  }
  if (s.parent == kNoRobot) s.rooted = false;

  if (s.child != kNoRobot) {
    if (const StatusMsg* cs = fresh(s, s.child, tick)) {
      if (!is_member(cs->role) || cs->chain != s.chain) {
        log(ctx, s, "child-left", std::to_string(s.child));
        s.child = kNoRobot;
        if (s.role == Role::Networker) {
          s.role = Role::Worker;
          s.temporary = true;
          if (s.heal == Heal::None) s.heal = Heal::Forward;
          s.heal_since = tick;
        }
      } else {
        s.child_heard = tick;
        s.child_pos = cs->position;
        s.child_role = cs->role;
        s.child_temporary = cs->has(StatusMsg::kTemporary);
      }
    }
  }
}

void fault_check(RobotState& s, const TickContext& ctx) {
  const auto& cc = *ctx.control;
  const Tick limit = cc.ticks(cc.link_failure_time);
  if (s.parent != kNoRobot && ctx.tick - s.parent_heard > limit) {
    log(ctx, s, "parent-lost", std::to_string(s.parent));
    s.parent = kNoRobot;
    s.rooted = false;
    s.claim = false;
    s.heal = Heal::Backward;
    s.heal_since = ctx.tick;
  }
  if (s.child != kNoRobot && ctx.tick - s.child_heard > limit) {
    const bool was_worker = s.child_role == Role::Worker && !s.child_temporary;
    log(ctx, s, "child-lost", std::to_string(s.child));
    s.child = kNoRobot;
    if (s.role == Role::Networker) {
      s.role = Role::Worker;
      s.temporary = !was_worker;
      reset_worker_state(s);
      if (s.heal == Heal::None && s.temporary) s.heal = Heal::Forward;
      s.heal_since = ctx.tick;
      log(ctx, s, "role", s.temporary ? "temporary-worker" : "worker");
    }
  }
}

void try_relink(RobotState& s, const TickContext& ctx) {
  if (s.parent != kNoRobot) return;
  const double reach = ctx.control->join_fraction * ctx.radio->safe;
  std::set<RobotId> below;
  const std::size_t k = static_cast<std::size_t>(ctx.control->window_k);
  for (std::size_t i = k + 1; i < s.window.size(); ++i) below.insert(s.window[i]);
  below.insert(s.child);
  const StatusMsg* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (RobotId id : s.heard_now) {
    const auto& st = s.heard.at(id);
    bool ok = false;
    if (st.role == Role::Root)
      ok = child_of(st, s.chain) == kNoRobot;
    else
      ok = is_member(st.role) && st.chain == s.chain && st.child == kNoRobot && st.has(StatusMsg::kRooted) &&
           !st.has(StatusMsg::kClaim) && !below.contains(id);
    if (!ok) continue;
    const double d = distance(s.position, st.position);
    if (d <= reach && d < best_d) {
      best_d = d;
      best = &st;
    }
  }
  if (!best) return;
  s.parent = best->id;
  s.parent_heard = ctx.tick;
  s.parent_pos = best->position;
  s.depth = best->depth + 1;
  s.rooted = true;
  s.claim = true;
  s.claim_since = ctx.tick;
  s.claim_from_free = false;
  s.heal = s.temporary ? Heal::Forward : Heal::None;
  log(ctx, s, "relink", "parent=" + std::to_string(best->id));
}

void claim_timeout(RobotState& s, const TickContext& ctx) {
  if (!s.claim || ctx.tick - s.claim_since <= ctx.control->ticks(ctx.control->claim_timeout)) return;
  log(ctx, s, "claim-timeout", std::to_string(s.parent));
  if (s.claim_from_free) {
    become_free(s);
    log(ctx, s, "role", "free");
    return;
  }
  s.claim = false;
  s.parent = kNoRobot;
  s.rooted = false;
  s.heal = Heal::Backward;
  s.heal_since = ctx.tick;
}

void send_recruit(RobotState& s, RecruitMsg m) {
  m.to = s.parent;
  send(s, m);
}

void worker_logic(RobotState& s, const TickContext& ctx) {
  const auto& cc = *ctx.control;
  const auto& radio = *ctx.radio;
  const Position target =
      ctx.mission->targets[static_cast<std::size_t>(ctx.mission->target_of(s.chain))];

  const bool attached = s.parent != kNoRobot && !s.claim;
  if (attached && !s.temporary && ctx.tick >= s.next_plan_tick &&
      (!s.plan || !s.plan->tuple.path_exists)) {
    compute_plan(s, ctx);
    s.next_plan_tick = ctx.tick + cc.ticks(cc.replan_interval);
    refresh_plan(s, s.chain, ctx);
  }

  s.at_target = s.parent != kNoRobot && distance(s.position, target) <= cc.tolerance(radio);
  if (s.at_target && s.temporary) {
    s.temporary = false;
    s.heal = Heal::None;
    log(ctx, s, "role", "worker");
  }
  if (s.at_target && !s.temporary && !s.done_put) {
    ByteWriter w;
    w.u64(static_cast<std::uint64_t>(ctx.tick));
    s.store.put("done/" + std::to_string(s.chain), w.take());
    s.done_put = true;
    log(ctx, s, "at-target", "chain=" + std::to_string(s.chain));
  }
  if (!attached || !s.plan || !s.plan->tuple.path_exists) return;

  if (s.stalled) {
    const bool due = !s.switch_out || ctx.tick - s.switch_tick > cc.ticks(cc.join_timeout);
    if (due && s.child == kNoRobot) {
      RecruitMsg m;
      m.requester = s.id;
      m.chain = s.chain;
      m.seq = ++s.request_seq;
      m.kind = KindReq::Flying;
      m.insert_parent = s.id;
      m.as_worker = true;
      m.where = s.position;
      send_recruit(s, m);
      s.switch_out = true;
      s.switch_tick = ctx.tick;
      log(ctx, s, "switch-request", "chain=" + std::to_string(s.chain));
    }
    return;
  }
  if (s.at_target) return;

  if (cc.wp_prediction && !s.temporary && s.plan->tuple.version != s.wp_version) {
    s.wp_version = s.plan->tuple.version;
    s.wp_depth = required_robots(s.plan->full.length(), radio.safe);
    int issued = 0;
    for (int d = s.depth; d < s.wp_depth; ++d) {
      RecruitMsg m;
      m.requester = s.id;
      m.chain = s.chain;
      m.seq = ++s.request_seq;
      send_recruit(s, m);
      ++issued;
    }
    log(ctx, s, "wp-requests", std::to_string(issued));
  }
  if (cc.wp_prediction && s.depth < s.wp_depth) return;

  if (s.request_depth != -1 && s.request_depth != s.depth) s.request_depth = -1;
  const double d_p = distance(s.position, s.parent_pos);
  if (d_p < cc.tight_fraction * radio.safe) return;
  const bool outstanding = s.request_depth == s.depth && ctx.tick - s.request_tick < cc.ticks(cc.request_timeout);
  if (outstanding) return;
  // Same seq on a resend so the root dedups it, unless the chain changed
  // under us or the first ask is long overdue.
  if (s.request_depth != s.depth || ctx.tick - s.request_first > cc.ticks(cc.join_timeout)) {
    ++s.request_seq;
    s.request_first = ctx.tick;
  }
  RecruitMsg m;
  m.requester = s.id;
  m.chain = s.chain;
  m.seq = s.request_seq;
  send_recruit(s, m);
  s.request_depth = s.depth;
  s.request_tick = ctx.tick;
}

void forward_requests(RobotState& s, const Inputs& in) {
  for (auto r : in.recruits) {
    if (r.chain != s.chain || s.parent == kNoRobot) continue;
    if (s.stalled && r.insert_parent == kNoRobot && !r.as_worker) {
      r.kind = KindReq::Flying;
      r.insert_parent = s.id;
      r.where = s.position;
    }
    send_recruit(s, r);
  }
}

void member_logic(RobotState& s, const Inputs& in, const TickContext& ctx) {
  update_links(s, ctx);
  claim_timeout(s, ctx);
  if (s.role == Role::Free) return;
  fault_check(s, ctx);
  try_relink(s, ctx);
  refresh_plan(s, s.chain, ctx);
  if (const Track* t = own_track(s)) ensure_arc(s, *t, ctx);
  s.stalled = compute_stalled(s, ctx);
  if (s.role == Role::Worker) worker_logic(s, ctx);
  forward_requests(s, in);
}

// ---- root ----

void root_logic(RobotState& s, const Inputs& in, const TickContext& ctx) {
  const auto& cc = *ctx.control;
  const auto& radio = *ctx.radio;
  const Tick tick = ctx.tick;
  const Tick fail = cc.ticks(cc.link_failure_time);
  if (!s.store.peek("root") || decode_root(s.store.peek("root"))->id != s.id)
    s.store.put("root", encode_root({s.id, s.position, s.election_origin}));
  for (int c = 0; c < ctx.mission->chains(); ++c) {
    RootChain rc;
    rc.childless_since = tick;
    s.root_chains.try_emplace(c, std::move(rc));
  }

  for (RobotId id : s.heard_now) {
    const auto& st = s.heard.at(id);
    if (!is_member(st.role) || st.parent != s.id) continue;
    auto it = s.root_chains.find(st.chain);
    if (it == s.root_chains.end()) continue;
    auto& rc = it->second;
    if (rc.child == id || (rc.child != kNoRobot && rc.child != st.child)) continue;
    rc.child = id;
    rc.child_heard = tick;
    log(ctx, s, "child", "chain=" + std::to_string(st.chain) + " id=" + std::to_string(id));
  }

  for (auto& [chain, rc] : s.root_chains) {
    if (rc.child == kNoRobot) continue;
    if (const StatusMsg* cs = fresh(s, rc.child, tick)) {
      if (!is_member(cs->role) || cs->chain != chain) {
        rc.child = kNoRobot;
        rc.childless_since = tick;
        continue;
      }
      rc.child_heard = tick;
    } else if (tick - rc.child_heard > fail) {
      log(ctx, s, "child-lost", "chain=" + std::to_string(chain) + " id=" + std::to_string(rc.child));
      rc.child = kNoRobot;
      rc.childless_since = tick;
    }
  }

  for (const auto& r : in.recruits) {
    auto it = s.root_chains.find(r.chain);
    if (it == s.root_chains.end()) continue;
    if (!it->second.seen.insert({r.requester, r.seq}).second) continue;
    it->second.queue.push_back(r);
  }

  // A worker that reached its target stops asking; whatever it asked for
  // before is stale.
  for (auto& [chain, rc] : s.root_chains) {
    const auto* e = s.store.peek("done/" + std::to_string(chain));
    if (!e || e->timestamp == rc.done_ts) continue;
    rc.done_ts = e->timestamp;
    for (const auto& r : rc.queue) rc.seen.erase({r.requester, r.seq});
    rc.queue.clear();
  }

  std::set<RobotId> busy;
  for (const auto& [chain, rc] : s.root_chains)
    if (rc.offer) busy.insert(rc.offer->robot);

  for (auto& [chain, rc] : s.root_chains) {
    if (rc.offer) {
      auto& o = *rc.offer;
      const StatusMsg* st = latest(s, o.robot);
      const auto* nb = s.neighbors.find(o.robot);
      const bool remote = o.request.insert_parent != kNoRobot && o.request.insert_parent != s.id;
      if (st && is_member(st->role) && st->chain == chain) {
        rc.offer.reset();
      } else if (remote && o.seen_pending && (!nb || tick - nb->last_heard > fail)) {
        // Out of earshot on its way to a far insertion point. Nothing more
        // to learn here; the requester asks again if it never shows up.
        busy.erase(o.robot);
        rc.offer.reset();
      } else {
        if (st && st->has(StatusMsg::kPending)) o.seen_pending = true;
        const bool declined = !o.seen_pending && tick - o.since > 10;
        const bool silent = !nb || tick - nb->last_heard > fail;
        const bool expired = tick - o.since > cc.ticks(cc.join_timeout) + fail;
        const bool gave_up = o.seen_pending && st && st->role == Role::Free && !st->has(StatusMsg::kPending);
        if (declined || silent || expired || gave_up) {
          rc.queue.push_front(o.request);
          busy.erase(o.robot);
          rc.offer.reset();
        }
      }
      if (rc.offer) continue;
    }
    if (rc.queue.empty()) continue;
    const RecruitMsg r = rc.queue.front();
    const bool root_end = r.insert_parent == kNoRobot || r.insert_parent == s.id;
    if (root_end) {
      const StatusMsg* cs = rc.child != kNoRobot ? latest(s, rc.child) : nullptr;
      if (!cs) {
        if (rc.child == kNoRobot) rc.queue.pop_front();
        continue;
      }
      if (distance(s.position, cs->position) < cc.tight_fraction * radio.safe) continue;
    }
    const StatusMsg* pick = nullptr;
    std::tuple<int, double, RobotId> best{3, 0.0, 0};
    for (const auto& [id, st] : s.heard) {
      if (st.role != Role::Free || st.has(StatusMsg::kPending) || busy.contains(id)) continue;
      const auto* nb = s.neighbors.find(id);
      if (!nb || tick - nb->last_heard > 1) continue;
      if (r.kind == KindReq::Flying && st.kind != RobotKind::Flying) continue;
      if (r.kind == KindReq::Ground && st.kind != RobotKind::Ground) continue;
      const int rank = st.kind == RobotKind::Ground ? 0 : 1;
      const std::tuple<int, double, RobotId> key{rank, distance(s.position, st.position), id};
      if (!pick || key < best) {
        best = key;
        pick = &st;
      }
    }
    if (!pick) {
      if (rc.parked.insert({r.requester, r.seq}).second) {
        ++rc.parked_count;
        ++s.parked;
        log(ctx, s, "parked", "chain=" + std::to_string(chain) + " from=" + std::to_string(r.requester));
      }
      continue;
    }
    OfferMsg o;
    o.to = pick->id;
    o.from = s.id;
    o.chain = chain;
    o.insert_parent = root_end ? s.id : r.insert_parent;
    o.as_worker = r.as_worker;
    o.seq = ++s.offer_seq;
    o.where = root_end ? s.position : r.where;
    send(s, o);
    rc.offer = PendingOffer{r, pick->id, tick, false};
    busy.insert(pick->id);
    rc.queue.pop_front();
    log(ctx, s, "offer",
        "chain=" + std::to_string(chain) + " to=" + std::to_string(pick->id) +
            " under=" + std::to_string(o.insert_parent));
  }

  // Re-open a chain whose worker vanished before it could be rebuilt.
  for (auto& [chain, rc] : s.root_chains) {
    if (rc.child != kNoRobot) continue;
    double plan_len = 0.0;
    if (const auto* e = s.store.peek(path_key(chain))) {
      try {
        plan_len = PathTuple::decode(e->value, *ctx.map).path.length();
      } catch (const std::exception&) {
      }
    }
    const Tick wait = 2 * fail + cc.ticks(1.5 * plan_len / cc.v_max);
    if (tick - rc.childless_since <= wait) continue;
    const auto w = decode_id(s.store.peek(worker_key(chain)));
    if (!w || *w == kNoRobot) continue;
    const auto* nb = s.neighbors.find(*w);
    if (nb && tick - nb->last_heard <= fail) continue;
    s.store.put(worker_key(chain), encode_id(kNoRobot));
    rc.childless_since = tick;
    log(ctx, s, "vacancy", "chain=" + std::to_string(chain));
  }
}

// ---- motion ----

Vec3 free_preference(RobotState& s, const TickContext& ctx) {
  const auto& cc = *ctx.control;
  const Position home = s.root_id != kNoRobot ? s.root_pos : ctx.mission->anchor;
  if (!s.join) {
    const Vec3 off = home - s.position;
    if (off.norm() <= cc.loiter(*ctx.radio)) return {};
    return off.normalized() * cc.v_max;
  }
  const auto& j = *s.join;
  const RobotId p = j.insert_parent == kNoRobot ? s.root_id : j.insert_parent;
  const StatusMsg* ps = latest(s, p);
  const Position pp = ps ? ps->position : j.insert_parent != kNoRobot ? j.where : home;
  const RobotId c = ps ? child_of(*ps, j.chain) : kNoRobot;
  const StatusMsg* cs = c != kNoRobot ? latest(s, c) : nullptr;
  refresh_plan(s, j.chain, ctx);
  const Track* t = own_track(s);
  Position spot = cs ? (pp + cs->position) * 0.5 : pp;
  if (t) {
    const double ap = t->project_visible(*ctx.map, pp);
    const double goal = cs ? 0.5 * (ap + t->project_visible(*ctx.map, cs->position)) : ap;
    spot = t->at(goal);
    if (distance(s.position, spot) > 3.0 || !segment_free(*ctx.map, s.position, spot)) {
      ensure_arc(s, *t, ctx);
      return u_to_arc(*t, s.arc, s.position, goal, cc.v_max, cc.lookahead, cc.dt, ctx.map);
    }
  }
  const Vec3 off = spot - s.position;
  if (off.norm() <= cc.v_max * cc.dt) return off / cc.dt;
  return off.normalized() * cc.v_max;
}

Vec3 motion(RobotState& s, const TickContext& ctx) {
  const auto& cc = *ctx.control;
  const auto& radio = *ctx.radio;
  if (s.role == Role::Root || s.role == Role::Failed) return {};
  MotionLimits limits(ctx.map, s.position, cc.dt, cc.v_max);
  Vec3 pref{};
  if (s.role == Role::Free) {
    pref = free_preference(s, ctx);
  } else {
    const Track* t = own_track(s);
    const std::optional<double> dp =
        s.parent != kNoRobot ? std::optional<double>(distance(s.position, s.parent_pos)) : std::nullopt;
    const std::optional<double> dc =
        s.child != kNoRobot ? std::optional<double>(distance(s.position, s.child_pos)) : std::nullopt;
    const bool retracting = !dp || *dp > radio.safe;
    const double ceiling = retracting ? radio.critical : radio.safe;
    if (dp) limits.add_link({s.parent_pos, ceiling});
    if (dc) limits.add_link({s.child_pos, ceiling});
    if (t) {
      const Vec3 fwd = u_path(*t, s.arc, s.position, Direction::Forward, cc.v_max, cc.lookahead, cc.dt, ctx.map);
      const Vec3 bwd = u_path(*t, s.arc, s.position, Direction::Backward, cc.v_max, cc.lookahead, cc.dt, ctx.map);
      if (!dp)
        pref = bwd;
      else if (s.role == Role::Worker && s.at_target && *dp <= radio.safe)
        pref = {};
      else
        pref = preferred_velocity({s.role, true, dp, dc, fwd, bwd, radio.safe});
    }
  }
  if (s.kind == RobotKind::Ground) pref.z = 0.0;
  // Slide the preference along walls the way the integrator would.
  pref = limits.displacement(pref) / cc.dt;

  std::vector<RvoNeighbor> close;
  for (const auto& [id, n] : s.neighbors.entries()) {
    const Vec3 off = n.position - s.position;
    if (off.norm() < cc.avoid_radius) close.push_back({off, n.velocity});
  }
  // A neighbor dead ahead makes standing still the cheapest sample. After a
  // few blocked ticks steer off to the left for a while.
  const Vec3 wanted = pref;
  if (s.sidestep_until > ctx.tick) {
    const double a = 70.0 * std::numbers::pi / 180.0;
    pref = {pref.x * std::cos(a) - pref.y * std::sin(a), pref.x * std::sin(a) + pref.y * std::cos(a), pref.z};
  }
  const double cap = pref.norm() > 0 ? limits.max_speed_along(pref) : cc.v_max;
  const RvoParams params{cc.alpha, cc.r_col, 32, 6};
  // Samples that would run into a wall are dropped so the pick slides along it.
  const auto ok = [&](const Vec3& v) {
    if (!limits.admissible(v)) return false;
    Vec3 want = v * cc.dt;
    if (s.kind == RobotKind::Ground) want.z = 0.0;
    return (limits.displacement(v) - want).norm() < 1e-9;
  };
  Vec3 u = rvo_select(pref, s.velocity, close, cap, params, ok, s.kind == RobotKind::Ground);
  if (s.kind == RobotKind::Ground) u.z = 0.0;
  const double pn = wanted.norm();
  if (pn > 0.2 * cc.v_max && cap > 0.2 * pn && u.dot(wanted) < 0.1 * pn * pn) {
    if (++s.stuck >= 5) {
      s.sidestep_until = ctx.tick + 10;
      s.stuck = 0;
    }
  } else {
    s.stuck = 0;
  }
  return u;
}

// ---- broadcast ----

std::vector<RobotId> build_window(const RobotState& s, int k) {
  std::vector<RobotId> up;
  std::vector<RobotId> down;
  if (s.parent != kNoRobot) {
    if (const StatusMsg* ps = latest(s, s.parent); ps && ps->role != Role::Root &&
                                                   ps->window.size() == static_cast<std::size_t>(2 * k + 1)) {
      for (int i = 0; i < k; ++i)
        if (ps->window[static_cast<std::size_t>(i)] != kNoRobot) up.push_back(ps->window[static_cast<std::size_t>(i)]);
    }
    up.push_back(s.parent);
  }
  if (s.child != kNoRobot) {
    down.push_back(s.child);
    if (const StatusMsg* cs = latest(s, s.child);
        cs && cs->window.size() == static_cast<std::size_t>(2 * k + 1)) {
      for (int i = k + 1; i < 2 * k + 1; ++i)
        if (cs->window[static_cast<std::size_t>(i)] != kNoRobot) down.push_back(cs->window[static_cast<std::size_t>(i)]);
    }
  }
  if (static_cast<int>(up.size()) > k) up.erase(up.begin(), up.end() - k);
  if (static_cast<int>(down.size()) > k) down.resize(static_cast<std::size_t>(k));
  std::vector<RobotId> w(static_cast<std::size_t>(2 * k + 1), kNoRobot);
  for (std::size_t i = 0; i < up.size(); ++i) w[static_cast<std::size_t>(k) - up.size() + i] = up[i];
  w[static_cast<std::size_t>(k)] = s.id;
  for (std::size_t i = 0; i < down.size(); ++i) w[static_cast<std::size_t>(k) + 1 + i] = down[i];
  return w;
}

StatusMsg make_status(const RobotState& s) {
  StatusMsg st;
  st.id = s.id;
  st.kind = s.kind;
  st.role = s.role;
  st.position = s.position;
  st.chain = s.chain;
  st.depth = s.depth;
  st.parent = s.parent;
  st.child = s.child;
  st.plan_version = s.plan_version;
  st.window = s.window;
  std::uint8_t f = 0;
  if (s.temporary) f |= StatusMsg::kTemporary;
  if (s.at_target) f |= StatusMsg::kAtTarget;
  if (s.claim) f |= StatusMsg::kClaim;
  if (is_member(s.role) && s.parent == kNoRobot) f |= StatusMsg::kSearching;
  if (s.stalled) f |= StatusMsg::kStalled;
  if (s.join) f |= StatusMsg::kPending;
  if (s.rooted || s.role == Role::Root) f |= StatusMsg::kRooted;
  st.flags = f;
  if (s.role == Role::Root)
    for (const auto& [chain, rc] : s.root_chains) st.root_children.emplace_back(chain, rc.child);
  return st;
}

void periodic_queries(RobotState& s, const TickContext& ctx) {
  const Tick q = ctx.control->ticks(ctx.control->query_period);
  if ((ctx.tick + s.id) % q != 0) return;
  if (is_member(s.role)) {
    s.store.get(path_key(s.chain));
  } else if (s.role == Role::Free) {
    if (s.join) s.store.get(path_key(s.join->chain));
    for (int c = 0; c < ctx.mission->chains(); ++c) s.store.get(worker_key(c));
    if (s.root_id == kNoRobot || ctx.mission->root_mode == RootMode::Elected) s.store.get("root");
  }
}

Outbox emit(RobotState& s, const TickContext& ctx) {
  Outbox out;
  auto push = [&](const Message& m) {
    auto bytes = std::make_shared<const Bytes>(encode_message(m));
    if (bytes->size() > ctx.radio->mtu) return;
    out.push_back(Envelope{s.id, ctx.tick, std::move(bytes), {}});
  };
  const Tick period = ctx.control->ticks(ctx.control->status_period);
  if (ctx.tick - s.last_status >= period) {
    s.window = build_window(s, ctx.control->window_k);
    push(make_status(s));
    s.last_status = ctx.tick;
  }
  for (auto& m : s.store.take_outgoing()) push(m);
  for (auto& m : s.outgoing) push(m);
  s.outgoing.clear();
  return out;
}

}  // namespace

TickOutput robot_tick(RobotState& s, const Inbox& inbox, const TickContext& ctx) {
  TickOutput out;
  if (s.role == Role::Failed) return out;
  Inputs in;
  ingest(s, inbox, ctx, in);
  track_root(s, ctx);
  if (s.root_id == kNoRobot && ctx.mission->root_mode == RootMode::Elected && s.role == Role::Free)
    root_election(s, ctx);
  if (s.role == Role::Free && ctx.mission->root_mode == RootMode::Fixed && s.id == ctx.mission->root)
    become_root(s, ctx, 0);

  switch (s.role) {
    case Role::Root:
      root_logic(s, in, ctx);
      break;
    case Role::Worker:
    case Role::Networker:
      member_logic(s, in, ctx);
      break;
    case Role::Free:
      take_offers(s, in, ctx);
      try_join(s, ctx);
      if (s.role == Role::Free) worker_election(s, ctx);
      break;
    case Role::Failed:
      break;
  }
  if (s.role == Role::Free && !s.join) s.arc_valid = false;
  periodic_queries(s, ctx);
  out.command = motion(s, ctx);
  s.velocity = out.command;
  out.outbox = emit(s, ctx);
  return out;
}

}  // namespace relay
