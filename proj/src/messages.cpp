#include "relay/messages.hpp"

#include <sstream>

namespace relay {

std::string_view to_string(RobotKind k) { return k == RobotKind::Ground ? "ground" : "flying"; }

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Root:
      return "root";
    case Role::Worker:
      return "worker";
    case Role::Networker:
      return "networker";
    case Role::Free:
      return "free";
    case Role::Failed:
      return "failed";
  }
  return "?";
}

namespace {

enum class MsgType : std::uint8_t { Status = 1, Stig = 2, Recruit = 3, Offer = 4 };

void write_position(ByteWriter& w, const Position& p) {
  w.f32(static_cast<float>(p.x));
  w.f32(static_cast<float>(p.y));
  w.f32(static_cast<float>(p.z));
}

Position read_position(ByteReader& r) {
  const double x = r.f32();
  const double y = r.f32();
  const double z = r.f32();
  return {x, y, z};
}

void write_body(ByteWriter& w, const StatusMsg& s) {
  w.i16(static_cast<std::int16_t>(s.id));
  w.u8(static_cast<std::uint8_t>(s.kind));
  w.u8(static_cast<std::uint8_t>(s.role));
  w.u8(s.flags);
  write_position(w, s.position);
  w.i16(static_cast<std::int16_t>(s.chain));
  w.u16(static_cast<std::uint16_t>(s.depth));
  w.i16(static_cast<std::int16_t>(s.parent));
  w.i16(static_cast<std::int16_t>(s.child));
  w.u32(s.plan_version);
  w.u8(static_cast<std::uint8_t>(s.window.size()));
  for (auto id : s.window) w.i16(static_cast<std::int16_t>(id));
  w.u8(static_cast<std::uint8_t>(s.root_children.size()));
  for (auto [c, id] : s.root_children) {
    w.i16(static_cast<std::int16_t>(c));
    w.i16(static_cast<std::int16_t>(id));
  }
}

StatusMsg read_status(ByteReader& r) {
  StatusMsg s;
  s.id = r.i16();
  const auto kind = r.u8();
  const auto role = r.u8();
  if (kind > 1 || role > 4) throw DecodeError("bad status enum");
  s.kind = static_cast<RobotKind>(kind);
  s.role = static_cast<Role>(role);
  s.flags = r.u8();
  s.position = read_position(r);
  s.chain = r.i16();
  s.depth = r.u16();
  s.parent = r.i16();
  s.child = r.i16();
  s.plan_version = r.u32();
  const auto nw = r.u8();
  for (int i = 0; i < nw; ++i) s.window.push_back(r.i16());
  const auto nc = r.u8();
  for (int i = 0; i < nc; ++i) {
    const int c = r.i16();
    const RobotId id = r.i16();
    s.root_children.emplace_back(c, id);
  }
  return s;
}

void write_body(ByteWriter& w, const RecruitMsg& m) {
  w.i16(static_cast<std::int16_t>(m.to));
  w.i16(static_cast<std::int16_t>(m.requester));
  w.i16(static_cast<std::int16_t>(m.chain));
  w.u32(m.seq);
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.i16(static_cast<std::int16_t>(m.insert_parent));
  w.u8(m.as_worker ? 1 : 0);
  write_position(w, m.where);
}

RecruitMsg read_recruit(ByteReader& r) {
  RecruitMsg m;
  m.to = r.i16();
  m.requester = r.i16();
  m.chain = r.i16();
  m.seq = r.u32();
  const auto k = r.u8();
  if (k > 2) throw DecodeError("bad kind requirement");
  m.kind = static_cast<KindReq>(k);
  m.insert_parent = r.i16();
  m.as_worker = r.u8() != 0;
  m.where = read_position(r);
  return m;
}

void write_body(ByteWriter& w, const OfferMsg& m) {
  w.i16(static_cast<std::int16_t>(m.to));
  w.i16(static_cast<std::int16_t>(m.from));
  w.i16(static_cast<std::int16_t>(m.chain));
  w.i16(static_cast<std::int16_t>(m.insert_parent));
  w.u8(m.as_worker ? 1 : 0);
  w.u32(m.seq);
  write_position(w, m.where);
}

OfferMsg read_offer(ByteReader& r) {
  OfferMsg m;
  m.to = r.i16();
  m.from = r.i16();
  m.chain = r.i16();
  m.insert_parent = r.i16();
  m.as_worker = r.u8() != 0;
  m.seq = r.u32();
  m.where = read_position(r);
  return m;
}

}  // namespace

Bytes encode_message(const Message& m) {
  ByteWriter body;
  MsgType type{};
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, StatusMsg>) {
          type = MsgType::Status;
          write_body(body, v);
        } else if constexpr (std::is_same_v<T, StigMessage>) {
          type = MsgType::Stig;
          const auto b = v.encode();
          for (auto byte : b) body.u8(byte);
        } else if constexpr (std::is_same_v<T, RecruitMsg>) {
          type = MsgType::Recruit;
          write_body(body, v);
        } else {
          type = MsgType::Offer;
          write_body(body, v);
        }
      },
      m);
  ByteWriter frame;
  frame.u8(kWireVersion);
  frame.u8(static_cast<std::uint8_t>(type));
  frame.u16(static_cast<std::uint16_t>(body.data().size()));
  auto out = frame.take();
  const auto& b = body.data();
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Message decode_message(std::span<const std::uint8_t> frame) {
  ByteReader head(frame);
  if (head.u8() != kWireVersion) throw DecodeError("unsupported wire version");
  const auto type = head.u8();
  const auto len = head.u16();
  if (head.remaining() != len) throw DecodeError("frame length mismatch");
  ByteReader r(frame.subspan(4));
  Message m;
  switch (static_cast<MsgType>(type)) {
    case MsgType::Status:
      m = read_status(r);
      break;
    case MsgType::Stig:
      m = StigMessage::decode(r);
      break;
    case MsgType::Recruit:
      m = read_recruit(r);
      break;
    case MsgType::Offer:
      m = read_offer(r);
      break;
    default:
      throw DecodeError("unknown message type");
  }
  if (!r.done()) throw DecodeError("trailing bytes in frame");
  return m;
}

std::string describe(const Message& m) {
  std::ostringstream os;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, StatusMsg>) {
          os << "status id=" << v.id << " kind=" << to_string(v.kind) << " role=" << to_string(v.role)
             << " chain=" << v.chain << " depth=" << v.depth << " parent=" << v.parent << " child=" << v.child
             << " flags=" << static_cast<int>(v.flags) << " plan=" << v.plan_version << " window=[";
          for (std::size_t i = 0; i < v.window.size(); ++i) os << (i ? "," : "") << v.window[i];
          os << "]";
        } else if constexpr (std::is_same_v<T, StigMessage>) {
          os << (v.kind == StigMessage::Kind::Put ? "stig-put" : "stig-query") << " key=" << v.key
             << " ts=" << v.timestamp << " writer=" << v.writer << " bytes=" << v.value.size();
        } else if constexpr (std::is_same_v<T, RecruitMsg>) {
          os << "recruit to=" << v.to << " from=" << v.requester << " chain=" << v.chain << " seq=" << v.seq
             << " kind=" << static_cast<int>(v.kind) << " under=" << v.insert_parent << " worker=" << v.as_worker;
        } else {
          os << "offer to=" << v.to << " from=" << v.from << " chain=" << v.chain << " under=" << v.insert_parent
             << " worker=" << v.as_worker << " seq=" << v.seq;
        }
      },
      m);
  return os.str();
}

}  // namespace relay
