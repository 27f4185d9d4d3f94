#include "relay/stigmergy.hpp"

#include <algorithm>

namespace relay {

Bytes StigMessage::encode() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  w.str(key);
  w.u64(timestamp);
  w.i16(static_cast<std::int16_t>(writer));
  if (kind == Kind::Put) w.bytes(value);
  return w.take();
}

StigMessage StigMessage::decode(ByteReader& in) {
  StigMessage m;
  const auto kind = in.u8();
  if (kind != 1 && kind != 2) throw DecodeError("unknown stigmergy message kind");
  m.kind = static_cast<Kind>(kind);
  m.key = in.str();
  if (m.key.empty()) throw DecodeError("empty stigmergy key");
  m.timestamp = in.u64();
  m.writer = in.i16();
  if (m.kind == Kind::Put) m.value = in.bytes();
  return m;
}

const StigEntry& VirtualStigmergy::put(const std::string& key, Bytes value) {
  if (key.empty()) throw StigmergyError("stigmergy key must be non-empty");
  if (value.size() > max_value_)
    throw StigmergyError("stigmergy value of " + std::to_string(value.size()) + " bytes exceeds " +
                         std::to_string(max_value_));
  auto& e = entries_[key];
  e.key = key;
  e.timestamp = std::max(clock_, e.timestamp) + 1;
  e.writer = self_;
  e.value = std::move(value);
  clock_ = e.timestamp;
  queue_put(e);
  return e;
}

std::optional<Bytes> VirtualStigmergy::get(const std::string& key) {
  const auto it = entries_.find(key);
  if (queued_queries_.insert(key).second) {
    StigMessage q;
    q.kind = StigMessage::Kind::Query;
    q.key = key;
    q.timestamp = it == entries_.end() ? 0 : it->second.timestamp;
    q.writer = it == entries_.end() ? kNoRobot : it->second.writer;
    outgoing_.push_back(std::move(q));
  }
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

const StigEntry* VirtualStigmergy::peek(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void VirtualStigmergy::on_message(const StigMessage& msg) {
  clock_ = std::max(clock_, msg.timestamp);
  const auto it = entries_.find(msg.key);
  if (msg.kind == StigMessage::Kind::Query) {
    if (it != entries_.end() && newer(it->second.timestamp, it->second.writer, msg.timestamp, msg.writer))
      queue_put(it->second);
    return;
  }
  if (it == entries_.end() || newer(msg.timestamp, msg.writer, it->second.timestamp, it->second.writer)) {
    auto& e = entries_[msg.key];
    e = StigEntry{msg.key, msg.value, msg.timestamp, msg.writer};
    queue_put(e);  // rebroadcast once
    return;
  }
  if (newer(it->second.timestamp, it->second.writer, msg.timestamp, msg.writer)) {
    queue_put(it->second);  // anti-entropy: the sender is stale
  }
  // equal version: duplicate, suppressed
}

void VirtualStigmergy::queue_put(const StigEntry& e) {
  // Only the newest version of a key needs to leave this replica per flush.
  for (auto& m : outgoing_) {
    if (m.kind == StigMessage::Kind::Put && m.key == e.key) {
      m.value = e.value;
      m.timestamp = e.timestamp;
      m.writer = e.writer;
      return;
    }
  }
  outgoing_.push_back(StigMessage{StigMessage::Kind::Put, e.key, e.value, e.timestamp, e.writer});
}

std::vector<StigMessage> VirtualStigmergy::take_outgoing() {
  queued_queries_.clear();
  return std::exchange(outgoing_, {});
}

std::vector<const StigEntry*> VirtualStigmergy::with_prefix(const std::string& prefix) const {
  std::vector<const StigEntry*> out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end() && it->first.starts_with(prefix); ++it)
    out.push_back(&it->second);
  return out;
}

}  // namespace relay
