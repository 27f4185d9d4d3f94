#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "relay/codec.hpp"
#include "relay/geometry.hpp"

namespace relay {

class StigmergyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StigEntry {
  std::string key;
  Bytes value;
  std::uint64_t timestamp = 0;
  RobotId writer = kNoRobot;
};

// Total order on versions: Lamport timestamp first, writer id breaks ties.
inline bool newer(std::uint64_t ts_a, RobotId w_a, std::uint64_t ts_b, RobotId w_b) {
  return std::tie(ts_a, w_a) > std::tie(ts_b, w_b);
}

struct StigMessage {
  enum class Kind : std::uint8_t { Put = 1, Query = 2 };
  Kind kind = Kind::Put;
  std::string key;
  Bytes value;  // empty for queries
  std::uint64_t timestamp = 0;
  RobotId writer = kNoRobot;

  Bytes encode() const;
  static StigMessage decode(ByteReader& in);
};

// Virtual stigmergy replica: last-writer-wins register per key, replicated
// by flooding PUTs once and repairing stale replicas on QUERY or on receipt
// of an older PUT.
class VirtualStigmergy {
 public:
  explicit VirtualStigmergy(RobotId self = kNoRobot, std::size_t max_value_bytes = 448)
      : self_(self), max_value_(max_value_bytes) {}

  // Writes locally and queues a PUT. Throws StigmergyError on an empty key
  // or an oversized value.
  const StigEntry& put(const std::string& key, Bytes value);
  // Locally newest value; also queues a QUERY so stale neighbors get repaired.
  std::optional<Bytes> get(const std::string& key);
  // Read without generating traffic.
  const StigEntry* peek(const std::string& key) const;

  void on_message(const StigMessage& msg);
  // Counts a payload that failed to decode.
  void note_malformed() { ++malformed_; }

  std::vector<StigMessage> take_outgoing();
  bool has_outgoing() const { return !outgoing_.empty(); }

  const std::map<std::string, StigEntry>& entries() const { return entries_; }
  // Keys starting with `prefix`, in key order.
  std::vector<const StigEntry*> with_prefix(const std::string& prefix) const;
  std::uint64_t clock() const { return clock_; }
  std::uint64_t malformed() const { return malformed_; }
  RobotId self() const { return self_; }

 private:
  void queue_put(const StigEntry& e);

  RobotId self_;
  std::size_t max_value_;
  std::uint64_t clock_ = 0;
  std::uint64_t malformed_ = 0;
  std::map<std::string, StigEntry> entries_;
  std::vector<StigMessage> outgoing_;
  std::set<std::string> queued_queries_;
};

}  // namespace relay
