#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "relay/codec.hpp"
#include "relay/geometry.hpp"
#include "relay/stigmergy.hpp"

namespace relay {

enum class RobotKind : std::uint8_t { Ground = 0, Flying = 1 };
enum class Role : std::uint8_t { Root = 0, Worker = 1, Networker = 2, Free = 3, Failed = 4 };
// Kind requirement carried by recruitment requests.
enum class KindReq : std::uint8_t { Any = 0, Ground = 1, Flying = 2 };

std::string_view to_string(RobotKind k);
std::string_view to_string(Role r);

// Periodic chain-link broadcast. `window` holds up to 2k+1 consecutive chain
// ids centered on the sender (kNoRobot where the chain ends).
struct StatusMsg {
  enum Flag : std::uint8_t {
    kTemporary = 1,  // worker role held while a broken link heals
    kAtTarget = 2,
    kClaim = 4,      // sender asserts parent/child as listed (join or re-link)
    kSearching = 8,  // lost its parent, retracting toward the root side
    kStalled = 16,   // ground robot parked at the end of the ground prefix
    kPending = 32,   // free robot holding a join offer
    kRooted = 64,    // unbroken parent links lead back to the root
  };

  RobotId id = kNoRobot;
  RobotKind kind = RobotKind::Ground;
  Role role = Role::Free;
  std::uint8_t flags = 0;
  Position position{};
  int chain = -1;
  int depth = 0;
  RobotId parent = kNoRobot;
  RobotId child = kNoRobot;
  std::uint32_t plan_version = 0;
  std::vector<RobotId> window;
  std::vector<std::pair<int, RobotId>> root_children;  // root only: chain -> first member

  bool has(Flag f) const { return (flags & f) != 0; }
};

// Asks the chain for one more member. Forwarded parent-ward hop by hop.
struct RecruitMsg {
  RobotId to = kNoRobot;
  RobotId requester = kNoRobot;
  int chain = -1;
  std::uint32_t seq = 0;
  KindReq kind = KindReq::Any;
  RobotId insert_parent = kNoRobot;  // kNoRobot: insert next to the root
  bool as_worker = false;            // joiner takes over the worker role
  Position where{};                  // insert_parent's position when asked
};

// Root's offer to a free robot: join chain `chain` directly below `insert_parent`.
struct OfferMsg {
  RobotId to = kNoRobot;
  RobotId from = kNoRobot;
  int chain = -1;
  RobotId insert_parent = kNoRobot;
  bool as_worker = false;
  std::uint32_t seq = 0;
  Position where{};  // last known position of insert_parent
};

using Message = std::variant<StatusMsg, StigMessage, RecruitMsg, OfferMsg>;

inline constexpr std::uint8_t kWireVersion = 1;

// Frame layout: version u8, type u8, body length u16, body.
Bytes encode_message(const Message& m);
// Throws DecodeError on any malformed frame.
Message decode_message(std::span<const std::uint8_t> frame);
// One-line human readable rendering for debug dumps.
std::string describe(const Message& m);

}  // namespace relay
