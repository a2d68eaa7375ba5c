#pragma once

#include <memory>
#include <optional>

#include "shardjoin/common.hpp"
#include "shardjoin/config.hpp"
#include "shardjoin/transport.hpp"
#include "shardjoin/wire.hpp"

namespace shardjoin {

// Compute queue alphabet.
enum class ComputeEvent : std::uint8_t { kJoin, kJoinExit, kExit };
// Send and receive queue alphabet.
enum class CommEvent : std::uint8_t { kPartitionReady, kResultReady, kExit };

const char* event_name(ComputeEvent e);
const char* event_name(CommEvent e);

// Frame index used for the node's own R/S tables, which are not pooled.
constexpr HtfIndex kLocalFrame = 0xFFFFFFFFu;

// <type, bI, htfI, tableI>. Indexes are meaningful only for JOIN.
struct ComputeRecord {
  ComputeEvent type = ComputeEvent::kExit;
  BucketIndex bucket = 0;
  HtfIndex htf = kLocalFrame;
  TableId table = TableId::kR;

  static ComputeRecord join(BucketIndex b, HtfIndex h, TableId t) {
    return {ComputeEvent::kJoin, b, h, t};
  }
  static ComputeRecord join_exit() { return {ComputeEvent::kJoinExit, 0, kLocalFrame, TableId::kR}; }
  static ComputeRecord exit() { return {ComputeEvent::kExit, 0, kLocalFrame, TableId::kR}; }
};

// <type, IP_d, sport_d>. PARTITION_READY and RESULT_READY name a
// destination; EXIT does not.
struct SendRecord {
  CommEvent type = CommEvent::kExit;
  NodeId dest = 0;
  Endpoint dest_endpoint;
  bool dest_is_sink = false;

  static SendRecord exit() { return {}; }
};

// <type, sockD>. Data events own the accepted connection together with
// the preamble the listener already decoded from it.
struct ReceiveRecord {
  CommEvent type = CommEvent::kExit;
  std::shared_ptr<Connection> socket;
  StreamPreamble preamble;

  static ReceiveRecord exit() { return {}; }
};

} // namespace shardjoin
