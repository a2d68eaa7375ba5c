#include "shardjoin/events.hpp"

namespace shardjoin {

const char* event_name(ComputeEvent e) {
  switch (e) {
    case ComputeEvent::kJoin: return "JOIN";
    case ComputeEvent::kJoinExit: return "JOIN_EXIT";
    case ComputeEvent::kExit: return "EXIT";
  }
  return "?";
}

const char* event_name(CommEvent e) {
  switch (e) {
    case CommEvent::kPartitionReady: return "PARTITION_READY";
    case CommEvent::kResultReady: return "RESULT_READY";
    case CommEvent::kExit: return "EXIT";
  }
  return "?";
}

} // namespace shardjoin
