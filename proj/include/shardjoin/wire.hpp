#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "shardjoin/htf.hpp"
#include "shardjoin/relation.hpp"
#include "shardjoin/result.hpp"
#include "shardjoin/transport.hpp"

namespace shardjoin {

// Stream layout (all integers little-endian, fixed width):
//
//   preamble      "SJW1" | kind u8 | sender u32 | table_id u32 |
//                 num_buckets u32 | record_size u32              (21 bytes)
//   partition     preamble(kind=1, record_size=tuple_size)
//                 { bucket_index u32 | tuple_count u32 | tuples }*
//                 terminator (bucket_index=0xFFFFFFFF, tuple_count=0)
//   result        preamble(kind=2, table_id=0, num_buckets=0,
//                 record_size=entry_size)
//                 block_count u32 { entry_count u32 | entries }*
//
// A partition connection carries one section per shuffled table (R only
// under broadcast, R then S under hash distribution). After the last
// section the receiver writes one acknowledgment byte and the sender
// closes.

constexpr std::array<std::byte, 4> kWireMagic = {std::byte{'S'}, std::byte{'J'}, std::byte{'W'},
                                                 std::byte{'1'}};
constexpr std::size_t kPreambleSize = 21;
constexpr std::size_t kFrameHeaderSize = 8;
constexpr BucketIndex kTerminatorIndex = 0xFFFFFFFFu;
constexpr std::byte kAckByte{0x06};

enum class StreamKind : std::uint8_t { kPartition = 1, kResult = 2 };

struct StreamPreamble {
  StreamKind kind = StreamKind::kPartition;
  NodeId sender = 0;
  std::uint32_t table_id = 0;
  std::uint32_t num_buckets = 0;
  std::uint32_t record_size = 0;

  bool operator==(const StreamPreamble&) const = default;
};

struct FrameHeader {
  BucketIndex bucket_index = 0;
  std::uint32_t tuple_count = 0;

  bool is_terminator() const { return bucket_index == kTerminatorIndex; }
  bool operator==(const FrameHeader&) const = default;
};

std::array<std::byte, kPreambleSize> encode_preamble(const StreamPreamble& p);
// Throws ProtocolError on bad magic or unknown kind.
StreamPreamble decode_preamble(std::span<const std::byte> bytes);
std::array<std::byte, kFrameHeaderSize> encode_frame_header(const FrameHeader& h);
FrameHeader decode_frame_header(std::span<const std::byte> bytes);

// Byte accounting for one stream. Payload is tuple (or result entry)
// bytes; everything else is framing.
struct StreamStats {
  std::uint64_t payload_bytes = 0;
  std::uint64_t framing_bytes = 0;
  std::uint64_t frames = 0;

  std::uint64_t total() const { return payload_bytes + framing_bytes; }
  StreamStats& operator+=(const StreamStats& o) {
    payload_bytes += o.payload_bytes;
    framing_bytes += o.framing_bytes;
    frames += o.frames;
    return *this;
  }
};

// One table's worth of buckets to ship. Empty `buckets` means every bucket.
struct PartitionSection {
  const HashTable* table = nullptr;
  std::vector<BucketIndex> buckets;
  bool all_buckets = true;
};

// Writes preamble, one frame per non-empty selected bucket, terminator.
StreamStats write_partition_section(Connection& conn, const PartitionSection& section,
                                    NodeId sender);

// Writes every section, then blocks for the receiver's acknowledgment.
StreamStats send_partition_stream(Connection& conn, std::span<const PartitionSection> sections,
                                  NodeId sender);

StreamPreamble read_preamble(Connection& conn);

// Called once per materialized bucket, before the next frame is read.
using BucketCallback = std::function<void(HashTableFrame& frame, BucketIndex bucket)>;
// Called once when the section's frame is registered, before any bucket.
using FrameCallback = std::function<void(HashTableFrame& frame)>;

struct ReceivedSection {
  HtfIndex htf = 0;
  std::uint64_t buckets = 0;
  StreamStats stats;
};

// Reads the frames of one section whose preamble is already decoded into a
// fresh frame. Bucket bytes are leased from `pool` (blocking while it is
// exhausted). `on_bucket` runs after each bucket becomes resident. If
// `allowed` is non-empty, a bucket outside it is a protocol error.
ReceivedSection recv_partition_section(Connection& conn, const StreamPreamble& preamble,
                                       MemoryPool& pool, HtfRegistry& registry,
                                       const BucketCallback& on_bucket,
                                       const std::vector<bool>& allowed = {},
                                       std::uint32_t expected_tuple_size = 0,
                                       const FrameCallback& on_open = {});

void write_ack(Connection& conn);
void read_ack(Connection& conn);

StreamStats send_result_stream(Connection& conn, NodeId sender, const ResultLayout& layout,
                               std::span<const ResultBlock> blocks);
// Preamble already read. Blocks are rebuilt with capacity equal to their fill.
std::vector<ResultBlock> recv_result_stream(Connection& conn, const StreamPreamble& preamble,
                                            StreamStats* stats = nullptr);

// In-memory connection backed by byte vectors: writes append to `output`,
// reads consume `input`. For codec tests and pure encoders.
class BufferConnection final : public Connection {
 public:
  BufferConnection() = default;
  explicit BufferConnection(std::vector<std::byte> input) : input_(std::move(input)) {}

  void write_all(std::span<const std::byte> data) override;
  void read_exact(std::span<std::byte> data) override;
  void close_write() override {}
  void shutdown() override {}

  const std::vector<std::byte>& output() const { return output_; }
  std::size_t remaining() const { return input_.size() - cursor_; }

 private:
  std::vector<std::byte> input_;
  std::size_t cursor_ = 0;
  std::vector<std::byte> output_;
};

} // namespace shardjoin
