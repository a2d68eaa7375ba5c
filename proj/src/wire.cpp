#include "shardjoin/wire.hpp"

#include <algorithm>
#include <string>

namespace shardjoin {
namespace {

// Upper bound on one frame's payload; anything larger is treated as a
// corrupted header rather than an allocation request.
constexpr std::uint64_t kMaxFrameBytes = 1ULL << 32;

} // namespace

std::array<std::byte, kPreambleSize> encode_preamble(const StreamPreamble& p) {
  std::array<std::byte, kPreambleSize> out{};
  std::copy(kWireMagic.begin(), kWireMagic.end(), out.begin());
  out[4] = static_cast<std::byte>(p.kind);
  store_le<std::uint32_t>(out.data() + 5, p.sender);
  store_le<std::uint32_t>(out.data() + 9, p.table_id);
  store_le<std::uint32_t>(out.data() + 13, p.num_buckets);
  store_le<std::uint32_t>(out.data() + 17, p.record_size);
  return out;
}

StreamPreamble decode_preamble(std::span<const std::byte> bytes) {
  if (bytes.size() < kPreambleSize) {
    throw ProtocolError("short preamble");
  }
  if (!std::equal(kWireMagic.begin(), kWireMagic.end(), bytes.begin())) {
    throw ProtocolError("bad stream magic");
  }
  const auto kind = std::to_integer<std::uint8_t>(bytes[4]);
  if (kind != 1 && kind != 2) {
    throw ProtocolError("unknown stream kind " + std::to_string(kind));
  }
  StreamPreamble p;
  p.kind = static_cast<StreamKind>(kind);
  p.sender = load_le<std::uint32_t>(bytes.data() + 5);
  p.table_id = load_le<std::uint32_t>(bytes.data() + 9);
  p.num_buckets = load_le<std::uint32_t>(bytes.data() + 13);
  p.record_size = load_le<std::uint32_t>(bytes.data() + 17);
  return p;
}

std::array<std::byte, kFrameHeaderSize> encode_frame_header(const FrameHeader& h) {
  std::array<std::byte, kFrameHeaderSize> out{};
  store_le<std::uint32_t>(out.data(), h.bucket_index);
  store_le<std::uint32_t>(out.data() + 4, h.tuple_count);
  return out;
}

FrameHeader decode_frame_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kFrameHeaderSize) {
    throw ProtocolError("short frame header");
  }
  return {load_le<std::uint32_t>(bytes.data()), load_le<std::uint32_t>(bytes.data() + 4)};
}

StreamStats write_partition_section(Connection& conn, const PartitionSection& section,
                                    NodeId sender) {
  const HashTable& table = *section.table;
  StreamStats stats;
  StreamPreamble p;
  p.kind = StreamKind::kPartition;
  p.sender = sender;
  p.table_id = static_cast<std::uint32_t>(table.table_id());
  p.num_buckets = table.num_buckets();
  p.record_size = table.tuple_size();
  conn.write_all(encode_preamble(p));
  stats.framing_bytes += kPreambleSize;

  auto ship = [&](BucketIndex b) {
    const TupleBlock& bucket = table.bucket(b);
    if (bucket.empty()) {
      return;
    }
    conn.write_all(encode_frame_header({b, static_cast<std::uint32_t>(bucket.size())}));
    conn.write_all(bucket.bytes());
    stats.framing_bytes += kFrameHeaderSize;
    stats.payload_bytes += bucket.byte_size();
    ++stats.frames;
  };
  if (section.all_buckets) {
    for (BucketIndex b = 0; b < table.num_buckets(); ++b) {
      ship(b);
    }
  } else {
    for (BucketIndex b : section.buckets) {
      ship(b);
    }
  }
  conn.write_all(encode_frame_header({kTerminatorIndex, 0}));
  stats.framing_bytes += kFrameHeaderSize;
  return stats;
}

StreamStats send_partition_stream(Connection& conn, std::span<const PartitionSection> sections,
                                  NodeId sender) {
  StreamStats stats;
  for (const auto& s : sections) {
    stats += write_partition_section(conn, s, sender);
  }
  read_ack(conn);
  return stats;
}

StreamPreamble read_preamble(Connection& conn) {
  std::array<std::byte, kPreambleSize> buf{};
  conn.read_exact(buf);
  return decode_preamble(buf);
}

ReceivedSection recv_partition_section(Connection& conn, const StreamPreamble& preamble,
                                       MemoryPool& pool, HtfRegistry& registry,
                                       const BucketCallback& on_bucket,
                                       const std::vector<bool>& allowed,
                                       std::uint32_t expected_tuple_size,
                                       const FrameCallback& on_open) {
  if (preamble.kind != StreamKind::kPartition) {
    throw ProtocolError("expected a partition section");
  }
  if (preamble.table_id > 1) {
    throw ProtocolError("unknown table id " + std::to_string(preamble.table_id));
  }
  if (preamble.num_buckets == 0) {
    throw ProtocolError("partition section with zero buckets");
  }
  if (preamble.record_size < kKeyBytes ||
      (expected_tuple_size != 0 && preamble.record_size != expected_tuple_size)) {
    throw ProtocolError("tuple size " + std::to_string(preamble.record_size) +
                        " does not match the cluster's");
  }
  if (!allowed.empty() && allowed.size() != preamble.num_buckets) {
    throw ProtocolError("bucket count " + std::to_string(preamble.num_buckets) +
                        " does not match the cluster's");
  }
  const auto tuple_size = preamble.record_size;
  ReceivedSection out;
  out.htf = registry.create(preamble.sender, static_cast<TableId>(preamble.table_id),
                            preamble.num_buckets, tuple_size);
  auto frame = registry.find(out.htf);
  out.stats.framing_bytes += kPreambleSize;
  if (on_open) {
    on_open(*frame);
  }

  std::array<std::byte, kFrameHeaderSize> hbuf{};
  for (;;) {
    conn.read_exact(hbuf);
    out.stats.framing_bytes += kFrameHeaderSize;
    const FrameHeader h = decode_frame_header(hbuf);
    if (h.is_terminator()) {
      if (h.tuple_count != 0) {
        throw ProtocolError("terminator frame carries tuples");
      }
      break;
    }
    if (h.bucket_index >= preamble.num_buckets) {
      throw ProtocolError("bucket index " + std::to_string(h.bucket_index) + " out of range");
    }
    if (!allowed.empty() && !allowed[h.bucket_index]) {
      throw ProtocolError("bucket " + std::to_string(h.bucket_index) + " is not pinned to this node");
    }
    const std::uint64_t bytes = static_cast<std::uint64_t>(h.tuple_count) * tuple_size;
    if (bytes > kMaxFrameBytes) {
      throw ProtocolError("frame of " + std::to_string(bytes) + " bytes is implausible");
    }
    PoolLease lease = pool.acquire(bytes);
    TupleBlock data(tuple_size);
    data.mutable_bytes().resize(bytes);
    conn.read_exact(data.mutable_bytes());
    out.stats.payload_bytes += bytes;
    ++out.stats.frames;
    frame->add_pending();
    frame->make_resident(h.bucket_index, std::move(data), std::move(lease));
    ++out.buckets;
    on_bucket(*frame, h.bucket_index);
  }
  return out;
}

void write_ack(Connection& conn) {
  const std::byte ack[1] = {kAckByte};
  conn.write_all(ack);
}

void read_ack(Connection& conn) {
  std::byte ack[1] = {};
  conn.read_exact(ack);
  if (ack[0] != kAckByte) {
    throw ProtocolError("bad acknowledgment byte");
  }
}

StreamStats send_result_stream(Connection& conn, NodeId sender, const ResultLayout& layout,
                               std::span<const ResultBlock> blocks) {
  StreamStats stats;
  StreamPreamble p;
  p.kind = StreamKind::kResult;
  p.sender = sender;
  p.record_size = layout.entry_size;
  conn.write_all(encode_preamble(p));
  std::array<std::byte, 4> word{};
  store_le<std::uint32_t>(word.data(), static_cast<std::uint32_t>(blocks.size()));
  conn.write_all(word);
  stats.framing_bytes += kPreambleSize + 4;
  for (const auto& b : blocks) {
    if (b.entry_size() != layout.entry_size) {
      throw FormatError("result block layout mismatch");
    }
    store_le<std::uint32_t>(word.data(), static_cast<std::uint32_t>(b.entry_count()));
    conn.write_all(word);
    conn.write_all(b.bytes());
    stats.framing_bytes += 4;
    stats.payload_bytes += b.fill();
    ++stats.frames;
  }
  read_ack(conn);
  return stats;
}

std::vector<ResultBlock> recv_result_stream(Connection& conn, const StreamPreamble& preamble,
                                            StreamStats* stats) {
  if (preamble.kind != StreamKind::kResult) {
    throw ProtocolError("expected a result stream");
  }
  const auto entry_size = preamble.record_size;
  if (entry_size < ResultLayout::kKeysOnlySize) {
    throw ProtocolError("result entry size " + std::to_string(entry_size) + " too small");
  }
  StreamStats local;
  local.framing_bytes += kPreambleSize + 4;
  std::array<std::byte, 4> word{};
  conn.read_exact(word);
  const auto block_count = load_le<std::uint32_t>(word.data());
  std::vector<ResultBlock> blocks;
  for (std::uint32_t i = 0; i < block_count; ++i) {
    conn.read_exact(word);
    local.framing_bytes += 4;
    const auto entries = load_le<std::uint32_t>(word.data());
    const std::uint64_t bytes = static_cast<std::uint64_t>(entries) * entry_size;
    if (bytes > kMaxFrameBytes) {
      throw ProtocolError("result block of " + std::to_string(bytes) + " bytes is implausible");
    }
    if (entries == 0) {
      continue;
    }
    std::vector<std::byte> buf(bytes);
    conn.read_exact(buf);
    ResultBlock block(static_cast<std::uint32_t>(bytes), entry_size);
    block.append_packed(buf);
    local.payload_bytes += bytes;
    ++local.frames;
    blocks.push_back(std::move(block));
  }
  write_ack(conn);
  if (stats != nullptr) {
    *stats += local;
  }
  return blocks;
}

void BufferConnection::write_all(std::span<const std::byte> data) {
  output_.insert(output_.end(), data.begin(), data.end());
  count_written(data.size());
}

void BufferConnection::read_exact(std::span<std::byte> data) {
  if (remaining() < data.size()) {
    throw TransportError("buffer exhausted: need " + std::to_string(data.size()) + " bytes, have " +
                         std::to_string(remaining()));
  }
  std::memcpy(data.data(), input_.data() + cursor_, data.size());
  cursor_ += data.size();
  count_read(data.size());
}

} // namespace shardjoin
