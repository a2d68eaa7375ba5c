#include "shardjoin/htf.hpp"

#include <string>

namespace shardjoin {
namespace {

std::string where(HtfIndex htf, BucketIndex b) {
  return "htf " + std::to_string(htf) + " bucket " + std::to_string(b);
}

} // namespace

HashTableFrame::HashTableFrame(HtfIndex index, NodeId source, TableId table,
                               std::uint32_t num_buckets, std::uint32_t tuple_size)
    : index_(index), source_(source), table_(table), tuple_size_(tuple_size), slots_(num_buckets) {
  for (auto& s : slots_) {
    s.data = TupleBlock(tuple_size);
  }
}

void HashTableFrame::make_resident(BucketIndex b, TupleBlock data, PoolLease lease) {
  if (b >= slots_.size()) {
    throw ProtocolError(where(index_, b) + ": index out of range");
  }
  Slot& slot = slots_[b];
  if (slot.state.load(std::memory_order_acquire) != SlotState::kAbsent) {
    throw ProtocolError(where(index_, b) + ": bucket delivered twice");
  }
  slot.data = std::move(data);
  slot.lease = std::move(lease);
  slot.state.store(SlotState::kResident, std::memory_order_release);
  received_.fetch_add(1);
}

const TupleBlock& HashTableFrame::bucket(BucketIndex b) const {
  if (b >= slots_.size()) {
    throw ProtocolError(where(index_, b) + ": index out of range");
  }
  const auto st = slots_[b].state.load(std::memory_order_acquire);
  if (st != SlotState::kResident) {
    throw ProtocolError(where(index_, b) + (st == SlotState::kFreed ? ": bucket already freed"
                                                                    : ": bucket never received"));
  }
  return slots_[b].data;
}

void HashTableFrame::free_bucket(BucketIndex b) {
  if (b >= slots_.size()) {
    throw ProtocolError(where(index_, b) + ": index out of range");
  }
  Slot& slot = slots_[b];
  auto expected = SlotState::kResident;
  if (!slot.state.compare_exchange_strong(expected, SlotState::kFreed, std::memory_order_acq_rel)) {
    throw ProtocolError(where(index_, b) + ": free of a bucket that is not resident");
  }
  slot.data = TupleBlock(tuple_size_);
  slot.lease.release();
  freed_count_.fetch_add(1);
}

SlotState HashTableFrame::state(BucketIndex b) const {
  return slots_.at(b).state.load(std::memory_order_acquire);
}

bool HashTableFrame::free_frame() {
  if (frame_freed_.exchange(true, std::memory_order_acq_rel)) {
    return false;
  }
  for (BucketIndex b = 0; b < slots_.size(); ++b) {
    if (slots_[b].state.load(std::memory_order_acquire) == SlotState::kResident) {
      free_bucket(b);
    }
  }
  return true;
}

HtfIndex HtfRegistry::create(NodeId source, TableId table, std::uint32_t num_buckets,
                             std::uint32_t tuple_size) {
  std::lock_guard lock(mutex_);
  const auto index = static_cast<HtfIndex>(frames_.size());
  frames_.push_back(std::make_shared<HashTableFrame>(index, source, table, num_buckets, tuple_size));
  return index;
}

std::shared_ptr<HashTableFrame> HtfRegistry::get(HtfIndex index) const {
  auto frame = find(index);
  if (!frame) {
    throw ProtocolError("unknown htf " + std::to_string(index));
  }
  if (frame->freed()) {
    throw ProtocolError("htf " + std::to_string(index) + " referenced after free");
  }
  return frame;
}

std::shared_ptr<HashTableFrame> HtfRegistry::find(HtfIndex index) const {
  std::lock_guard lock(mutex_);
  return index < frames_.size() ? frames_[index] : nullptr;
}

std::size_t HtfRegistry::size() const {
  std::lock_guard lock(mutex_);
  return frames_.size();
}

std::vector<std::shared_ptr<HashTableFrame>> HtfRegistry::all() const {
  std::lock_guard lock(mutex_);
  return frames_;
}

} // namespace shardjoin
