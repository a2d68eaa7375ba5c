#include "shardjoin/result.hpp"

#include <string>

#include "shardjoin/relation.hpp"

namespace shardjoin {

void ResultLayout::encode(std::byte* dst, std::span<const std::byte> r_tuple,
                          std::span<const std::byte> s_tuple, NodeId source) const {
  std::memcpy(dst, r_tuple.data(), kKeyBytes);
  std::memcpy(dst + 8, s_tuple.data(), kKeyBytes);
  store_le<std::uint32_t>(dst + 16, source);
  if (payload_size > 0) {
    std::memcpy(dst + kKeysOnlySize, r_tuple.data() + kKeyBytes, payload_size);
    std::memcpy(dst + kKeysOnlySize + payload_size, s_tuple.data() + kKeyBytes, payload_size);
  }
}

void ResultLayout::encode(std::byte* dst, const ResultEntry& e) const {
  store_le<Key>(dst, e.r_key);
  store_le<Key>(dst + 8, e.s_key);
  store_le<std::uint32_t>(dst + 16, e.source);
  if (payload_size > 0) {
    if (e.r_payload.size() != payload_size || e.s_payload.size() != payload_size) {
      throw FormatError("result entry payload does not match layout");
    }
    std::memcpy(dst + kKeysOnlySize, e.r_payload.data(), payload_size);
    std::memcpy(dst + kKeysOnlySize + payload_size, e.s_payload.data(), payload_size);
  }
}

ResultEntry ResultLayout::decode(const std::byte* src) const {
  ResultEntry e;
  e.r_key = load_le<Key>(src);
  e.s_key = load_le<Key>(src + 8);
  e.source = load_le<std::uint32_t>(src + 16);
  if (payload_size > 0) {
    e.r_payload.assign(src + kKeysOnlySize, src + kKeysOnlySize + payload_size);
    e.s_payload.assign(src + kKeysOnlySize + payload_size, src + kKeysOnlySize + 2 * payload_size);
  }
  return e;
}

ResultBlock::ResultBlock(std::uint32_t capacity, std::uint32_t entry_size)
    : capacity_(capacity), entry_size_(entry_size) {
  if (entry_size == 0 || entry_size > capacity) {
    throw ConfigError("result entry of " + std::to_string(entry_size) +
                      " bytes does not fit a page of " + std::to_string(capacity));
  }
  bytes_.reserve(capacity);
}

std::byte* ResultBlock::append_slot() {
  const std::size_t offset = bytes_.size();
  bytes_.resize(offset + entry_size_);
  return bytes_.data() + offset;
}

void ResultBlock::append_packed(std::span<const std::byte> entries) {
  if (entries.size() % entry_size_ != 0 || bytes_.size() + entries.size() > capacity_) {
    throw FormatError("packed entries do not fit result block");
  }
  bytes_.insert(bytes_.end(), entries.begin(), entries.end());
}

ResultList::ResultList(ResultList&& other) noexcept {
  std::lock_guard lock(other.mutex_);
  layout_ = other.layout_;
  blocks_ = std::move(other.blocks_);
  entries_ = other.entries_;
  other.entries_ = 0;
}

ResultList& ResultList::operator=(ResultList&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    layout_ = other.layout_;
    blocks_ = std::move(other.blocks_);
    entries_ = other.entries_;
    other.entries_ = 0;
  }
  return *this;
}

void ResultList::merge_block(ResultBlock block) {
  if (block.empty()) {
    throw std::logic_error("merge of an empty result block");
  }
  std::lock_guard lock(mutex_);
  entries_ += block.entry_count();
  blocks_.push_back(std::move(block));
}

std::size_t ResultList::block_count() const {
  std::lock_guard lock(mutex_);
  return blocks_.size();
}

std::size_t ResultList::entry_count() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::vector<ResultBlock> ResultList::blocks() const {
  std::lock_guard lock(mutex_);
  return blocks_;
}

std::vector<ResultEntry> ResultList::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<ResultEntry> out;
  out.reserve(entries_);
  for (const auto& b : blocks_) {
    for (std::size_t i = 0; i < b.entry_count(); ++i) {
      out.push_back(layout_.decode(b.bytes().data() + i * b.entry_size()));
    }
  }
  return out;
}

LocalBuffer::LocalBuffer(std::uint32_t owner_thread, std::uint32_t page_size, ResultLayout layout,
                         ResultList& sink)
    : owner_(owner_thread),
      page_size_(page_size),
      layout_(layout),
      list_(sink),
      block_(page_size, layout.entry_size) {}

void LocalBuffer::add(std::span<const std::byte> r_tuple, std::span<const std::byte> s_tuple,
                      NodeId source) {
  layout_.encode(block_.append_slot(), r_tuple, s_tuple, source);
  ++produced_;
  if (block_.full()) {
    list_.merge_block(std::exchange(block_, ResultBlock(page_size_, layout_.entry_size)));
  }
}

void LocalBuffer::flush() {
  if (!block_.empty()) {
    list_.merge_block(std::exchange(block_, ResultBlock(page_size_, layout_.entry_size)));
  }
}

std::vector<ResultEntry> decode_block(const ResultBlock& block, const ResultLayout& layout) {
  std::vector<ResultEntry> out;
  out.reserve(block.entry_count());
  for (std::size_t i = 0; i < block.entry_count(); ++i) {
    out.push_back(layout.decode(block.bytes().data() + i * block.entry_size()));
  }
  return out;
}

} // namespace shardjoin
