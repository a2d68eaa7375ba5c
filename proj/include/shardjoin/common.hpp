#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace shardjoin {

using NodeId = std::uint32_t;
using BucketIndex = std::uint32_t;
using HtfIndex = std::uint32_t;
using Key = std::uint64_t;

enum class TableId : std::uint32_t { kR = 0, kS = 1 };

inline const char* table_name(TableId t) {
  return t == TableId::kR ? "R" : "S";
}

// Diagnostic category of a failure; the CLI maps these to exit codes.
enum class ErrorCategory { kConfig, kTransport, kProtocol, kFormat, kIo, kTimeout, kInternal };

const char* category_name(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(ErrorCategory::kTransport, what) {}
};

// Connection refused: the peer's listener is not (yet) up. Retryable.
class ConnectRefused : public TransportError {
 public:
  explicit ConnectRefused(const std::string& what) : TransportError(what) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorCategory::kProtocol, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::kFormat, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& what) : Error(ErrorCategory::kTimeout, what) {}
};

// Little-endian fixed-width helpers used by every on-disk and on-wire format.
template <typename T>
inline void store_le(std::byte* dst, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<std::byte>((value >> (8 * i)) & 0xFF);
  }
}

template <typename T>
inline T load_le(const std::byte* src) {
  static_assert(std::is_unsigned_v<T>);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(std::to_integer<std::uint8_t>(src[i])) << (8 * i);
  }
  return value;
}

} // namespace shardjoin
