#pragma once

#include <cstdint>
#include <string>

#include "shardjoin/config.hpp"
#include "shardjoin/relation.hpp"

namespace shardjoin {

enum class Distribution { kUniform, kZipf, kLocality };

// Key distribution of a generated relation.
//   uniform              every key in [0, D) equally likely
//   zipf(theta)          P(key = k) proportional to 1 / (k + 1)^theta; theta 0 is uniform
//   locality(block, p)   keys come in runs from one contiguous block of the
//                        domain; each tuple moves to a random block with
//                        probability 1 - p
struct GenSpec {
  std::uint64_t seed = 1;
  std::uint64_t tuples = 400000;
  Key domain = 800000;
  std::uint32_t tuple_size = kDefaultTupleSize;
  Distribution distribution = Distribution::kUniform;
  double zipf_theta = 0.0;
  std::uint64_t block_size = 1000;
  double p_stay = 0.9;

  void validate() const;
};

std::string to_string(const GenSpec& spec);
// "uniform" | "zipf:<theta>" | "locality:<block_size>:<p_stay>"
void parse_distribution(const std::string& text, GenSpec& spec);

// Deterministic: the same (spec, table, node) always yields the same bytes.
Partition generate_partition(const GenSpec& spec, TableId table, NodeId node);

// Reads seed, tuples, domain, tuple_size and distribution keys.
GenSpec gen_spec_from_kv(const KeyValueFile& kv);

// Partition file: "SJPT" | version u32 | table_id u32 | node_id u32 |
// tuple_count u64 | tuple_size u32 | domain u64, then packed tuples.
constexpr std::uint32_t kPartitionFileVersion = 1;
constexpr std::size_t kPartitionHeaderSize = 36;

// I/O failures throw IoError; malformed contents throw FormatError.
void write_partition(const std::string& path, const Partition& partition);
Partition read_partition(const std::string& path);
std::string partition_file_name(TableId table, NodeId node);

} // namespace shardjoin
