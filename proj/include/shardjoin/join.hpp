#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shardjoin/config.hpp"
#include "shardjoin/relation.hpp"
#include "shardjoin/result.hpp"

namespace shardjoin {

// Nested-loop join of one R block against one S block. Every matching pair
// is appended to `out` with `source` as its lineage. Returns the match count.
std::uint64_t join_blocks(const TupleBlock& r, const TupleBlock& s, const Predicate& pred,
                          NodeId source, LocalBuffer& out);

// Broadcast-mode bucket join: R bucket `b` (remote or local) against the
// local S table. Equality only looks at S bucket `b`; other predicates scan
// every S bucket.
std::uint64_t join_bucket(const TupleBlock& r_bucket, BucketIndex b, const HashTable& local_s,
                          const Predicate& pred, NodeId source, LocalBuffer& out);

// Whole-relation reference join over every partition, with lineage taken
// from each R partition's node_id. Sorted output. Used by the CLI to verify
// runs; tests carry their own nested-loop oracle.
std::vector<ResultEntry> reference_join(std::span<const Partition> r_parts,
                                        std::span<const Partition> s_parts,
                                        const Predicate& pred, const ResultLayout& layout);

} // namespace shardjoin
