#include "shardjoin/join.hpp"

#include <algorithm>
#include <numeric>

namespace shardjoin {

std::uint64_t join_blocks(const TupleBlock& r, const TupleBlock& s, const Predicate& pred,
                          NodeId source, LocalBuffer& out) {
  std::uint64_t matches = 0;
  const std::size_t nr = r.size();
  const std::size_t ns = s.size();
  for (std::size_t i = 0; i < nr; ++i) {
    const Key rk = r.key(i);
    for (std::size_t j = 0; j < ns; ++j) {
      if (pred.matches(rk, s.key(j))) {
        out.add(r.tuple_bytes(i), s.tuple_bytes(j), source);
        ++matches;
      }
    }
  }
  return matches;
}

std::uint64_t join_bucket(const TupleBlock& r_bucket, BucketIndex b, const HashTable& local_s,
                          const Predicate& pred, NodeId source, LocalBuffer& out) {
  if (r_bucket.empty()) {
    return 0;
  }
  if (pred.kind == PredicateKind::kEquality) {
    return join_blocks(r_bucket, local_s.bucket(b), pred, source, out);
  }
  std::uint64_t matches = 0;
  for (BucketIndex sb = 0; sb < local_s.num_buckets(); ++sb) {
    matches += join_blocks(r_bucket, local_s.bucket(sb), pred, source, out);
  }
  return matches;
}

namespace {

struct SRef {
  Key key;
  const Partition* part;
  std::size_t index;
};

ResultEntry make_entry(const Partition& rp, std::size_t ri, const SRef& s,
                       const ResultLayout& layout) {
  ResultEntry e;
  e.r_key = rp.tuples.key(ri);
  e.s_key = s.key;
  e.source = rp.node_id;
  if (layout.payload_size > 0) {
    auto rpay = rp.tuples.payload(ri);
    auto spay = s.part->tuples.payload(s.index);
    e.r_payload.assign(rpay.begin(), rpay.begin() + layout.payload_size);
    e.s_payload.assign(spay.begin(), spay.begin() + layout.payload_size);
  }
  return e;
}

} // namespace

std::vector<ResultEntry> reference_join(std::span<const Partition> r_parts,
                                        std::span<const Partition> s_parts,
                                        const Predicate& pred, const ResultLayout& layout) {
  std::vector<SRef> s_sorted;
  for (const auto& sp : s_parts) {
    for (std::size_t j = 0; j < sp.tuples.size(); ++j) {
      s_sorted.push_back({sp.tuples.key(j), &sp, j});
    }
  }
  std::sort(s_sorted.begin(), s_sorted.end(),
            [](const SRef& a, const SRef& b) { return a.key < b.key; });
  auto lower = [&](Key k) {
    return std::lower_bound(s_sorted.begin(), s_sorted.end(), k,
                            [](const SRef& a, Key v) { return a.key < v; });
  };
  auto upper = [&](Key k) {
    return std::upper_bound(s_sorted.begin(), s_sorted.end(), k,
                            [](Key v, const SRef& a) { return v < a.key; });
  };

  std::vector<ResultEntry> out;
  for (const auto& rp : r_parts) {
    for (std::size_t i = 0; i < rp.tuples.size(); ++i) {
      const Key rk = rp.tuples.key(i);
      std::vector<SRef>::const_iterator first, last;
      switch (pred.kind) {
        case PredicateKind::kEquality:
          first = lower(rk);
          last = upper(rk);
          break;
        case PredicateKind::kBand: {
          const Key lo = rk >= pred.epsilon ? rk - pred.epsilon : 0;
          const Key hi = rk <= ~Key{0} - pred.epsilon ? rk + pred.epsilon : ~Key{0};
          first = lower(lo);
          last = upper(hi);
          break;
        }
        case PredicateKind::kLessThan:
          first = upper(rk);
          last = s_sorted.end();
          break;
      }
      for (auto it = first; it != last; ++it) {
        out.push_back(make_entry(rp, i, *it, layout));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace shardjoin
