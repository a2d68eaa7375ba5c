#include <gtest/gtest.h>

#include <random>

#include "shardjoin/join.hpp"
#include "support/oracle.hpp"

using namespace shardjoin;
using shardjoin::testing::brute_force_join;

namespace {

TupleBlock keys(std::initializer_list<Key> ks, std::uint32_t tuple_size = 16) {
  TupleBlock b(tuple_size);
  for (auto k : ks) {
    b.append(k);
  }
  return b;
}

Partition part(TableId t, NodeId node, std::initializer_list<Key> ks) {
  Partition p;
  p.table_id = t;
  p.node_id = node;
  p.domain = 100;
  p.tuples = keys(ks);
  return p;
}

std::uint64_t count_join(const TupleBlock& r, const TupleBlock& s, const Predicate& pred) {
  const auto layout = ResultLayout::keys_only();
  ResultList list(layout);
  LocalBuffer buf(0, 1024, layout, list);
  const auto n = join_blocks(r, s, pred, 0, buf);
  buf.flush();
  EXPECT_EQ(list.entry_count(), n);
  return n;
}

} // namespace

TEST(Join, EqualityExample) {
  EXPECT_EQ(count_join(keys({5, 5, 7}), keys({5, 9}), Predicate::equality()), 2u);
}

TEST(Join, BandExample) {
  EXPECT_EQ(count_join(keys({4}), keys({3, 4, 5, 6}), Predicate::band(1)), 3u);
}

TEST(Join, LessThanExample) {
  EXPECT_EQ(count_join(keys({4, 1}), keys({3, 4, 5, 6}), Predicate::less_than()), 2u + 4u);
}

TEST(Join, EmptySides) {
  EXPECT_EQ(count_join(keys({}), keys({1}), Predicate::equality()), 0u);
  EXPECT_EQ(count_join(keys({1}), keys({}), Predicate::band(3)), 0u);
}

TEST(Join, EntriesCarryKeysAndSource) {
  const auto layout = ResultLayout::keys_only();
  ResultList list(layout);
  LocalBuffer buf(0, 1024, layout, list);
  join_blocks(keys({8}), keys({8}), Predicate::equality(), 3, buf);
  buf.flush();
  const auto e = list.entries();
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].r_key, 8u);
  EXPECT_EQ(e[0].s_key, 8u);
  EXPECT_EQ(e[0].source, 3u);
}

TEST(Join, FullLayoutCarriesPayloads) {
  const auto layout = ResultLayout::full(16);
  ResultList list(layout);
  LocalBuffer buf(0, 1024, layout, list);
  TupleBlock r(16);
  TupleBlock s(16);
  r.append(1, std::vector<std::byte>(8, std::byte{1}));
  s.append(1, std::vector<std::byte>(8, std::byte{2}));
  join_blocks(r, s, Predicate::equality(), 0, buf);
  buf.flush();
  const auto e = list.entries();
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].r_payload, std::vector<std::byte>(8, std::byte{1}));
  EXPECT_EQ(e[0].s_payload, std::vector<std::byte>(8, std::byte{2}));
}

// A bucket of R against a whole local S table: equality only needs the
// same bucket, band and less-than need every bucket.
TEST(Join, BucketAgainstTableMatchesNestedLoop) {
  std::mt19937_64 rng(31);
  for (int iter = 0; iter < 200; ++iter) {
    const std::uint32_t nb = 1 + rng() % 12;
    Partition rp = part(TableId::kR, 0, {});
    Partition sp = part(TableId::kS, 0, {});
    for (int i = 0; i < 30; ++i) {
      rp.tuples.append(rng() % 40);
      sp.tuples.append(rng() % 40);
    }
    const auto rt = build_hash_table(rp, nb);
    const auto st = build_hash_table(sp, nb);
    for (const auto& pred : {Predicate::equality(), Predicate::band(2), Predicate::less_than()}) {
      const auto layout = ResultLayout::keys_only();
      ResultList list(layout);
      LocalBuffer buf(0, 256, layout, list);
      for (BucketIndex b = 0; b < nb; ++b) {
        join_bucket(rt.bucket(b), b, st, pred, 0, buf);
      }
      buf.flush();
      auto got = list.entries();
      std::sort(got.begin(), got.end());
      EXPECT_EQ(got, brute_force_join({rp}, {sp}, pred));
    }
  }
}

TEST(Join, ReferenceJoinMatchesBruteForce) {
  std::mt19937_64 rng(32);
  for (int iter = 0; iter < 100; ++iter) {
    const auto w = shardjoin::testing::make_workload(rng(), 1 + rng() % 4, rng() % 60, 1 + rng() % 80);
    for (const auto& pred :
         {Predicate::equality(), Predicate::band(rng() % 4), Predicate::less_than()}) {
      EXPECT_EQ(reference_join(w.r, w.s, pred, ResultLayout::keys_only()),
                brute_force_join(w.r, w.s, pred));
    }
    const auto full = ResultLayout::full(32);
    EXPECT_EQ(reference_join(w.r, w.s, Predicate::equality(), full),
              brute_force_join(w.r, w.s, Predicate::equality(), full));
  }
}

TEST(Join, BandAtDomainEdges) {
  const std::vector<Partition> r{part(TableId::kR, 0, {0, 1, ~0ULL})};
  const std::vector<Partition> s{part(TableId::kS, 0, {0, 2, ~0ULL - 1})};
  EXPECT_EQ(reference_join(r, s, Predicate::band(2), ResultLayout::keys_only()),
            brute_force_join(r, s, Predicate::band(2)));
}
