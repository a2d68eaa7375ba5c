#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "shardjoin/relation.hpp"
#include "shardjoin/schedule.hpp"
#include "shardjoin/workload.hpp"

using namespace shardjoin;

namespace {

// Upper alpha quantile of chi-square with k degrees of freedom
// (Wilson-Hilferty); z is the matching standard normal quantile.
double chi_square_critical(double k, double z) {
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

double chi_square(const std::vector<std::uint64_t>& counts, double expected) {
  double x = 0;
  for (auto c : counts) {
    x += (c - expected) * (c - expected) / expected;
  }
  return x;
}

} // namespace

// Random 64-bit keys, so (with overwhelming probability) 400000 distinct
// keys: the statistic then tests the hash, not the key multiset.
TEST(Hash, UniformOverRandomKeys) {
  constexpr std::uint32_t kBuckets = 1200;
  constexpr std::uint64_t kKeys = 400000;
  std::mt19937_64 rng(21);
  std::vector<std::uint64_t> counts(kBuckets);
  for (std::uint64_t i = 0; i < kKeys; ++i) {
    ++counts[hash_key(rng(), kBuckets)];
  }
  const double crit = chi_square_critical(kBuckets - 1, 2.3263); // alpha = 0.01
  EXPECT_LT(chi_square(counts, double(kKeys) / kBuckets), crit);
}

TEST(Hash, UniformOverDenseKeys) {
  constexpr std::uint32_t kBuckets = 1200;
  constexpr std::uint64_t kKeys = 400000;
  std::vector<std::uint64_t> counts(kBuckets);
  for (std::uint64_t k = 0; k < kKeys; ++k) {
    ++counts[hash_key(k, kBuckets)];
  }
  EXPECT_LT(chi_square(counts, double(kKeys) / kBuckets), chi_square_critical(kBuckets - 1, 2.3263));
}

TEST(Hash, CriticalValueApproximation) {
  // Table values: chi2(0.99; 100) = 135.807, chi2(0.99; 1000) = 1106.969.
  EXPECT_NEAR(chi_square_critical(100, 2.3263), 135.807, 0.2);
  EXPECT_NEAR(chi_square_critical(1000, 2.3263), 1106.969, 0.5);
}

TEST(HashTable, BucketCountsSumToPartitionSize) {
  GenSpec g;
  g.tuples = 400000;
  g.tuple_size = 16;
  const auto p = generate_partition(g, TableId::kR, 0);
  const auto t = build_hash_table(p, 1200);
  EXPECT_EQ(t.total_tuples(), 400000u);
  for (BucketIndex b = 0; b < t.num_buckets(); b += 97) {
    for (std::size_t i = 0; i < t.bucket(b).size(); ++i) {
      EXPECT_EQ(hash_key(t.bucket(b).key(i), 1200), b);
    }
  }
}

TEST(HashTable, EmptyPartition) {
  Partition p;
  p.tuples = TupleBlock(32);
  const auto t = build_hash_table(p, 8);
  EXPECT_EQ(t.total_tuples(), 0u);
  EXPECT_EQ(t.num_buckets(), 8u);
}

TEST(HashTable, KeepsPayloadBytes) {
  Partition p;
  p.tuples = TupleBlock(16);
  std::vector<std::byte> payload(8, std::byte{0x5A});
  p.tuples.append(42, payload);
  const auto t = build_hash_table(p, 4);
  const auto& b = t.bucket(hash_key(42, 4));
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b.tuple(0).payload, payload);
}

TEST(AssignBuckets, ExhaustivePartitionOfBuckets) {
  for (std::uint32_t n = 1; n <= 8; ++n) {
    for (std::uint32_t nb = n; nb <= 40; ++nb) {
      std::vector<int> owner(nb, -1);
      for (NodeId i = 0; i < n; ++i) {
        for (auto b : assign_buckets(i, n, nb)) {
          ASSERT_LT(b, nb);
          ASSERT_EQ(owner[b], -1) << "bucket " << b << " assigned twice";
          owner[b] = static_cast<int>(i);
          EXPECT_EQ(bucket_owner(b, n), i);
        }
      }
      for (auto o : owner) {
        EXPECT_NE(o, -1);
      }
    }
  }
}

TEST(AssignBuckets, RejectsBadArguments) {
  EXPECT_THROW(assign_buckets(3, 3, 10), ConfigError);
  EXPECT_THROW(assign_buckets(0, 4, 3), ConfigError);
  EXPECT_THROW(assign_buckets(0, 0, 3), ConfigError);
}

TEST(RingSchedule, ExhaustiveSmallClusters) {
  for (std::uint32_t n = 1; n <= 8; ++n) {
    for (std::uint32_t k = 1; k < n; ++k) {
      std::set<NodeId> receivers;
      std::set<NodeId> senders;
      for (NodeId i = 0; i < n; ++i) {
        const auto p = ring_peers(i, k, n);
        EXPECT_EQ(p.receiver, (i + k) % n);
        EXPECT_EQ((p.sender + k) % n, i);
        EXPECT_NE(p.receiver, i);
        receivers.insert(p.receiver);
        senders.insert(p.sender);
        // The receiver's sender at the same step is this node.
        EXPECT_EQ(ring_peers(p.receiver, k, n).sender, i);
      }
      // Each step is a permutation: no receiver is targeted twice.
      EXPECT_EQ(receivers.size(), n);
      EXPECT_EQ(senders.size(), n);
    }
    // Over all steps every node sends to every other node exactly once.
    for (NodeId i = 0; i < n; ++i) {
      std::multiset<NodeId> dests;
      for (std::uint32_t k = 1; k < n; ++k) {
        dests.insert(ring_peers(i, k, n).receiver);
      }
      EXPECT_EQ(dests.size(), n - 1);
      EXPECT_EQ(std::set<NodeId>(dests.begin(), dests.end()).size(), n - 1);
      EXPECT_EQ(dests.count(i), 0u);
    }
  }
}

TEST(RingSchedule, ShuffleScheduleOrder) {
  auto c = ClusterConfig::localhost(5, 8000);
  c.sink_id = 3;
  const auto sched = shuffle_schedule(1, c);
  ASSERT_EQ(sched.size(), 4u);
  const std::vector<NodeId> want{2, 3, 4, 0};
  for (std::size_t k = 0; k < sched.size(); ++k) {
    EXPECT_EQ(sched[k].type, CommEvent::kPartitionReady);
    EXPECT_EQ(sched[k].dest, want[k]);
    EXPECT_EQ(sched[k].dest_endpoint.port, 8000 + want[k]);
    EXPECT_EQ(sched[k].dest_is_sink, want[k] == 3);
  }
  EXPECT_TRUE(shuffle_schedule(0, ClusterConfig::localhost(1, 8000)).empty());
}

TEST(RingSchedule, RejectsBadInput) {
  EXPECT_THROW(ring_peers(0, 1, 0), ConfigError);
  EXPECT_THROW(ring_peers(4, 1, 4), ConfigError);
}

TEST(SelectContent, BroadcastShipsAllOfR) {
  auto c = ClusterConfig::localhost(3, 8000);
  c.num_buckets = 9;
  HashTable r(TableId::kR, 9, 16);
  HashTable s(TableId::kS, 9, 16);
  const auto sections = select_content(JoinMode::kBroadcast, 1, r, s, c);
  ASSERT_EQ(sections.size(), 1u);
  EXPECT_EQ(sections[0].table, &r);
  EXPECT_TRUE(sections[0].all_buckets);
}

TEST(SelectContent, HashShipsReceiverBucketsOfBothTables) {
  auto c = ClusterConfig::localhost(3, 8000);
  c.num_buckets = 9;
  c.join_mode = JoinMode::kHashDistribution;
  HashTable r(TableId::kR, 9, 16);
  HashTable s(TableId::kS, 9, 16);
  const auto sections = select_content(JoinMode::kHashDistribution, 2, r, s, c);
  ASSERT_EQ(sections.size(), 2u);
  EXPECT_EQ(sections[0].table, &r);
  EXPECT_EQ(sections[1].table, &s);
  for (const auto& sec : sections) {
    EXPECT_FALSE(sec.all_buckets);
    EXPECT_EQ(sec.buckets, (std::vector<BucketIndex>{2, 5, 8}));
  }
}
