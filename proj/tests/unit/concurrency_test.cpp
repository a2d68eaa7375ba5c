#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "shardjoin/bounded_queue.hpp"
#include "shardjoin/htf.hpp"
#include "shardjoin/mem_transport.hpp"
#include "shardjoin/memory_pool.hpp"
#include "shardjoin/result.hpp"

using namespace shardjoin;
using namespace std::chrono_literals;

TEST(BoundedQueue, FifoSingleThread) {
  BoundedQueue<int> q(4);
  for (int i = 0; i < 4; ++i) {
    q.push(i);
  }
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(q.pop(), i);
  }
  EXPECT_FALSE(q.try_pop());
}

// 4 producers x 1000 items, 4 consumers: nothing lost or duplicated, the
// bound is never exceeded, and each producer's items come out in order.
TEST(BoundedQueue, ManyProducersManyConsumers) {
  constexpr int kProducers = 4;
  constexpr int kItems = 1000;
  BoundedQueue<std::pair<int, int>> q(8);
  std::vector<std::vector<int>> seen(kProducers * 4);
  std::atomic<std::size_t> max_size{0};
  std::vector<std::thread> threads;
  for (int p = 0; p < kProducers; ++p) {
    threads.emplace_back([&, p] {
      for (int i = 0; i < kItems; ++i) {
        q.push({p, i});
        auto s = q.size();
        auto cur = max_size.load();
        while (s > cur && !max_size.compare_exchange_weak(cur, s)) {
        }
      }
    });
  }
  std::vector<std::vector<std::pair<int, int>>> got(4);
  for (int c = 0; c < 4; ++c) {
    threads.emplace_back([&, c] {
      for (;;) {
        auto item = q.pop();
        if (item.first < 0) {
          return;
        }
        got[c].push_back(item);
      }
    });
  }
  for (int p = 0; p < kProducers; ++p) {
    threads[p].join();
  }
  for (int c = 0; c < 4; ++c) {
    q.push({-1, 0});
  }
  for (std::size_t t = kProducers; t < threads.size(); ++t) {
    threads[t].join();
  }
  std::vector<std::vector<bool>> hit(kProducers, std::vector<bool>(kItems));
  std::size_t total = 0;
  for (const auto& per_consumer : got) {
    std::vector<int> last(kProducers, -1);
    for (auto [p, i] : per_consumer) {
      EXPECT_FALSE(hit[p][i]);
      hit[p][i] = true;
      EXPECT_GT(i, last[p]); // FIFO per producer as seen by one consumer
      last[p] = i;
      ++total;
    }
  }
  EXPECT_EQ(total, std::size_t(kProducers * kItems));
  EXPECT_LE(max_size.load(), q.capacity());
  EXPECT_EQ(q.total_pushes(), q.total_pops());
}

TEST(BoundedQueue, PushBlocksWhenFull) {
  BoundedQueue<int> q(1);
  q.push(1);
  std::atomic<bool> pushed{false};
  std::thread t([&] {
    q.push(2);
    pushed = true;
  });
  std::this_thread::sleep_for(30ms);
  EXPECT_FALSE(pushed.load());
  EXPECT_EQ(q.pop(), 1);
  t.join();
  EXPECT_TRUE(pushed.load());
  EXPECT_EQ(q.pop(), 2);
}

TEST(BoundedQueue, CloseWakesWaiters) {
  BoundedQueue<int> q(1);
  std::thread t([&] { EXPECT_THROW(q.pop(), QueueClosed); });
  std::this_thread::sleep_for(20ms);
  q.close();
  t.join();
  EXPECT_THROW(q.push(1), QueueClosed);
}

TEST(MemoryPool, BlocksUntilReleaseAndRecordsIt) {
  MemoryPool pool(100);
  auto a = pool.acquire(60);
  EXPECT_EQ(pool.in_use(), 60u);
  std::atomic<bool> got{false};
  std::thread t([&] {
    auto b = pool.acquire(60);
    got = true;
  });
  std::this_thread::sleep_for(30ms);
  EXPECT_FALSE(got.load());
  a.release();
  t.join();
  EXPECT_TRUE(got.load());
  EXPECT_EQ(pool.in_use(), 0u);
  EXPECT_EQ(pool.peak(), 60u);
  EXPECT_EQ(pool.blocked_acquires(), 1u);
  EXPECT_GE(pool.blocked_ns(), 20'000'000u);
}

TEST(MemoryPool, OversizedRequestIsAnError) {
  MemoryPool pool(10);
  EXPECT_THROW(pool.acquire(11), Error);
}

TEST(MemoryPool, CloseUnblocks) {
  MemoryPool pool(10);
  auto a = pool.acquire(10);
  std::thread t([&] { EXPECT_THROW(pool.acquire(5), QueueClosed); });
  std::this_thread::sleep_for(20ms);
  pool.close();
  t.join();
}

TEST(MemoryPool, LeaseMoveReleasesOnce) {
  MemoryPool pool(10);
  {
    auto a = pool.acquire(4);
    PoolLease b = std::move(a);
    EXPECT_EQ(pool.in_use(), 4u);
  }
  EXPECT_EQ(pool.in_use(), 0u);
}

TEST(Htf, BucketLifecycle) {
  MemoryPool pool(1000);
  HtfRegistry reg;
  const auto idx = reg.create(1, TableId::kR, 4, 16);
  auto f = reg.get(idx);
  EXPECT_EQ(f->state(2), SlotState::kAbsent);
  TupleBlock data(16);
  data.append(3);
  f->add_pending();
  f->make_resident(2, data, pool.acquire(data.byte_size()));
  EXPECT_EQ(f->state(2), SlotState::kResident);
  EXPECT_EQ(pool.in_use(), 16u);
  f->free_bucket(2);
  EXPECT_EQ(f->state(2), SlotState::kFreed);
  EXPECT_EQ(pool.in_use(), 0u);
  EXPECT_FALSE(f->finish_bucket());
  EXPECT_TRUE(f->end_stream()); // last reference: frame can be released
  EXPECT_TRUE(f->free_frame());
  EXPECT_FALSE(f->free_frame());
  EXPECT_TRUE(f->freed());
}

TEST(ResultBuffer, LocalBufferMergesWholeBlocks) {
  const auto layout = ResultLayout::keys_only();
  ResultList list(layout);
  LocalBuffer buf(0, 100, layout, list); // 5 entries of 20 bytes per block
  std::array<std::byte, 16> r{};
  std::array<std::byte, 16> s{};
  for (int i = 0; i < 12; ++i) {
    buf.add(r, s, 1);
  }
  EXPECT_EQ(list.block_count(), 2u);
  EXPECT_EQ(buf.pending_entries(), 2u);
  buf.flush();
  EXPECT_EQ(list.block_count(), 3u);
  EXPECT_EQ(list.entry_count(), 12u);
  buf.flush();
  EXPECT_EQ(list.block_count(), 3u);
}

TEST(ResultBuffer, ConcurrentMergeLosesNothing) {
  const auto layout = ResultLayout::keys_only();
  ResultList list(layout);
  std::vector<std::thread> threads;
  for (std::uint32_t t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      LocalBuffer buf(t, 200, layout, list);
      std::array<std::byte, 16> r{};
      std::array<std::byte, 16> s{};
      for (int i = 0; i < 1001; ++i) {
        buf.add(r, s, t);
      }
      buf.flush();
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  EXPECT_EQ(list.entry_count(), 4004u);
}

TEST(MemTransport, PipeBackpressureAndEof) {
  MemTransport tr(16);
  auto listener = tr.listen({"127.0.0.1", 1});
  auto client = tr.connect({"127.0.0.1", 1});
  auto server = listener->accept();
  std::vector<std::byte> big(1000, std::byte{7});
  std::thread w([&] {
    client->write_all(big);
    client->close_write();
  });
  std::vector<std::byte> got(1000);
  server->read_exact(got);
  w.join();
  EXPECT_EQ(got, big);
  std::array<std::byte, 1> one{};
  EXPECT_THROW(server->read_exact(one), Error);
}

TEST(MemTransport, ConnectWithoutListenerFails) {
  MemTransport tr;
  EXPECT_THROW(tr.connect({"127.0.0.1", 42}), TransportError);
}
