#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>

namespace shardjoin {

// Seeded interleaving perturbation: at each scheduling point, yields or
// sleeps briefly with a probability drawn from a seeded sequence.
class Jitter {
 public:
  Jitter(std::uint64_t seed, double probability, std::uint32_t max_sleep_us = 50)
      : seed_(seed),
        threshold_(static_cast<std::uint64_t>(probability * 1048576.0)),
        max_sleep_us_(max_sleep_us) {}

  void point() {
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * counter_.fetch_add(1, std::memory_order_relaxed);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    if ((z & 0xFFFFF) >= threshold_) {
      return;
    }
    const auto us = (z >> 20) % (max_sleep_us_ + 1);
    if (us < max_sleep_us_ / 2) {
      std::this_thread::yield();
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(us));
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t threshold_;
  std::uint32_t max_sleep_us_;
  std::atomic<std::uint64_t> counter_{0};
};

// Shared activity counter. Blocking primitives bump it whenever they make
// progress, which lets a watchdog tell a deadlock from a slow run.
class Progress {
 public:
  void step() {
    count_.fetch_add(1, std::memory_order_relaxed);
    if (jitter_ != nullptr) {
      jitter_->point();
    }
  }
  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }
  void set_jitter(Jitter* j) { jitter_ = j; }

 private:
  std::atomic<std::uint64_t> count_{0};
  Jitter* jitter_ = nullptr;
};

inline void step(Progress* p) {
  if (p != nullptr) {
    p->step();
  }
}

} // namespace shardjoin
