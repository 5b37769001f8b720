#pragma once

#include <atomic>
#include <cstddef>

namespace prism::bench {

// Live/peak heap byte counters fed by the replacement operator new/delete
// in alloc_hooks.hpp. Without the hooks linked in, `enabled()` is false and
// every reading is zero.
struct AllocStats {
  std::atomic<std::size_t> live{0};
  std::atomic<std::size_t> peak{0};
  std::atomic<bool> hooked{false};
};

inline AllocStats& alloc_stats() {
  static AllocStats s;
  return s;
}

inline void note_alloc(std::size_t n) {
  auto& s = alloc_stats();
  auto now = s.live.fetch_add(n, std::memory_order_relaxed) + n;
  auto peak = s.peak.load(std::memory_order_relaxed);
  while (now > peak && !s.peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

inline void note_free(std::size_t n) { alloc_stats().live.fetch_sub(n, std::memory_order_relaxed); }

inline bool tracking_enabled() { return alloc_stats().hooked.load(); }

// Peak bytes above the level live at construction.
class PeakScope {
 public:
  PeakScope() {
    auto& s = alloc_stats();
    base_ = s.live.load();
    s.peak.store(base_);
  }
  std::size_t peak_bytes() const {
    auto p = alloc_stats().peak.load();
    return p > base_ ? p - base_ : 0;
  }

 private:
  std::size_t base_;
};

}  // namespace prism::bench
