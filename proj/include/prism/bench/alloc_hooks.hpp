#pragma once

// Replaces the global allocation functions to feed alloc_tracker.hpp.
// Include from exactly one translation unit of an executable. Each block
// carries a 16-byte header holding its size so frees can be counted.

#include <cstdlib>
#include <new>

#include "prism/bench/alloc_tracker.hpp"

namespace prism::bench::detail {

inline constexpr std::size_t kHeader = 16;

inline void* tracked_alloc(std::size_t n, bool nothrow) {
  static const bool once = [] {
    alloc_stats().hooked.store(true);
    return true;
  }();
  (void)once;
  void* raw = std::malloc(n + kHeader);
  if (!raw) {
    if (nothrow) return nullptr;
    throw std::bad_alloc();
  }
  *static_cast<std::size_t*>(raw) = n;
  note_alloc(n);
  return static_cast<char*>(raw) + kHeader;
}

inline void tracked_free(void* p) noexcept {
  if (!p) return;
  void* raw = static_cast<char*>(p) - kHeader;
  note_free(*static_cast<std::size_t*>(raw));
  std::free(raw);
}

}  // namespace prism::bench::detail

void* operator new(std::size_t n) { return prism::bench::detail::tracked_alloc(n, false); }
void* operator new[](std::size_t n) { return prism::bench::detail::tracked_alloc(n, false); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return prism::bench::detail::tracked_alloc(n, true); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return prism::bench::detail::tracked_alloc(n, true); }
void operator delete(void* p) noexcept { prism::bench::detail::tracked_free(p); }
void operator delete[](void* p) noexcept { prism::bench::detail::tracked_free(p); }
void operator delete(void* p, std::size_t) noexcept { prism::bench::detail::tracked_free(p); }
void operator delete[](void* p, std::size_t) noexcept { prism::bench::detail::tracked_free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { prism::bench::detail::tracked_free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { prism::bench::detail::tracked_free(p); }
