#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace decayscope {

/// Process-wide worker budget. 0 means "use hardware_concurrency".
/// The CLI sets this from --threads; library defaults leave it at 0.
inline std::atomic<unsigned>& thread_budget() {
  static std::atomic<unsigned> budget{0};
  return budget;
}

inline unsigned effective_threads() {
  unsigned b = thread_budget().load();
  if (b == 0) b = std::max(1u, std::thread::hardware_concurrency());
  return b;
}

/// Runs body(begin, end) over [0, n) split into contiguous blocks, one per worker.
/// Block boundaries depend only on n and the worker count passed in, never on
/// scheduling, so callers that write to disjoint index ranges stay deterministic.
/// The first exception thrown by any block is rethrown on the calling thread.
template <typename Body>
void parallel_for_blocks(std::size_t n, const Body& body, unsigned max_threads = 0) {
  if (n == 0) return;
  unsigned workers = max_threads == 0 ? effective_threads() : max_threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  const std::size_t block = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::atomic_flag error_set = ATOMIC_FLAG_INIT;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, static_cast<std::size_t>(w) * block);
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        if (!error_set.test_and_set()) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace decayscope
