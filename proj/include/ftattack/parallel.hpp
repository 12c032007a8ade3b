#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace ftattack {

/// Worker count: FTATTACK_THREADS if set, otherwise all cores.
inline int worker_count() {
  static const int n = [] {
    if (const char* env = std::getenv("FTATTACK_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return n;
}

/// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
/// Chunk boundaries depend only on (n, chunk_size), never on the worker
/// count, so callers that keep per-chunk partials and reduce them in chunk
/// order get results independent of scheduling.
template <class Fn>
inline void parallel_chunks(int64_t n, int64_t chunk_size, Fn&& fn) {
  if (n <= 0) return;
  const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers = static_cast<int>(std::min<int64_t>(worker_count(), n_chunks));
  if (workers <= 1) {
    for (int64_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto body = [&] {
    for (;;) {
      int64_t c = next.fetch_add(1);
      if (c >= n_chunks || failed.load()) return;
      try {
        fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  for (int t = 0; t < workers - 1; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (failed.load()) std::rethrow_exception(error);
}

/// Element-parallel loop; fn(i) must write disjoint locations per index.
template <class Fn>
inline void parallel_for(int64_t n, Fn&& fn) {
  parallel_chunks(n, std::max<int64_t>(1, (n + worker_count() - 1) / worker_count()),
                  [&](int64_t, int64_t b, int64_t e) {
                    for (int64_t i = b; i < e; ++i) fn(i);
                  });
}

}  // namespace ftattack
