#pragma once

#include <algorithm>
#include <cstdlib>
#include <future>
#include <thread>
#include <vector>

namespace secure {

inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("SECURE_THREADS")) {
    const long v = std::atol(env);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<std::size_t>(hw);
}

/// Runs fn(i) for i in [0, n). Tasks must be independent; any result they
/// produce should be written to a caller-owned slot indexed by i so that
/// downstream reductions happen in index order regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (n == 0) return;
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  futures.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += threads) fn(i);
    }));
  }
  for (auto& f : futures) f.get();
}

}  // namespace secure
