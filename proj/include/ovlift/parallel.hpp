#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ovlift/common.hpp"

namespace ovlift {

/// Worker count: OVLIFT_WORKERS env var wins over the configured value.
inline int resolve_workers(int configured) {
  if (const char* env = std::getenv("OVLIFT_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return configured >= 1 ? configured : 1;
}

/// Runs f(i) for i in [0, n). Work is split into contiguous static chunks, one
/// per worker; each f(i) must write only to its own index-addressed slot so the
/// result is identical for any worker count. First exception is rethrown.
template <class F>
void parallel_for(int n, int workers, F&& f) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
    int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    threads.emplace_back([&, begin, end]() {
      try {
        for (int i = begin; i < end; ++i) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

} // namespace ovlift
