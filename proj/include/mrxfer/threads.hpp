#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mrxfer {

/// Worker count from MRXFER_THREADS. Unset or 0 means single-threaded.
inline std::size_t thread_count()
{
  const char *env = std::getenv("MRXFER_THREADS");
  if (!env) {
    return 1;
  }
  const long n = std::strtol(env, nullptr, 10);
  return n > 1 ? static_cast<std::size_t>(n) : 1;
}

/// Runs f(i) for i in [0, n). Each index is handled exactly once; callers
/// write to per-index slots so results do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, F &&f)
{
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      f(i);
    }
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) {
            error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto &t : pool) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

} // namespace mrxfer
