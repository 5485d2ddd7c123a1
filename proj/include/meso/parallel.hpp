#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace meso {

// Worker count used by parallel_for. 1 means run inline.
inline std::size_t& thread_count()
{
  static std::size_t n = 1;
  return n;
}

inline void set_thread_count(std::size_t n)
{
  thread_count() = n == 0 ? std::max<std::size_t>(1, std::thread::hardware_concurrency()) : n;
}

//! Runs body(i) for i in [0, n). Each index must only write its own slot,
//! so results never depend on the schedule. The first exception (lowest
//! index) is rethrown after all workers join.
template<class Body>
void parallel_for(std::size_t n, Body&& body)
{
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }

  std::atomic<std::size_t> next{ 0 };
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = n;

  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w)
    pool.emplace_back(work);
  work();
  pool.clear();

  if (error)
    std::rethrow_exception(error);
}

} // namespace meso
