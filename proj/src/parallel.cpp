#include "densewarp/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace densewarp {

namespace {
std::atomic<int> g_thread_limit{0};
}

void set_thread_limit(int threads) { g_thread_limit = std::max(threads, 0); }

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  const int available = hw == 0 ? 1 : static_cast<int>(hw);
  const int limit = g_thread_limit.load();
  return limit > 0 ? std::min(limit, available) : available;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const int limit = g_thread_limit.load();
  if (threads <= 0) threads = default_threads();
  if (limit > 0) threads = std::min(threads, limit);
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace densewarp
