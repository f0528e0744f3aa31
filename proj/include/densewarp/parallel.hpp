#pragma once

#include <cstddef>
#include <functional>

namespace densewarp {

// Worker count used when a caller passes threads <= 0. Never exceeds the
// process-wide limit.
int default_threads();

// Caps every parallel_for in the process; 0 removes the cap.
void set_thread_limit(int threads);

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// handled by exactly one worker; results must be written to per-index slots.
// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace densewarp
