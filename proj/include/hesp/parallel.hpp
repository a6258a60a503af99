#pragma once

#include <cstddef>
#include <functional>

namespace hesp {

/// Number of worker threads used by parallel loops.
///
/// Defaults to the HONEST_ESP_THREADS environment variable when set, otherwise
/// to the hardware concurrency. An explicit set_worker_count() wins over both.
[[nodiscard]] std::size_t worker_count();

/// Overrides the worker count for the process; 0 restores the default.
void set_worker_count(std::size_t workers);

/// Runs body(i) for i in [0, count) over the worker pool.
///
/// Iterations are split into contiguous chunks. Callers write into
/// pre-sized, per-index slots so results never depend on the worker count.
/// The first exception thrown by any iteration is rethrown on the caller.
/// Calls made from inside a worker run serially on that worker.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace hesp
