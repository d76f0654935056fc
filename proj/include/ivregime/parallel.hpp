#pragma once

#include <cstddef>
#include <functional>

namespace ivregime {

// Worker count: IVREGIME_THREADS if set to a positive integer, otherwise
// std::thread::hardware_concurrency() (at least 1).
std::size_t default_thread_count();

// Calls body(i) for i in [0, count) on up to `threads` workers. Indices are
// handed out dynamically; the first exception thrown is rethrown after all
// workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t threads = default_thread_count());

}  // namespace ivregime
