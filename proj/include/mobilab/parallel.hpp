#pragma once

#include <cstddef>
#include <functional>

namespace mobilab {

// Pool size: MOBILAB_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous blocks so results
// written by index do not depend on the thread count. The first exception
// thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace mobilab
