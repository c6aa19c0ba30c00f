#pragma once

// Fixed-partition parallel loop. Work is split into indexed tasks whose
// results do not depend on which worker runs them, so output is identical
// for any worker count.

#include <cstddef>
#include <functional>

namespace qvar {

/// QVAR_THREADS when set to a positive integer, else hardware concurrency.
std::size_t worker_count();

/// Calls task(i) for i in [0, n) on up to worker_count() threads. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task);

}  // namespace qvar
