#pragma once

#include <cstddef>
#include <functional>

namespace dnet {

// Upper bound on worker threads used by the library. 0 means "all cores".
// Results never depend on this value: every parallel loop writes to
// disjoint outputs and any reduction is done afterwards in index order.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs body(i) for i in [0, count) on up to thread_count() threads.
// The first exception thrown by any task is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace dnet
