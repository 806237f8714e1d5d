#pragma once

#include <cstddef>
#include <functional>

namespace rip {

// Number of worker threads used by parallel_for (hardware concurrency by
// default, overridable with RIP_THREADS).
std::size_t thread_count();

// Static range split over a persistent pool. Each index is processed by
// exactly one worker with a fixed inner order, so results are identical
// for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace rip
