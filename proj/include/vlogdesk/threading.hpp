#ifndef VLOGDESK_THREADING_HPP
#define VLOGDESK_THREADING_HPP

#include <cstdint>
#include <functional>

namespace vlogdesk {

// Worker count: VLOGDESK_THREADS env var, else hardware concurrency.
int thread_count();

// Splits [0,n) into contiguous chunks, one per worker. Each index is touched
// by exactly one thread, so results do not depend on the worker count.
void parallel_for(int64_t n, const std::function<void(int64_t begin, int64_t end)>& body);

}  // namespace vlogdesk

#endif
