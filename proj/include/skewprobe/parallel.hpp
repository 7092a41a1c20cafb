#pragma once

#include <cstddef>
#include <functional>

namespace skewprobe {

/// Worker count from SKEWPROBE_THREADS; unset, empty or 0 means one per
/// hardware thread. Throws ConfigError for a malformed value.
unsigned resolve_thread_count();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. If any call
/// throws, the exception from the smallest failing index is rethrown after
/// all workers finish.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace skewprobe
