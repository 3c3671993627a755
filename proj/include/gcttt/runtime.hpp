#pragma once

#include <cstddef>

namespace gcttt {

/// Keeps batch-sized matrix buffers on the heap instead of fresh mmap pages.
/// Call once at program start.
void tune_allocator();

/// Worker count from GCTTT_WORKERS (default 1, minimum 1).
std::size_t worker_count();

}  // namespace gcttt
