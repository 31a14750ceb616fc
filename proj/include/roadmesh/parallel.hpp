#pragma once

#include <cstddef>
#include <functional>

namespace roadmesh {

// Worker cap used by the library internals (CLI --threads). 0 or 1 means
// serial execution.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n); nested calls run serially. Work items are statically partitioned; callers
// must write results to per-item slots and reduce them in index order so that
// outcomes do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace roadmesh
