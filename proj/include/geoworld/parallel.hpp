#pragma once

#include <cstddef>
#include <functional>

namespace geoworld {

/// Upper bound on worker threads used by data-parallel map operations.
/// Only element-wise work is split, so results never depend on this value.
void set_num_threads(int n);
int num_threads();

/// Calls fn(i) for i in [0, n), distributing contiguous chunks over at most
/// num_threads() workers. fn must only write to state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace geoworld
