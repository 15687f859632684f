#pragma once

#include <cstddef>
#include <functional>

namespace iboed {

// Worker count for rollout simulation and per-rollout estimator terms.
// Defaults to the IBOED_THREADS environment variable, else 1.
int num_threads();
void set_num_threads(int n);

// Calls fn(i) for i in [0, n). Indices are split into contiguous static
// blocks, one per worker, so results written by index are deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace iboed
