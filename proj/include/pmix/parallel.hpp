#pragma once

#include <cstddef>
#include <functional>

namespace pmix {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace pmix
