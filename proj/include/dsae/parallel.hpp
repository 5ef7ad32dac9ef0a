#pragma once

#include <functional>

namespace dsae {

/// Caps worker threads used by parallel_for; 0 restores the default
/// (hardware concurrency).
void set_max_threads(unsigned n);
unsigned max_threads();

/// Runs fn(i) for i in [begin, end) over contiguous static chunks. Callers
/// must only write state owned by index i, so results do not depend on the
/// thread count.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace dsae
