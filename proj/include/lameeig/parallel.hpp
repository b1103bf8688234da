#pragma once

#include <functional>

namespace lameeig {

/// Thread cap from LAMEEIG_THREADS (default 1, invalid values fall back to 1).
int configured_threads();

/// Runs body(i) for i in [0, n) on up to `threads` threads. Each index is
/// visited exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. Rethrows the first exception.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

}  // namespace lameeig
