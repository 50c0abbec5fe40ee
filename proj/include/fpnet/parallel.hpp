#pragma once

#include <cstdint>
#include <functional>

namespace fpnet {

// Optional intra-op worker pool. Work is split into fixed-size chunks whose
// boundaries do not depend on the worker count, and every chunk writes a
// disjoint output range, so results are bitwise identical to the serial path
// for any thread count. Reductions never go through here.
namespace parallel {

// Number of workers (>= 1). 1 means everything runs inline on the caller.
int num_threads();
void set_num_threads(int n);

// Calls fn(begin, end) over [0, n) in chunks of chunk_size. fn must only write
// state owned by its [begin, end) slice.
void parallel_for(std::int64_t n, std::int64_t chunk_size,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace parallel

}  // namespace fpnet
