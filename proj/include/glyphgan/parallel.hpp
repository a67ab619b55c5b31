#pragma once

#include <cstddef>
#include <functional>

namespace glyphgan {

// Worker count used by kernels that split independent output elements across
// threads. Every output element is reduced in a fixed order by exactly one
// worker, so results are bitwise identical for any thread count.
void set_num_threads(int n);
int num_threads();

// Calls fn(i) for i in [0, n). Runs inline when one thread is configured or n
// is small.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace glyphgan
