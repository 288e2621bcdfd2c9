#pragma once

#include <cstddef>
#include <cstdint>

namespace gmcnn {

// Worker count for data-parallel kernels. Kernels only split work across
// independent output elements, so results do not depend on this value.
void set_num_threads(int n);
int num_threads();

namespace detail {

template <class F>
void parallel_for(std::int64_t begin, std::int64_t end, F&& body) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (std::int64_t i = begin; i < end; ++i) body(i);
#else
    for (std::int64_t i = begin; i < end; ++i) body(i);
#endif
}

}  // namespace detail
}  // namespace gmcnn
