#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "gmcnn/tensor.hpp"

namespace gmcnn {

struct GradCheckResult {
    double max_rel_error = 0;
    double max_abs_error = 0;
    std::size_t checked = 0;
};

struct GradCheckOptions {
    double step = 1e-4;
    // Entries per input to probe; 0 checks all of them.
    std::size_t max_entries = 0;
    std::uint64_t seed = 0;
    // Error floor as a fraction of the largest finite-difference entry.
    double floor_fraction = 1e-3;
};

// Compares grad() of a scalar function against central differences in the
// current precision (callers normally use f64). The relative error of entry
// i is |a_i - f_i| / max(|a_i|, |f_i|, floor_fraction * max_j |f_j|).
GradCheckResult check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                const std::vector<Tensor>& inputs, const GradCheckOptions& options = {});

struct SelftestResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Quick oracle and gradient checks over every module.
std::vector<SelftestResult> run_selftest(std::uint64_t seed = 1);

}  // namespace gmcnn
