#pragma once

#include <cstdint>
#include <string>

namespace mmfusion {

struct GradCheckReport {
    std::size_t instances = 0;
    double tolerance = 0.0;
    double max_rel_error = 0.0;
    std::string worst_param;
    bool passed = false;
};

// Central finite differences (step 1e-5) against the analytic gradients of
// the composed model (encoders, fusion with a non-identity rotation held
// constant, classifier, cross entropy) over random small instances. The
// finite-difference side evaluates the loss through forward passes only.
GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t instances,
                              double tolerance = 1e-4);

}  // namespace mmfusion
