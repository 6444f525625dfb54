#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lcnn/ops.hpp"

namespace lcnn {

struct GradCheckResult {
    bool ok = true;
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
    std::string worst;   // "param[i]" of the worst coordinate
    bool kink_hit = false;  // a nondifferentiable point was crossed; mismatch is expected
};

struct GradCheckOpts {
    double eps = 1e-6;
    double tol = 1e-4;
    // Cap on coordinates probed per input; <=0 means every coordinate.
    int64_t max_coords_per_input = 0;
    uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

// Central-difference check of d(scalar f)/d(inputs). Inputs must be F64 and
// requires_grad. Analytic gradients come from one taped backward pass;
// numeric ones from f evaluated off-tape.
GradCheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                          std::vector<Tensor> inputs, GradCheckOpts opts = {});

}  // namespace lcnn
