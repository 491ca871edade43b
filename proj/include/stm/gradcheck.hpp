#pragma once

#include <string>
#include <vector>

#include "stm/params.hpp"

namespace stm {

struct GradCheckReport {
    std::string scope;
    double max_rel_err = 0.0;
    int coords = 0;
};

// Central-difference verification of the analytic gradients. Scopes:
//   core     element-wise and window kernels
//   svc      correlation with channel recalibration, inputs and parameters
//   head     localization head plus its losses
//   arm      interframe constraint w.r.t. both heatmaps
//   full     whole training objective on a small feature-space triplet
//   backbone pixel pipeline through the conv stack
//   all      everything above
// Banks larger than max_coords_per_bank are subsampled deterministically.
std::vector<GradCheckReport> grad_check(const std::string& scope, uint64_t seed = 0,
                                        double step = 1e-5, int max_coords_per_bank = 200);

}  // namespace stm
