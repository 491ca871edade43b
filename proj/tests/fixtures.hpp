#pragma once

// Hand-constructed heatmap fixtures shared by the unit and acceptance suites.

#include <cmath>

#include "stm/tensor.hpp"

namespace fixtures {

inline stm::Tensor2 gaussian_map(int h, int w, double cy, double cx, double amp, double sigma) {
    stm::Tensor2 out(h, w);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            const double dy = y - cy, dx = x - cx;
            out.at(y, x) = amp * std::exp(-(dy * dy + dx * dx) * inv);
        }
    return out;
}

inline void add_gaussian(stm::Tensor2& map, double cy, double cx, double amp, double sigma) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < map.h; y++)
        for (int x = 0; x < map.w; x++) {
            const double dy = y - cy, dx = x - cx;
            map.at(y, x) += amp * std::exp(-(dy * dy + dx * dx) * inv);
        }
}

// Tracking state one frame before a distractor appears: the previous label
// and heatmap agree on a target at (8,8).
struct TwoPeakFixture {
    stm::Tensor2 label_last;
    stm::Tensor2 pred_last;
    stm::Tensor2 pred_t;
    stm::PeakLocation p_last;
    // ground truth of the construction
    int true_y = 9, true_x = 8;
    int distractor_y = 3, distractor_x = 13;
};

// pred_t carries a taller, differently-shaped peak far from the previous
// target plus the correct (lower) peak one cell below it.
inline TwoPeakFixture two_peak_fixture() {
    TwoPeakFixture f;
    const int n = 16;
    const double sigma = 1.2;
    f.label_last = gaussian_map(n, n, 8, 8, 1.0, sigma);
    f.pred_last = gaussian_map(n, n, 8, 8, 0.9, sigma);
    f.p_last = stm::PeakLocation{8, 8, 1.0};
    f.pred_t = gaussian_map(n, n, f.true_y, f.true_x, 0.55, sigma);
    add_gaussian(f.pred_t, f.distractor_y, f.distractor_x, 0.9, 1.0);
    return f;
}

}  // namespace fixtures
