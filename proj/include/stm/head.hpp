#pragma once

#include <cstdint>

#include "stm/ops.hpp"
#include "stm/tensor.hpp"

namespace stm {

// Localization head: shared rectified 3x3 trunk, then 1x1 branch convs for
// center heatmap (logistic), local offset (raw) and object size (exponential).
struct HeadParams {
    KernelBank trunk;   // 3x3, C -> C, same padding
    KernelBank heat;    // 1x1, C -> 1
    KernelBank offset;  // 1x1, C -> 2, channel 0 = x, channel 1 = y
    KernelBank size;    // 1x1, C -> 2, channel 0 = w, channel 1 = h
};

HeadParams make_head_params(int channels, uint64_t seed);
HeadParams zeros_like(const HeadParams& p);

struct HeadOutputs {
    Tensor2 heat;    // values in (0,1)
    Tensor3 offset;  // H x W x 2
    Tensor3 size;    // H x W x 2, strictly positive
};

struct HeadCache {
    Tensor3 trunk_pre, trunk_act;
    Tensor2 heat_logit;
    Tensor3 size_raw;
};

HeadOutputs head_forward(const Tensor3& resp, const HeadParams& p, HeadCache* cache = nullptr);

struct HeadGrads {
    Tensor3 resp;
    HeadParams params;
};
// gheat is dL/d(heat map), gsize is dL/d(size map), i.e. after the logistic
// and exponential mappings; the chain through both is handled here.
HeadGrads head_backward(const Tensor3& resp, const HeadParams& p, const HeadCache& cache,
                        const HeadOutputs& outs, const Tensor2& gheat, const Tensor3& goffset,
                        const Tensor3& gsize);

// Axis-aligned box, center + extent, in source-image units.
struct BoundingBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

struct Labels {
    Tensor2 heat;    // Gaussian map, exactly 1 at the center cell
    int cx_cell = 0;
    int cy_cell = 0;
    double off_x = 0.0, off_y = 0.0;    // in [0,1)
    double size_w = 0.0, size_h = 0.0;  // in feature cells
    double sigma = 1.0;
};

// Size-adaptive radius: smallest circumscribing shift keeping the stated
// overlap between the original and jittered boxes.
double gaussian_radius(double w, double h, double min_overlap = 0.7);

Labels make_labels(const BoundingBox& box, int map_h, int map_w, int stride);

struct FocalResult {
    double loss = 0.0;
    Tensor2 grad;  // dL/d(pred)
};
// Penalty-reduced pixel-wise logistic focal loss, normalized by the number of
// peak cells (at least one). pred is clamped to [1e-7, 1-1e-7].
FocalResult focal_loss(const Tensor2& pred, const Tensor2& target, double alpha = 2.0,
                       double beta = 4.0);

struct BaseLossResult {
    double total = 0.0, cls = 0.0, off = 0.0, size = 0.0;
    Tensor2 gheat;
    Tensor3 goffset, gsize;
};
// Classification plus L1 offset/size penalties taken at the center cell only.
BaseLossResult base_loss(const HeadOutputs& outs, const Labels& labels, double lambda_off,
                         double lambda_size);

BoundingBox decode_box(const HeadOutputs& outs, const PeakLocation& loc, int stride);

}  // namespace stm
