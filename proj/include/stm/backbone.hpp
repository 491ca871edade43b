#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "stm/head.hpp"
#include "stm/ops.hpp"
#include "stm/tensor.hpp"

namespace stm {

struct BackboneLayer {
    KernelBank bank;
    int stride = 1;  // 1 or 2
};

// Toy rectified conv stack; stride product fixes the feature grid resolution.
struct BackboneParams {
    std::vector<BackboneLayer> layers;

    int total_stride() const;
    int out_channels() const;
    bool empty() const { return layers.empty(); }
};

// Three 3x3 layers with strides (2,2,2): total stride 8.
BackboneParams make_backbone_params(int in_channels, int feat_channels, uint64_t seed);

// Exactly one payload is populated: raw pixels to run through the backbone,
// or precomputed features passed straight through.
struct FrameInput {
    std::optional<Tensor3> pixels;
    std::optional<Tensor3> features;
    int frame_index = 0;

    static FrameInput from_pixels(Tensor3 px, int frame_index = 0);
    static FrameInput from_features(Tensor3 feat, int frame_index = 0);
    bool is_pixel() const { return pixels.has_value(); }
    const Tensor3& payload() const { return pixels ? *pixels : *features; }
};

struct BackboneCache {
    std::vector<Tensor3> inputs;  // input of each layer
    std::vector<Tensor3> pre;     // pre-activation outputs
};

// Pixel payloads must be spatially divisible by the total stride; feature
// payloads are returned unchanged.
Tensor3 extract(const FrameInput& frame, const BackboneParams& params,
                BackboneCache* cache = nullptr);

// Pixel-path backward; accumulates into pgrads (same layer layout as params).
void extract_backward(const FrameInput& frame, const BackboneParams& params,
                      const BackboneCache& cache, const Tensor3& gout, BackboneParams& pgrads);

// Square window centered at (cy, cx) with edge replication outside bounds.
Tensor3 crop_window(const Tensor3& src, int cy, int cx, int size);

// Template window centered on the box, search window centered on the same
// point; callers recenter the search on the running prediction during
// tracking. Sizes are in the payload's own units.
std::pair<FrameInput, FrameInput> crop_regions(const FrameInput& frame, const BoundingBox& box,
                                               int template_size, int search_size);

}  // namespace stm
