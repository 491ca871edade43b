#include "stm/backbone.hpp"

#include <cmath>

#include "stm/rng.hpp"

namespace stm {

int BackboneParams::total_stride() const {
    int s = 1;
    for (const BackboneLayer& l : layers) s *= l.stride;
    return s;
}

int BackboneParams::out_channels() const {
    return layers.empty() ? 0 : layers.back().bank.out_c;
}

BackboneParams make_backbone_params(int in_channels, int feat_channels, uint64_t seed) {
    Rng rng(seed);
    auto init = [&](KernelBank& k) {
        const double limit = std::sqrt(6.0 / (static_cast<double>(k.in_c) * k.kh * k.kw));
        for (double& w : k.weights) w = rng.uniform(-limit, limit);
        for (double& b : k.bias) b = 0.0;
    };
    BackboneParams p;
    const int mid = std::max(4, feat_channels / 2);
    int channels[4] = {in_channels, mid, mid, feat_channels};
    for (int i = 0; i < 3; i++) {
        BackboneLayer layer;
        layer.bank = KernelBank(channels[i + 1], channels[i], 3, 3);
        layer.stride = 2;
        init(layer.bank);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

FrameInput FrameInput::from_pixels(Tensor3 px, int frame_index) {
    FrameInput f;
    f.pixels = std::move(px);
    f.frame_index = frame_index;
    return f;
}

FrameInput FrameInput::from_features(Tensor3 feat, int frame_index) {
    FrameInput f;
    f.features = std::move(feat);
    f.frame_index = frame_index;
    return f;
}

Tensor3 extract(const FrameInput& frame, const BackboneParams& params, BackboneCache* cache) {
    if (frame.features) return *frame.features;
    if (!frame.pixels) throw DataError("extract: frame has no payload");

    const int stride = params.total_stride();
    if (frame.pixels->h % stride != 0 || frame.pixels->w % stride != 0)
        throw ShapeError("extract: pixel grid " + frame.pixels->shape_str() +
                         " not divisible by stride " + std::to_string(stride));

    Tensor3 cur = *frame.pixels;
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    for (const BackboneLayer& layer : params.layers) {
        if (cache) cache->inputs.push_back(cur);
        Tensor3 pre = layer.stride == 1 ? conv2d(cur, layer.bank, Padding::same)
                                        : conv2d_strided(cur, layer.bank, layer.stride);
        if (cache) cache->pre.push_back(pre);
        cur = relu(pre);
    }
    return cur;
}

void extract_backward(const FrameInput& frame, const BackboneParams& params,
                      const BackboneCache& cache, const Tensor3& gout, BackboneParams& pgrads) {
    if (frame.features) return;  // pass-through path has no parameters
    Tensor3 g = gout;
    for (int i = static_cast<int>(params.layers.size()) - 1; i >= 0; i--) {
        const BackboneLayer& layer = params.layers[i];
        g = relu_backward(cache.pre[i], g);
        ConvGrads cg = layer.stride == 1
                           ? conv2d_backward(cache.inputs[i], layer.bank, Padding::same, g)
                           : conv2d_strided_backward(cache.inputs[i], layer.bank, layer.stride, g);
        for (size_t j = 0; j < cg.bank.weights.size(); j++)
            pgrads.layers[i].bank.weights[j] += cg.bank.weights[j];
        for (size_t j = 0; j < cg.bank.bias.size(); j++)
            pgrads.layers[i].bank.bias[j] += cg.bank.bias[j];
        g = std::move(cg.input);
    }
}

Tensor3 crop_window(const Tensor3& src, int cy, int cx, int size) {
    Tensor3 out(size, size, src.c);
    const int y0 = cy - size / 2;
    const int x0 = cx - size / 2;
    for (int y = 0; y < size; y++) {
        int sy = y0 + y;
        sy = sy < 0 ? 0 : (sy >= src.h ? src.h - 1 : sy);
        for (int x = 0; x < size; x++) {
            int sx = x0 + x;
            sx = sx < 0 ? 0 : (sx >= src.w ? src.w - 1 : sx);
            for (int c = 0; c < src.c; c++) out.at(y, x, c) = src.at(sy, sx, c);
        }
    }
    return out;
}

std::pair<FrameInput, FrameInput> crop_regions(const FrameInput& frame, const BoundingBox& box,
                                               int template_size, int search_size) {
    const Tensor3& src = frame.payload();
    const int cy = static_cast<int>(std::floor(box.cy + 0.5));
    const int cx = static_cast<int>(std::floor(box.cx + 0.5));
    Tensor3 tmpl = crop_window(src, cy, cx, template_size);
    Tensor3 search = crop_window(src, cy, cx, search_size);
    auto wrap = [&](Tensor3 t) {
        return frame.is_pixel() ? FrameInput::from_pixels(std::move(t), frame.frame_index)
                                : FrameInput::from_features(std::move(t), frame.frame_index);
    };
    return {wrap(std::move(tmpl)), wrap(std::move(search))};
}

}  // namespace stm
