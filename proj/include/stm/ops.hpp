#pragma once

#include <vector>

#include "stm/tensor.hpp"

namespace stm {

enum class Padding { valid, same };

// Stride-1 convolution. `valid` gives (H-kh+1) x (W-kw+1); `same` zero-pads
// symmetrically with the smaller half on top/left and keeps H x W.
// Accumulation order is fixed, so results are bit-reproducible.
Tensor3 conv2d(const Tensor3& input, const KernelBank& bank, Padding pad);

struct ConvGrads {
    Tensor3 input;
    KernelBank bank;
};
ConvGrads conv2d_backward(const Tensor3& input, const KernelBank& bank, Padding pad,
                          const Tensor3& gout);

// Strided same-padded convolution for the backbone stack.
Tensor3 conv2d_strided(const Tensor3& input, const KernelBank& bank, int stride);
ConvGrads conv2d_strided_backward(const Tensor3& input, const KernelBank& bank, int stride,
                                  const Tensor3& gout);

// Pooling, stride 1, valid extent. Output (H-kh+1) x (W-kw+1) x C.
// max_pool optionally records the flat source index of each window maximum
// (first maximum in row-major window order) for the backward pass.
Tensor3 max_pool(const Tensor3& input, int kh, int kw, std::vector<int>* argmax = nullptr);
Tensor3 avg_pool(const Tensor3& input, int kh, int kw);
Tensor3 max_pool_backward(const Tensor3& input, int kh, int kw, const std::vector<int>& argmax,
                          const Tensor3& gout);
Tensor3 avg_pool_backward(int in_h, int in_w, int kh, int kw, const Tensor3& gout);

Tensor3 relu(const Tensor3& input);
Tensor3 relu_backward(const Tensor3& pre, const Tensor3& gout);

Tensor3 add(const Tensor3& a, const Tensor3& b);
// b has spatial size 1x1 and is broadcast over a's grid.
Tensor3 broadcast_add(const Tensor3& a, const Tensor3& b);
// Gradient of broadcast_add w.r.t. b: spatial sum of gout into a 1x1xC map.
Tensor3 spatial_sum(const Tensor3& gout);

Tensor2 mul(const Tensor2& a, const Tensor2& b);

// out[y][x] = in[(y-dy) mod H][(x-dx) mod W]; bijective for any dy, dx.
Tensor2 circular_shift(const Tensor2& map, int dy, int dx);

// K best scores in non-increasing order, ties broken by smaller row-major
// index. First element is the global argmax.
std::vector<PeakLocation> topk_peaks(const Tensor2& map, int k);

// Outer product of 1-D Hann windows; 1x1 degenerates to [1].
Tensor2 hanning2d(int h, int w);

// Clamp at zero, scale to unit sum, then mix in an eps floor and renormalize:
// out = (v/sum(v) + eps) / (1 + eps*H*W). All-zero input gives the uniform map.
Tensor2 normalize_distribution(const Tensor2& map, double eps);
Tensor2 normalize_distribution_backward(const Tensor2& map, double eps, const Tensor2& gout);

}  // namespace stm
