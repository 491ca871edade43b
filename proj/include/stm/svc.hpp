#pragma once

#include <cstdint>
#include <vector>

#include "stm/ops.hpp"
#include "stm/tensor.hpp"

namespace stm {

// Channel transform: 3x3 conv, dual max/avg pooling over template-sized
// windows, then a shared two-layer bottleneck applied as 1x1 convolutions.
struct ChTransParams {
    KernelBank phi1;  // 3x3, C -> C, same padding
    KernelBank fc1;   // 1x1, C -> C/r
    KernelBank fc2;   // 1x1, C/r -> C
};

struct SvcParams {
    ChTransParams ch;
    KernelBank phi2;  // 1x1, C -> C
};

SvcParams make_svc_params(int channels, int reduction, uint64_t seed);
SvcParams zeros_like(const SvcParams& p);

// Depth-wise valid cross correlation of template z over search x.
Tensor3 dw_xcorr(const Tensor3& z, const Tensor3& x);
// Same kernel with float32 accumulation, for the single-precision runtime.
Tensor3 dw_xcorr_f32(const Tensor3& z, const Tensor3& x);

struct DwGrads {
    Tensor3 z;
    Tensor3 x;
};
DwGrads dw_xcorr_backward(const Tensor3& z, const Tensor3& x, const Tensor3& gout);

struct ChTransCache {
    Tensor3 conv_out;           // phi1 output
    Tensor3 pooled_max, pooled_avg;
    std::vector<int> argmax;
    Tensor3 hidden_max_pre, hidden_avg_pre;  // fc1 outputs before rectifier
    Tensor3 hidden_max, hidden_avg;
    Tensor3 out;
};

// Pooled channel descriptors: a template-sized input yields a single 1x1xC
// descriptor, a search input yields one descriptor per subwindow.
Tensor3 ch_trans(const Tensor3& input, const ChTransParams& p, int pool_kh, int pool_kw,
                 ChTransCache* cache = nullptr);
// Accumulates parameter gradients into pgrads (shared across branches).
Tensor3 ch_trans_backward(const Tensor3& input, const ChTransParams& p, int pool_kh, int pool_kw,
                          const ChTransCache& cache, const Tensor3& gout, ChTransParams& pgrads);

// Broadcast sum of template descriptor onto the search descriptor field,
// then 1x1 conv: one weight vector per response location.
Tensor3 channel_weights(const Tensor3& tz, const Tensor3& tx, const KernelBank& phi2);

struct SvcCache {
    ChTransCache cz, cx;
    Tensor3 spatial;      // dw_xcorr result
    Tensor3 tz, tx;
    Tensor3 descr_sum;    // broadcast sum fed to phi2
    Tensor3 weights;      // channel weight field
};

// Fused correlation: channel weight field added element-wise onto DW-XCorr.
Tensor3 svc_corr(const Tensor3& z, const Tensor3& x, const SvcParams& p,
                 SvcCache* cache = nullptr);

struct SvcGrads {
    Tensor3 z;
    Tensor3 x;
    SvcParams params;
};
SvcGrads svc_corr_backward(const Tensor3& z, const Tensor3& x, const SvcParams& p,
                           const SvcCache& cache, const Tensor3& gout);

}  // namespace stm
