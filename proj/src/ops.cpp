#include "stm/ops.hpp"

#include <algorithm>
#include <cmath>

namespace stm {

namespace {

void check_conv_shapes(const Tensor3& input, const KernelBank& bank, Padding pad) {
    if (bank.in_c != input.c)
        throw ShapeError("conv2d: input channels " + std::to_string(input.c) +
                         " != bank in_channels " + std::to_string(bank.in_c) + " (input " +
                         input.shape_str() + ", bank " + bank.shape_str() + ")");
    if (pad == Padding::valid && (bank.kh > input.h || bank.kw > input.w))
        throw ShapeError("conv2d: kernel " + bank.shape_str() + " larger than input " +
                         input.shape_str());
}

}  // namespace

Tensor3 conv2d(const Tensor3& input, const KernelBank& bank, Padding pad) {
    check_conv_shapes(input, bank, pad);
    const int pt = pad == Padding::same ? (bank.kh - 1) / 2 : 0;
    const int pl = pad == Padding::same ? (bank.kw - 1) / 2 : 0;
    const int oh = pad == Padding::same ? input.h : input.h - bank.kh + 1;
    const int ow = pad == Padding::same ? input.w : input.w - bank.kw + 1;

    Tensor3 out(oh, ow, bank.out_c);
    for (int y = 0; y < oh; y++) {
        for (int x = 0; x < ow; x++) {
            for (int oc = 0; oc < bank.out_c; oc++) {
                double acc = bank.bias[oc];
                for (int ky = 0; ky < bank.kh; ky++) {
                    const int iy = y + ky - pt;
                    if (iy < 0 || iy >= input.h) continue;
                    for (int kx = 0; kx < bank.kw; kx++) {
                        const int ix = x + kx - pl;
                        if (ix < 0 || ix >= input.w) continue;
                        for (int ic = 0; ic < input.c; ic++)
                            acc += input.at(iy, ix, ic) * bank.wat(oc, ic, ky, kx);
                    }
                }
                out.at(y, x, oc) = acc;
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor3& input, const KernelBank& bank, Padding pad,
                          const Tensor3& gout) {
    check_conv_shapes(input, bank, pad);
    const int pt = pad == Padding::same ? (bank.kh - 1) / 2 : 0;
    const int pl = pad == Padding::same ? (bank.kw - 1) / 2 : 0;

    ConvGrads g;
    g.input = Tensor3(input.h, input.w, input.c);
    g.bank = KernelBank(bank.out_c, bank.in_c, bank.kh, bank.kw);

    for (int y = 0; y < gout.h; y++) {
        for (int x = 0; x < gout.w; x++) {
            for (int oc = 0; oc < bank.out_c; oc++) {
                const double go = gout.at(y, x, oc);
                g.bank.bias[oc] += go;
                for (int ky = 0; ky < bank.kh; ky++) {
                    const int iy = y + ky - pt;
                    if (iy < 0 || iy >= input.h) continue;
                    for (int kx = 0; kx < bank.kw; kx++) {
                        const int ix = x + kx - pl;
                        if (ix < 0 || ix >= input.w) continue;
                        for (int ic = 0; ic < input.c; ic++) {
                            g.bank.wat(oc, ic, ky, kx) += go * input.at(iy, ix, ic);
                            g.input.at(iy, ix, ic) += go * bank.wat(oc, ic, ky, kx);
                        }
                    }
                }
            }
        }
    }
    return g;
}

Tensor3 conv2d_strided(const Tensor3& input, const KernelBank& bank, int stride) {
    check_conv_shapes(input, bank, Padding::same);
    const int pt = (bank.kh - 1) / 2;
    const int pl = (bank.kw - 1) / 2;
    const int oh = (input.h + stride - 1) / stride;
    const int ow = (input.w + stride - 1) / stride;

    Tensor3 out(oh, ow, bank.out_c);
    for (int y = 0; y < oh; y++) {
        for (int x = 0; x < ow; x++) {
            for (int oc = 0; oc < bank.out_c; oc++) {
                double acc = bank.bias[oc];
                for (int ky = 0; ky < bank.kh; ky++) {
                    const int iy = y * stride + ky - pt;
                    if (iy < 0 || iy >= input.h) continue;
                    for (int kx = 0; kx < bank.kw; kx++) {
                        const int ix = x * stride + kx - pl;
                        if (ix < 0 || ix >= input.w) continue;
                        for (int ic = 0; ic < input.c; ic++)
                            acc += input.at(iy, ix, ic) * bank.wat(oc, ic, ky, kx);
                    }
                }
                out.at(y, x, oc) = acc;
            }
        }
    }
    return out;
}

ConvGrads conv2d_strided_backward(const Tensor3& input, const KernelBank& bank, int stride,
                                  const Tensor3& gout) {
    const int pt = (bank.kh - 1) / 2;
    const int pl = (bank.kw - 1) / 2;

    ConvGrads g;
    g.input = Tensor3(input.h, input.w, input.c);
    g.bank = KernelBank(bank.out_c, bank.in_c, bank.kh, bank.kw);

    for (int y = 0; y < gout.h; y++) {
        for (int x = 0; x < gout.w; x++) {
            for (int oc = 0; oc < bank.out_c; oc++) {
                const double go = gout.at(y, x, oc);
                g.bank.bias[oc] += go;
                for (int ky = 0; ky < bank.kh; ky++) {
                    const int iy = y * stride + ky - pt;
                    if (iy < 0 || iy >= input.h) continue;
                    for (int kx = 0; kx < bank.kw; kx++) {
                        const int ix = x * stride + kx - pl;
                        if (ix < 0 || ix >= input.w) continue;
                        for (int ic = 0; ic < input.c; ic++) {
                            g.bank.wat(oc, ic, ky, kx) += go * input.at(iy, ix, ic);
                            g.input.at(iy, ix, ic) += go * bank.wat(oc, ic, ky, kx);
                        }
                    }
                }
            }
        }
    }
    return g;
}

Tensor3 max_pool(const Tensor3& input, int kh, int kw, std::vector<int>* argmax) {
    if (kh > input.h || kw > input.w || kh < 1 || kw < 1)
        throw ShapeError("max_pool: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " does not fit input " + input.shape_str());
    const int oh = input.h - kh + 1;
    const int ow = input.w - kw + 1;
    Tensor3 out(oh, ow, input.c);
    if (argmax) argmax->assign(out.size(), 0);

    for (int y = 0; y < oh; y++) {
        for (int x = 0; x < ow; x++) {
            for (int c = 0; c < input.c; c++) {
                double best = input.at(y, x, c);
                int best_idx = (y * input.w + x) * input.c + c;
                for (int ky = 0; ky < kh; ky++) {
                    for (int kx = 0; kx < kw; kx++) {
                        const double v = input.at(y + ky, x + kx, c);
                        if (v > best) {
                            best = v;
                            best_idx = ((y + ky) * input.w + (x + kx)) * input.c + c;
                        }
                    }
                }
                out.at(y, x, c) = best;
                if (argmax) (*argmax)[(static_cast<size_t>(y) * ow + x) * input.c + c] = best_idx;
            }
        }
    }
    return out;
}

Tensor3 avg_pool(const Tensor3& input, int kh, int kw) {
    if (kh > input.h || kw > input.w || kh < 1 || kw < 1)
        throw ShapeError("avg_pool: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " does not fit input " + input.shape_str());
    const int oh = input.h - kh + 1;
    const int ow = input.w - kw + 1;
    const double inv = 1.0 / (static_cast<double>(kh) * kw);
    Tensor3 out(oh, ow, input.c);

    for (int y = 0; y < oh; y++) {
        for (int x = 0; x < ow; x++) {
            for (int c = 0; c < input.c; c++) {
                double acc = 0.0;
                for (int ky = 0; ky < kh; ky++)
                    for (int kx = 0; kx < kw; kx++) acc += input.at(y + ky, x + kx, c);
                out.at(y, x, c) = acc * inv;
            }
        }
    }
    return out;
}

Tensor3 max_pool_backward(const Tensor3& input, int kh, int kw, const std::vector<int>& argmax,
                          const Tensor3& gout) {
    Tensor3 g(input.h, input.w, input.c);
    for (size_t i = 0; i < gout.size(); i++) g.data[argmax[i]] += gout.data[i];
    (void)kh;
    (void)kw;
    return g;
}

Tensor3 avg_pool_backward(int in_h, int in_w, int kh, int kw, const Tensor3& gout) {
    Tensor3 g(in_h, in_w, gout.c);
    const double inv = 1.0 / (static_cast<double>(kh) * kw);
    for (int y = 0; y < gout.h; y++)
        for (int x = 0; x < gout.w; x++)
            for (int c = 0; c < gout.c; c++) {
                const double go = gout.at(y, x, c) * inv;
                for (int ky = 0; ky < kh; ky++)
                    for (int kx = 0; kx < kw; kx++) g.at(y + ky, x + kx, c) += go;
            }
    return g;
}

Tensor3 relu(const Tensor3& input) {
    Tensor3 out = input;
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    return out;
}

Tensor3 relu_backward(const Tensor3& pre, const Tensor3& gout) {
    Tensor3 g = gout;
    for (size_t i = 0; i < g.size(); i++)
        if (pre.data[i] <= 0.0) g.data[i] = 0.0;
    return g;
}

Tensor3 add(const Tensor3& a, const Tensor3& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor3 out = a;
    for (size_t i = 0; i < out.size(); i++) out.data[i] += b.data[i];
    return out;
}

Tensor3 broadcast_add(const Tensor3& a, const Tensor3& b) {
    if (b.h != 1 || b.w != 1 || b.c != a.c)
        throw ShapeError("broadcast_add: expected 1x1x" + std::to_string(a.c) +
                         " broadcast term, got " + b.shape_str());
    Tensor3 out = a;
    for (int y = 0; y < a.h; y++)
        for (int x = 0; x < a.w; x++)
            for (int c = 0; c < a.c; c++) out.at(y, x, c) += b.at(0, 0, c);
    return out;
}

Tensor3 spatial_sum(const Tensor3& gout) {
    Tensor3 g(1, 1, gout.c);
    for (int y = 0; y < gout.h; y++)
        for (int x = 0; x < gout.w; x++)
            for (int c = 0; c < gout.c; c++) g.at(0, 0, c) += gout.at(y, x, c);
    return g;
}

Tensor2 mul(const Tensor2& a, const Tensor2& b) {
    if (!a.same_shape(b))
        throw ShapeError("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor2 out = a;
    for (size_t i = 0; i < out.size(); i++) out.data[i] *= b.data[i];
    return out;
}

Tensor2 circular_shift(const Tensor2& map, int dy, int dx) {
    Tensor2 out(map.h, map.w);
    const int h = map.h, w = map.w;
    auto wrap = [](int v, int n) { return ((v % n) + n) % n; };
    for (int y = 0; y < h; y++) {
        const int sy = wrap(y - dy, h);
        for (int x = 0; x < w; x++) out.at(y, x) = map.at(sy, wrap(x - dx, w));
    }
    return out;
}

std::vector<PeakLocation> topk_peaks(const Tensor2& map, int k) {
    const int n = map.h * map.w;
    if (k < 1 || k > n)
        throw ConfigError("topk_peaks: K=" + std::to_string(k) + " out of range 1.." +
                          std::to_string(n));
    std::vector<int> idx(n);
    for (int i = 0; i < n; i++) idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (map.data[a] != map.data[b]) return map.data[a] > map.data[b];
        return a < b;
    });
    std::vector<PeakLocation> peaks(k);
    for (int i = 0; i < k; i++)
        peaks[i] = PeakLocation{idx[i] / map.w, idx[i] % map.w, map.data[idx[i]]};
    return peaks;
}

Tensor2 hanning2d(int h, int w) {
    if (h < 1 || w < 1) throw ConfigError("hanning2d: dims must be positive");
    auto hann1d = [](int n) {
        std::vector<double> v(n, 1.0);
        if (n > 1) {
            for (int i = 0; i < n; i++)
                v[i] = 0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * i / (n - 1)));
        }
        return v;
    };
    const std::vector<double> wy = hann1d(h);
    const std::vector<double> wx = hann1d(w);
    Tensor2 out(h, w);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) out.at(y, x) = wy[y] * wx[x];
    return out;
}

Tensor2 normalize_distribution(const Tensor2& map, double eps) {
    if (eps <= 0.0) throw ConfigError("normalize_distribution: eps must be positive");
    const size_t n = map.size();
    Tensor2 out(map.h, map.w);
    double sum = 0.0;
    for (size_t i = 0; i < n; i++) {
        const double v = map.data[i] > 0.0 ? map.data[i] : 0.0;
        out.data[i] = v;
        sum += v;
    }
    if (sum == 0.0) {
        const double u = 1.0 / static_cast<double>(n);
        for (size_t i = 0; i < n; i++) out.data[i] = u;
        return out;
    }
    const double denom = 1.0 + eps * static_cast<double>(n);
    for (size_t i = 0; i < n; i++) out.data[i] = (out.data[i] / sum + eps) / denom;
    return out;
}

Tensor2 normalize_distribution_backward(const Tensor2& map, double eps, const Tensor2& gout) {
    const size_t n = map.size();
    Tensor2 g(map.h, map.w);
    double sum = 0.0;
    std::vector<double> v(n);
    for (size_t i = 0; i < n; i++) {
        v[i] = map.data[i] > 0.0 ? map.data[i] : 0.0;
        sum += v[i];
    }
    if (sum == 0.0) return g;  // uniform fallback is constant

    const double denom = 1.0 + eps * static_cast<double>(n);
    // out_i = (v_i / sum + eps) / denom
    double dot = 0.0;  // sum_j gout_j * v_j
    for (size_t i = 0; i < n; i++) dot += gout.data[i] * v[i];
    for (size_t i = 0; i < n; i++) {
        if (map.data[i] <= 0.0) continue;  // clamped coords get no gradient
        g.data[i] = (gout.data[i] / sum - dot / (sum * sum)) / denom;
    }
    return g;
}

}  // namespace stm
