#include "stm/svc.hpp"

#include <cmath>

#include "stm/rng.hpp"

namespace stm {

namespace {

void he_uniform(KernelBank& k, Rng& rng) {
    const double fan_in = static_cast<double>(k.in_c) * k.kh * k.kw;
    const double limit = std::sqrt(6.0 / fan_in);
    for (double& w : k.weights) w = rng.uniform(-limit, limit);
    for (double& b : k.bias) b = 0.0;
}

void check_corr_shapes(const Tensor3& z, const Tensor3& x) {
    if (z.c != x.c)
        throw ShapeError("dw_xcorr: channel mismatch, template " + z.shape_str() + " vs search " +
                         x.shape_str());
    if (z.h > x.h || z.w > x.w)
        throw ShapeError("dw_xcorr: template " + z.shape_str() + " larger than search " +
                         x.shape_str());
}

}  // namespace

SvcParams make_svc_params(int channels, int reduction, uint64_t seed) {
    if (reduction < 1 || channels % reduction != 0)
        throw ConfigError("svc: reduction " + std::to_string(reduction) +
                          " must divide channel count " + std::to_string(channels));
    Rng rng(seed);
    SvcParams p;
    p.ch.phi1 = KernelBank(channels, channels, 3, 3);
    p.ch.fc1 = KernelBank(channels / reduction, channels, 1, 1);
    p.ch.fc2 = KernelBank(channels, channels / reduction, 1, 1);
    p.phi2 = KernelBank(channels, channels, 1, 1);
    he_uniform(p.ch.phi1, rng);
    he_uniform(p.ch.fc1, rng);
    he_uniform(p.ch.fc2, rng);
    // zeroed fusion projection: the channel term starts silent and the fused
    // correlation equals the plain depth-wise response until training moves it
    return p;
}

SvcParams zeros_like(const SvcParams& p) {
    SvcParams z;
    z.ch.phi1 = KernelBank(p.ch.phi1.out_c, p.ch.phi1.in_c, p.ch.phi1.kh, p.ch.phi1.kw);
    z.ch.fc1 = KernelBank(p.ch.fc1.out_c, p.ch.fc1.in_c, 1, 1);
    z.ch.fc2 = KernelBank(p.ch.fc2.out_c, p.ch.fc2.in_c, 1, 1);
    z.phi2 = KernelBank(p.phi2.out_c, p.phi2.in_c, 1, 1);
    return z;
}

Tensor3 dw_xcorr(const Tensor3& z, const Tensor3& x) {
    check_corr_shapes(z, x);
    Tensor3 out(x.h - z.h + 1, x.w - z.w + 1, z.c);
    for (int y = 0; y < out.h; y++)
        for (int xx = 0; xx < out.w; xx++)
            for (int c = 0; c < z.c; c++) {
                double acc = 0.0;
                for (int dy = 0; dy < z.h; dy++)
                    for (int dx = 0; dx < z.w; dx++)
                        acc += z.at(dy, dx, c) * x.at(y + dy, xx + dx, c);
                out.at(y, xx, c) = acc;
            }
    return out;
}

Tensor3 dw_xcorr_f32(const Tensor3& z, const Tensor3& x) {
    check_corr_shapes(z, x);
    Tensor3 out(x.h - z.h + 1, x.w - z.w + 1, z.c);
    for (int y = 0; y < out.h; y++)
        for (int xx = 0; xx < out.w; xx++)
            for (int c = 0; c < z.c; c++) {
                float acc = 0.0f;
                for (int dy = 0; dy < z.h; dy++)
                    for (int dx = 0; dx < z.w; dx++)
                        acc += static_cast<float>(z.at(dy, dx, c)) *
                               static_cast<float>(x.at(y + dy, xx + dx, c));
                out.at(y, xx, c) = static_cast<double>(acc);
            }
    return out;
}

DwGrads dw_xcorr_backward(const Tensor3& z, const Tensor3& x, const Tensor3& gout) {
    DwGrads g;
    g.z = Tensor3(z.h, z.w, z.c);
    g.x = Tensor3(x.h, x.w, x.c);
    for (int y = 0; y < gout.h; y++)
        for (int xx = 0; xx < gout.w; xx++)
            for (int c = 0; c < z.c; c++) {
                const double go = gout.at(y, xx, c);
                for (int dy = 0; dy < z.h; dy++)
                    for (int dx = 0; dx < z.w; dx++) {
                        g.z.at(dy, dx, c) += go * x.at(y + dy, xx + dx, c);
                        g.x.at(y + dy, xx + dx, c) += go * z.at(dy, dx, c);
                    }
            }
    return g;
}

Tensor3 ch_trans(const Tensor3& input, const ChTransParams& p, int pool_kh, int pool_kw,
                 ChTransCache* cache) {
    ChTransCache local;
    ChTransCache& c = cache ? *cache : local;

    c.conv_out = conv2d(input, p.phi1, Padding::same);
    c.pooled_max = max_pool(c.conv_out, pool_kh, pool_kw, &c.argmax);
    c.pooled_avg = avg_pool(c.conv_out, pool_kh, pool_kw);

    c.hidden_max_pre = conv2d(c.pooled_max, p.fc1, Padding::valid);
    c.hidden_avg_pre = conv2d(c.pooled_avg, p.fc1, Padding::valid);
    c.hidden_max = relu(c.hidden_max_pre);
    c.hidden_avg = relu(c.hidden_avg_pre);

    Tensor3 out_max = conv2d(c.hidden_max, p.fc2, Padding::valid);
    Tensor3 out_avg = conv2d(c.hidden_avg, p.fc2, Padding::valid);
    c.out = add(out_max, out_avg);
    return c.out;
}

Tensor3 ch_trans_backward(const Tensor3& input, const ChTransParams& p, int pool_kh, int pool_kw,
                          const ChTransCache& cache, const Tensor3& gout, ChTransParams& pgrads) {
    // both branches receive the same upstream gradient
    ConvGrads g_fc2_max = conv2d_backward(cache.hidden_max, p.fc2, Padding::valid, gout);
    ConvGrads g_fc2_avg = conv2d_backward(cache.hidden_avg, p.fc2, Padding::valid, gout);
    for (size_t i = 0; i < pgrads.fc2.weights.size(); i++)
        pgrads.fc2.weights[i] += g_fc2_max.bank.weights[i] + g_fc2_avg.bank.weights[i];
    for (size_t i = 0; i < pgrads.fc2.bias.size(); i++)
        pgrads.fc2.bias[i] += g_fc2_max.bank.bias[i] + g_fc2_avg.bank.bias[i];

    Tensor3 gh_max = relu_backward(cache.hidden_max_pre, g_fc2_max.input);
    Tensor3 gh_avg = relu_backward(cache.hidden_avg_pre, g_fc2_avg.input);

    ConvGrads g_fc1_max = conv2d_backward(cache.pooled_max, p.fc1, Padding::valid, gh_max);
    ConvGrads g_fc1_avg = conv2d_backward(cache.pooled_avg, p.fc1, Padding::valid, gh_avg);
    for (size_t i = 0; i < pgrads.fc1.weights.size(); i++)
        pgrads.fc1.weights[i] += g_fc1_max.bank.weights[i] + g_fc1_avg.bank.weights[i];
    for (size_t i = 0; i < pgrads.fc1.bias.size(); i++)
        pgrads.fc1.bias[i] += g_fc1_max.bank.bias[i] + g_fc1_avg.bank.bias[i];

    Tensor3 g_conv =
        max_pool_backward(cache.conv_out, pool_kh, pool_kw, cache.argmax, g_fc1_max.input);
    Tensor3 g_conv_avg =
        avg_pool_backward(cache.conv_out.h, cache.conv_out.w, pool_kh, pool_kw, g_fc1_avg.input);
    g_conv = add(g_conv, g_conv_avg);

    ConvGrads g_phi1 = conv2d_backward(input, p.phi1, Padding::same, g_conv);
    for (size_t i = 0; i < pgrads.phi1.weights.size(); i++)
        pgrads.phi1.weights[i] += g_phi1.bank.weights[i];
    for (size_t i = 0; i < pgrads.phi1.bias.size(); i++)
        pgrads.phi1.bias[i] += g_phi1.bank.bias[i];

    return g_phi1.input;
}

Tensor3 channel_weights(const Tensor3& tz, const Tensor3& tx, const KernelBank& phi2) {
    if (tz.h != 1 || tz.w != 1)
        throw ShapeError("channel_weights: template descriptor must be 1x1xC, got " +
                         tz.shape_str());
    Tensor3 sum = broadcast_add(tx, tz);
    return conv2d(sum, phi2, Padding::valid);
}

Tensor3 svc_corr(const Tensor3& z, const Tensor3& x, const SvcParams& p, SvcCache* cache) {
    SvcCache local;
    SvcCache& c = cache ? *cache : local;

    c.spatial = dw_xcorr(z, x);
    c.tz = ch_trans(z, p.ch, z.h, z.w, &c.cz);
    c.tx = ch_trans(x, p.ch, z.h, z.w, &c.cx);
    c.descr_sum = broadcast_add(c.tx, c.tz);
    c.weights = conv2d(c.descr_sum, p.phi2, Padding::valid);
    return add(c.weights, c.spatial);
}

SvcGrads svc_corr_backward(const Tensor3& z, const Tensor3& x, const SvcParams& p,
                           const SvcCache& cache, const Tensor3& gout) {
    SvcGrads g;
    g.params = zeros_like(p);

    // additive fusion: the same gradient reaches both branches
    DwGrads g_dw = dw_xcorr_backward(z, x, gout);

    ConvGrads g_phi2 = conv2d_backward(cache.descr_sum, p.phi2, Padding::valid, gout);
    g.params.phi2 = g_phi2.bank;

    Tensor3 g_tx = g_phi2.input;
    Tensor3 g_tz = spatial_sum(g_phi2.input);

    Tensor3 g_z_ch = ch_trans_backward(z, p.ch, z.h, z.w, cache.cz, g_tz, g.params.ch);
    Tensor3 g_x_ch = ch_trans_backward(x, p.ch, z.h, z.w, cache.cx, g_tx, g.params.ch);

    g.z = add(g_dw.z, g_z_ch);
    g.x = add(g_dw.x, g_x_ch);
    return g;
}

}  // namespace stm
