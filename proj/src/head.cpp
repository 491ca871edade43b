#include "stm/head.hpp"

#include <algorithm>
#include <cmath>

#include "stm/rng.hpp"

namespace stm {

namespace {

constexpr double kClampEps = 1e-7;

void he_uniform(KernelBank& k, Rng& rng) {
    const double fan_in = static_cast<double>(k.in_c) * k.kh * k.kw;
    const double limit = std::sqrt(6.0 / fan_in);
    for (double& w : k.weights) w = rng.uniform(-limit, limit);
    for (double& b : k.bias) b = 0.0;
}

}  // namespace

HeadParams make_head_params(int channels, uint64_t seed) {
    Rng rng(seed);
    HeadParams p;
    p.trunk = KernelBank(channels, channels, 3, 3);
    p.heat = KernelBank(1, channels, 1, 1);
    p.offset = KernelBank(2, channels, 1, 1);
    p.size = KernelBank(2, channels, 1, 1);
    he_uniform(p.trunk, rng);
    // branch heads start neutral: heatmap at a low prior, offsets at zero,
    // sizes at one
    p.heat.bias[0] = -2.19;
    return p;
}

HeadParams zeros_like(const HeadParams& p) {
    HeadParams z;
    z.trunk = KernelBank(p.trunk.out_c, p.trunk.in_c, p.trunk.kh, p.trunk.kw);
    z.heat = KernelBank(1, p.heat.in_c, 1, 1);
    z.offset = KernelBank(2, p.offset.in_c, 1, 1);
    z.size = KernelBank(2, p.size.in_c, 1, 1);
    return z;
}

HeadOutputs head_forward(const Tensor3& resp, const HeadParams& p, HeadCache* cache) {
    HeadCache local;
    HeadCache& c = cache ? *cache : local;

    c.trunk_pre = conv2d(resp, p.trunk, Padding::same);
    c.trunk_act = relu(c.trunk_pre);

    Tensor3 heat_raw = conv2d(c.trunk_act, p.heat, Padding::valid);
    c.heat_logit = Tensor2(heat_raw.h, heat_raw.w);
    for (size_t i = 0; i < heat_raw.size(); i++) c.heat_logit.data[i] = heat_raw.data[i];

    HeadOutputs outs;
    outs.heat = Tensor2(heat_raw.h, heat_raw.w);
    for (size_t i = 0; i < outs.heat.size(); i++)
        outs.heat.data[i] = 1.0 / (1.0 + std::exp(-c.heat_logit.data[i]));

    outs.offset = conv2d(c.trunk_act, p.offset, Padding::valid);
    c.size_raw = conv2d(c.trunk_act, p.size, Padding::valid);
    outs.size = c.size_raw;
    for (double& v : outs.size.data) v = std::exp(v);
    return outs;
}

HeadGrads head_backward(const Tensor3& resp, const HeadParams& p, const HeadCache& cache,
                        const HeadOutputs& outs, const Tensor2& gheat, const Tensor3& goffset,
                        const Tensor3& gsize) {
    // logistic and exponential chains
    Tensor3 g_heat_raw(gheat.h, gheat.w, 1);
    for (size_t i = 0; i < gheat.size(); i++) {
        const double y = outs.heat.data[i];
        g_heat_raw.data[i] = gheat.data[i] * y * (1.0 - y);
    }
    Tensor3 g_size_raw = gsize;
    for (size_t i = 0; i < g_size_raw.size(); i++) g_size_raw.data[i] *= outs.size.data[i];

    ConvGrads g_heat = conv2d_backward(cache.trunk_act, p.heat, Padding::valid, g_heat_raw);
    ConvGrads g_off = conv2d_backward(cache.trunk_act, p.offset, Padding::valid, goffset);
    ConvGrads g_size = conv2d_backward(cache.trunk_act, p.size, Padding::valid, g_size_raw);

    Tensor3 g_act = add(add(g_heat.input, g_off.input), g_size.input);
    Tensor3 g_pre = relu_backward(cache.trunk_pre, g_act);
    ConvGrads g_trunk = conv2d_backward(resp, p.trunk, Padding::same, g_pre);

    HeadGrads g;
    g.resp = g_trunk.input;
    g.params.trunk = g_trunk.bank;
    g.params.heat = g_heat.bank;
    g.params.offset = g_off.bank;
    g.params.size = g_size.bank;
    return g;
}

double gaussian_radius(double w, double h, double min_overlap) {
    const double a1 = 1.0;
    const double b1 = h + w;
    const double c1 = w * h * (1.0 - min_overlap) / (1.0 + min_overlap);
    const double r1 = (b1 + std::sqrt(b1 * b1 - 4.0 * a1 * c1)) / 2.0;

    const double a2 = 4.0;
    const double b2 = 2.0 * (h + w);
    const double c2 = (1.0 - min_overlap) * w * h;
    const double r2 = (b2 + std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / 2.0;

    const double a3 = 4.0 * min_overlap;
    const double b3 = -2.0 * min_overlap * (h + w);
    const double c3 = (min_overlap - 1.0) * w * h;
    const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / 2.0;

    return std::min({r1, r2, r3});
}

Labels make_labels(const BoundingBox& box, int map_h, int map_w, int stride) {
    if (box.w <= 0.0 || box.h <= 0.0)
        throw DataError("make_labels: box must have positive size");
    Labels lab;
    const double fx = box.cx / stride;
    const double fy = box.cy / stride;
    lab.cx_cell = static_cast<int>(std::floor(fx));
    lab.cy_cell = static_cast<int>(std::floor(fy));
    if (lab.cx_cell < 0 || lab.cx_cell >= map_w || lab.cy_cell < 0 || lab.cy_cell >= map_h)
        throw DataError("make_labels: box center (" + std::to_string(box.cx) + "," +
                        std::to_string(box.cy) + ") maps outside the " + std::to_string(map_h) +
                        "x" + std::to_string(map_w) + " grid");
    lab.off_x = fx - lab.cx_cell;
    lab.off_y = fy - lab.cy_cell;
    lab.size_w = box.w / stride;
    lab.size_h = box.h / stride;
    lab.sigma = std::max(1.0, gaussian_radius(lab.size_w, lab.size_h) / 3.0);

    lab.heat = Tensor2(map_h, map_w);
    const double inv = 1.0 / (2.0 * lab.sigma * lab.sigma);
    for (int y = 0; y < map_h; y++)
        for (int x = 0; x < map_w; x++) {
            const double dx = x - lab.cx_cell;
            const double dy = y - lab.cy_cell;
            lab.heat.at(y, x) = std::exp(-(dx * dx + dy * dy) * inv);
        }
    return lab;
}

FocalResult focal_loss(const Tensor2& pred, const Tensor2& target, double alpha, double beta) {
    if (!pred.same_shape(target))
        throw ShapeError("focal_loss: shape mismatch " + pred.shape_str() + " vs " +
                         target.shape_str());
    FocalResult res;
    res.grad = Tensor2(pred.h, pred.w);
    int n_pos = 0;
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); i++) {
        const double raw = pred.data[i];
        const double p = std::clamp(raw, kClampEps, 1.0 - kClampEps);
        const double y = target.data[i];
        double grad;
        if (y == 1.0) {
            n_pos++;
            const double q = 1.0 - p;
            acc += -std::pow(q, alpha) * std::log(p);
            grad = alpha * std::pow(q, alpha - 1.0) * std::log(p) - std::pow(q, alpha) / p;
        } else {
            const double w = std::pow(1.0 - y, beta);
            acc += -w * std::pow(p, alpha) * std::log(1.0 - p);
            grad = -w * (alpha * std::pow(p, alpha - 1.0) * std::log(1.0 - p) -
                         std::pow(p, alpha) / (1.0 - p));
        }
        // clamped coordinates are flat
        res.grad.data[i] = (raw < kClampEps || raw > 1.0 - kClampEps) ? 0.0 : grad;
    }
    const double norm = 1.0 / std::max(1, n_pos);
    res.loss = acc * norm;
    for (double& g : res.grad.data) g *= norm;
    return res;
}

BaseLossResult base_loss(const HeadOutputs& outs, const Labels& labels, double lambda_off,
                         double lambda_size) {
    BaseLossResult res;
    FocalResult focal = focal_loss(outs.heat, labels.heat);
    res.cls = focal.loss;
    res.gheat = focal.grad;
    res.goffset = Tensor3(outs.offset.h, outs.offset.w, 2);
    res.gsize = Tensor3(outs.size.h, outs.size.w, 2);

    const int cy = labels.cy_cell, cx = labels.cx_cell;
    const double d_ox = outs.offset.at(cy, cx, 0) - labels.off_x;
    const double d_oy = outs.offset.at(cy, cx, 1) - labels.off_y;
    const double d_sw = outs.size.at(cy, cx, 0) - labels.size_w;
    const double d_sh = outs.size.at(cy, cx, 1) - labels.size_h;
    res.off = std::fabs(d_ox) + std::fabs(d_oy);
    res.size = std::fabs(d_sw) + std::fabs(d_sh);

    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    res.goffset.at(cy, cx, 0) = lambda_off * sign(d_ox);
    res.goffset.at(cy, cx, 1) = lambda_off * sign(d_oy);
    res.gsize.at(cy, cx, 0) = lambda_size * sign(d_sw);
    res.gsize.at(cy, cx, 1) = lambda_size * sign(d_sh);

    res.total = res.cls + lambda_off * res.off + lambda_size * res.size;
    return res;
}

BoundingBox decode_box(const HeadOutputs& outs, const PeakLocation& loc, int stride) {
    BoundingBox box;
    box.cx = (loc.x + outs.offset.at(loc.y, loc.x, 0)) * stride;
    box.cy = (loc.y + outs.offset.at(loc.y, loc.x, 1)) * stride;
    box.w = outs.size.at(loc.y, loc.x, 0) * stride;
    box.h = outs.size.at(loc.y, loc.x, 1) * stride;
    return box;
}

}  // namespace stm
