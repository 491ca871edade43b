#include "stm/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "stm/arm.hpp"
#include "stm/rng.hpp"
#include "stm/train.hpp"

namespace stm {

namespace {

double rel_err(double analytic, double numeric) {
    const double denom = std::max(1e-3, std::fabs(analytic) + std::fabs(numeric));
    return std::fabs(analytic - numeric) / denom;
}

struct Checker {
    std::function<double()> loss;
    double step;
    int limit;
    Rng pick;
    double worst = 0.0;
    int coords = 0;

    Checker(std::function<double()> l, double s, int lim, uint64_t seed)
        : loss(std::move(l)), step(s), limit(lim), pick(seed) {}

    void coordinate(double& coord, double analytic) {
        const double saved = coord;
        coord = saved + step;
        const double fp = loss();
        coord = saved - step;
        const double fm = loss();
        coord = saved;
        const double fd = (fp - fm) / (2.0 * step);
        worst = std::max(worst, rel_err(analytic, fd));
        coords++;
    }

    void tensor(std::vector<double>& values, const std::vector<double>& analytic) {
        const int n = static_cast<int>(values.size());
        if (n <= limit) {
            for (int i = 0; i < n; i++) coordinate(values[i], analytic[i]);
            return;
        }
        for (int s = 0; s < limit; s++) {
            const int i = pick.uniform_int(0, n - 1);
            coordinate(values[i], analytic[i]);
        }
    }

    void bank(KernelBank& k, const KernelBank& g) {
        tensor(k.weights, g.weights);
        tensor(k.bias, g.bias);
    }
};

Tensor3 random_t3(int h, int w, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor3 t(h, w, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

void jitter(KernelBank& k, Rng& rng, double scale = 0.3) {
    for (double& v : k.weights) v += rng.uniform(-scale, scale);
    for (double& v : k.bias) v += rng.uniform(-scale, scale);
}

Tensor2 random_t2(int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor2 t(h, w);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

double weighted_sum(const Tensor3& t, const Tensor3& r) {
    double acc = 0.0;
    for (size_t i = 0; i < t.size(); i++) acc += t.data[i] * r.data[i];
    return acc;
}

GradCheckReport check_core(uint64_t seed, double step, int limit) {
    Rng rng(seed ^ 0xc0de);
    Checker chk(nullptr, step, limit, seed + 1);

    {  // valid and same convolution, all gradient groups
        for (Padding pad : {Padding::valid, Padding::same}) {
            Tensor3 in = random_t3(4, 4, 2, rng);
            KernelBank k(3, 2, 3, 3);
            for (double& v : k.weights) v = rng.uniform(-1.0, 1.0);
            for (double& v : k.bias) v = rng.uniform(-1.0, 1.0);
            Tensor3 r = pad == Padding::valid ? random_t3(2, 2, 3, rng) : random_t3(4, 4, 3, rng);
            chk.loss = [&]() { return weighted_sum(conv2d(in, k, pad), r); };
            ConvGrads g = conv2d_backward(in, k, pad, r);
            chk.tensor(in.data, g.input.data);
            chk.bank(k, g.bank);
        }
    }
    {  // pooling
        Tensor3 in = random_t3(5, 5, 2, rng);
        Tensor3 r = random_t3(3, 4, 2, rng);
        chk.loss = [&]() { return weighted_sum(max_pool(in, 3, 2), r); };
        std::vector<int> argmax;
        max_pool(in, 3, 2, &argmax);
        Tensor3 g = max_pool_backward(in, 3, 2, argmax, r);
        chk.tensor(in.data, g.data);

        chk.loss = [&]() { return weighted_sum(avg_pool(in, 3, 2), r); };
        Tensor3 ga = avg_pool_backward(5, 5, 3, 2, r);
        chk.tensor(in.data, ga.data);
    }
    {  // normalization
        Tensor2 m = random_t2(3, 4, rng, 0.1, 2.0);
        Tensor2 r = random_t2(3, 4, rng);
        chk.loss = [&]() {
            Tensor2 o = normalize_distribution(m, 1e-8);
            double acc = 0.0;
            for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
            return acc;
        };
        Tensor2 g = normalize_distribution_backward(m, 1e-8, r);
        chk.tensor(m.data, g.data);
    }
    {  // depth-wise correlation
        Tensor3 z = random_t3(2, 2, 3, rng);
        Tensor3 x = random_t3(5, 5, 3, rng);
        Tensor3 r = random_t3(4, 4, 3, rng);
        chk.loss = [&]() { return weighted_sum(dw_xcorr(z, x), r); };
        DwGrads g = dw_xcorr_backward(z, x, r);
        chk.tensor(z.data, g.z.data);
        chk.tensor(x.data, g.x.data);
    }
    return {"core", chk.worst, chk.coords};
}

GradCheckReport check_svc(uint64_t seed, double step, int limit) {
    Rng rng(seed ^ 0x57c);
    SvcParams p = make_svc_params(8, 4, seed + 11);
    jitter(p.phi2, rng);
    Tensor3 z = random_t3(3, 3, 8, rng);
    Tensor3 x = random_t3(6, 6, 8, rng);
    Tensor3 r = random_t3(4, 4, 8, rng);

    Checker chk([&]() { return weighted_sum(svc_corr(z, x, p), r); }, step, limit, seed + 2);
    SvcCache cache;
    svc_corr(z, x, p, &cache);
    SvcGrads g = svc_corr_backward(z, x, p, cache, r);
    chk.tensor(z.data, g.z.data);
    chk.tensor(x.data, g.x.data);
    chk.bank(p.ch.phi1, g.params.ch.phi1);
    chk.bank(p.ch.fc1, g.params.ch.fc1);
    chk.bank(p.ch.fc2, g.params.ch.fc2);
    chk.bank(p.phi2, g.params.phi2);
    return {"svc", chk.worst, chk.coords};
}

GradCheckReport check_head(uint64_t seed, double step, int limit) {
    Rng rng(seed ^ 0x4ead);
    HeadParams p = make_head_params(8, seed + 21);
    jitter(p.heat, rng);
    jitter(p.offset, rng);
    jitter(p.size, rng);
    Tensor3 resp = random_t3(5, 5, 8, rng);
    Labels lab = make_labels(BoundingBox{2.4, 3.3, 2.0, 2.5}, 5, 5, 1);

    Checker chk(
        [&]() { return base_loss(head_forward(resp, p), lab, 1.0, 0.1).total; }, step, limit,
        seed + 3);
    HeadCache cache;
    HeadOutputs outs = head_forward(resp, p, &cache);
    BaseLossResult bl = base_loss(outs, lab, 1.0, 0.1);
    HeadGrads g = head_backward(resp, p, cache, outs, bl.gheat, bl.goffset, bl.gsize);
    chk.tensor(resp.data, g.resp.data);
    chk.bank(p.trunk, g.params.trunk);
    chk.bank(p.heat, g.params.heat);
    chk.bank(p.offset, g.params.offset);
    chk.bank(p.size, g.params.size);
    return {"head", chk.worst, chk.coords};
}

GradCheckReport check_arm(uint64_t seed, double step, int limit) {
    Rng rng(seed ^ 0xa43);
    auto gauss = [&](double cy, double cx, double amp, double sigma) {
        Tensor2 m(7, 7);
        for (int y = 0; y < 7; y++)
            for (int x = 0; x < 7; x++) {
                const double dy = y - cy, dx = x - cx;
                m.at(y, x) = amp * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)) + 0.05 +
                             0.05 * rng.uniform();
            }
        return m;
    };
    Tensor2 label_a = gauss(3, 3, 1.0, 1.2);
    Tensor2 label_b = gauss(4, 3, 1.0, 1.2);
    ArmPair pair = make_arm_pair(gauss(3, 3, 0.8, 1.3), gauss(4, 3, 0.7, 1.2), label_a, label_b);

    Checker chk([&]() { return arm_loss(pair).loss; }, step, limit, seed + 4);
    ArmLossResult res = arm_loss(pair);
    chk.tensor(pair.pred_a.data, res.gpred_a.data);
    chk.tensor(pair.pred_b.data, res.gpred_b.data);
    return {"arm", chk.worst, chk.coords};
}

GradCheckReport check_full(uint64_t seed, double step, int limit) {
    ModelConfig mc;
    mc.channels = 8;
    mc.template_cells = 4;
    mc.search_cells = 8;
    mc.reduction = 4;
    mc.corr = CorrMode::svc;
    ModelParams params = make_model_params(mc, seed + 31);
    Rng jrng(seed ^ 0xfa11);
    jitter(params.svc.phi2, jrng);
    jitter(params.head.heat, jrng);
    jitter(params.head.offset, jrng);
    jitter(params.head.size, jrng);

    ScenarioConfig sc;
    sc.frames = 6;
    sc.grid = 16;
    sc.channels = 8;
    sc.distractors = 1;
    sc.noise = 0.05;
    sc.seed = seed + 32;
    SyntheticSequence seq = gen_sequence(sc);

    OptimConfig cfg;
    cfg.lambda_arm = 0.5;
    FrameInput tmpl = build_template(seq, 0, params);
    SampleGeom a = build_sample(seq, 1, params, 0.4, -0.7);
    SampleGeom b = build_sample(seq, 3, params, -0.3, 0.6);

    Checker chk(
        [&]() { return triplet_forward_backward(params, tmpl, a, b, cfg, true).loss.total; },
        step, limit, seed + 5);
    TripletResult res = triplet_forward_backward(params, tmpl, a, b, cfg, true);

    chk.bank(params.svc.ch.phi1, res.grads.svc.ch.phi1);
    chk.bank(params.svc.ch.fc1, res.grads.svc.ch.fc1);
    chk.bank(params.svc.ch.fc2, res.grads.svc.ch.fc2);
    chk.bank(params.svc.phi2, res.grads.svc.phi2);
    chk.bank(params.head.trunk, res.grads.head.trunk);
    chk.bank(params.head.heat, res.grads.head.heat);
    chk.bank(params.head.offset, res.grads.head.offset);
    chk.bank(params.head.size, res.grads.head.size);
    return {"full", chk.worst, chk.coords};
}

GradCheckReport check_backbone(uint64_t seed, double step, int limit) {
    ModelConfig mc;
    mc.channels = 4;
    mc.template_cells = 2;
    mc.search_cells = 4;
    mc.reduction = 2;
    mc.pixel_mode = true;
    mc.corr = CorrMode::svc;
    ModelParams params = make_model_params(mc, seed + 41);

    Rng rng(seed ^ 0xbb);
    jitter(params.svc.phi2, rng);
    jitter(params.head.heat, rng);
    jitter(params.head.offset, rng);
    jitter(params.head.size, rng);
    Tensor3 world = random_t3(48, 48, 1, rng, 0.0, 1.0);
    SyntheticSequence seq;
    seq.frames = {world, world};
    seq.boxes = {BoundingBox{24.0, 24.0, 10.0, 12.0}, BoundingBox{25.0, 24.0, 10.0, 12.0}};

    OptimConfig cfg;
    cfg.lambda_arm = 0.5;
    FrameInput tmpl = build_template(seq, 0, params);
    SampleGeom a = build_sample(seq, 0, params, 0.0, 0.0);
    SampleGeom b = build_sample(seq, 1, params, 0.0, 0.0);

    Checker chk(
        [&]() { return triplet_forward_backward(params, tmpl, a, b, cfg, true).loss.total; },
        step, limit, seed + 6);
    TripletResult res = triplet_forward_backward(params, tmpl, a, b, cfg, true);
    for (size_t i = 0; i < params.backbone.layers.size(); i++)
        chk.bank(params.backbone.layers[i].bank, res.grads.backbone.layers[i].bank);
    return {"backbone", chk.worst, chk.coords};
}

}  // namespace

std::vector<GradCheckReport> grad_check(const std::string& scope, uint64_t seed, double step,
                                        int max_coords_per_bank) {
    std::vector<GradCheckReport> reports;
    const bool all = scope == "all";
    if (all || scope == "core") reports.push_back(check_core(seed, step, max_coords_per_bank));
    if (all || scope == "svc") reports.push_back(check_svc(seed, step, max_coords_per_bank));
    if (all || scope == "head") reports.push_back(check_head(seed, step, max_coords_per_bank));
    if (all || scope == "arm") reports.push_back(check_arm(seed, step, max_coords_per_bank));
    if (all || scope == "full") reports.push_back(check_full(seed, step, max_coords_per_bank));
    if (all || scope == "backbone")
        reports.push_back(check_backbone(seed, step, max_coords_per_bank));
    if (reports.empty())
        throw ConfigError("grad_check: unknown scope '" + scope +
                          "' (core|svc|head|arm|full|backbone|all)");
    return reports;
}

}  // namespace stm
