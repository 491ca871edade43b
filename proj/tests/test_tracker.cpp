#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stm/tracker.hpp"

using namespace stm;

namespace {

// Feature-space world with a Gaussian blob per object, each carrying its own
// channel signature.
Tensor3 blob_world(int n, int channels, const std::vector<std::array<double, 4>>& blobs,
                   const std::vector<std::vector<double>>& signatures) {
    Tensor3 world(n, n, channels);
    for (size_t b = 0; b < blobs.size(); b++) {
        const auto [cy, cx, amp, sigma] = blobs[b];
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (int y = 0; y < n; y++)
            for (int x = 0; x < n; x++) {
                const double dy = y - cy, dx = x - cx;
                const double g = amp * std::exp(-(dy * dy + dx * dx) * inv);
                for (int c = 0; c < channels; c++) world.at(y, x, c) += g * signatures[b][c];
            }
    }
    return world;
}

std::vector<double> unit_signature(int channels, int hot_lo, int hot_hi) {
    std::vector<double> s(channels, 0.05);
    for (int c = hot_lo; c <= hot_hi; c++) s[c] = 1.0;
    double norm = 0.0;
    for (double v : s) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : s) v /= norm;
    return s;
}

// Hand-built params that make the matcher informative without training: the
// trunk passes the response through and the heat branch sums channels.
ModelParams handcrafted_params(CorrMode corr) {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.template_cells = 4;
    cfg.search_cells = 12;
    cfg.reduction = 4;
    cfg.corr = corr;
    ModelParams p = make_model_params(cfg, 0);
    p.svc = zeros_like(p.svc);
    p.head = zeros_like(p.head);
    for (int c = 0; c < cfg.channels; c++) p.head.trunk.wat(c, c, 1, 1) = 1.0;
    for (int c = 0; c < cfg.channels; c++) p.head.heat.wat(0, c, 0, 0) = 0.6;
    p.head.heat.bias[0] = -2.0;
    return p;
}

}  // namespace

TEST_CASE("tracker_init seeds the state from the label") {
    ModelParams params = handcrafted_params(CorrMode::dw);
    auto sig = unit_signature(8, 0, 3);
    Tensor3 world = blob_world(24, 8, {{12.0, 12.0, 1.0, 1.2}}, {sig});
    FrameInput frame = FrameInput::from_features(world);
    BoundingBox box{12.0, 12.0, 3.0, 3.0};
    TrackConfig cfg;

    TrackerState state = tracker_init(frame, box, params, cfg);
    CHECK(state.frame_count == 1);
    // p_last is the label peak
    PeakLocation label_peak = topk_peaks(state.label_last, 1)[0];
    CHECK(state.p_last.y == label_peak.y);
    CHECK(state.p_last.x == label_peak.x);
    CHECK(state.label_last.at(state.p_last.y, state.p_last.x) == 1.0);

    // label equals make_labels output bit-exactly (response grid is 9x9,
    // window centered on the box -> local center at 4.5 cells)
    Labels want = make_labels(BoundingBox{4.5, 4.5, 3.0, 3.0}, 9, 9, 1);
    CHECK(std::memcmp(state.label_last.data.data(), want.heat.data.data(),
                      want.heat.size() * sizeof(double)) == 0);
}

TEST_CASE("tracker_init rejects degenerate boxes") {
    ModelParams params = handcrafted_params(CorrMode::dw);
    Tensor3 world(24, 24, 8);
    FrameInput frame = FrameInput::from_features(world);
    CHECK_THROWS_AS(tracker_init(frame, BoundingBox{12, 12, 0.0, 3.0}, params, TrackConfig{}),
                    DataError);
}

TEST_CASE("static target is tracked within one cell for ten frames") {
    ModelParams params = handcrafted_params(CorrMode::dw);
    auto sig = unit_signature(8, 0, 3);
    TrackConfig cfg;

    Tensor3 world = blob_world(24, 8, {{11.0, 13.0, 1.0, 1.2}}, {sig});
    BoundingBox gt{13.0, 11.0, 3.0, 3.0};
    TrackerState state =
        tracker_init(FrameInput::from_features(world), gt, params, cfg);

    for (int t = 1; t <= 10; t++) {
        StepResult res = tracker_step(state, FrameInput::from_features(world), params, cfg);
        CHECK(std::fabs(res.box.cx - gt.cx) <= 1.0);
        CHECK(std::fabs(res.box.cy - gt.cy) <= 1.0);
        CHECK(res.box.w > 0.0);
        CHECK(res.box.h > 0.0);
        state = res.state;
    }
}

TEST_CASE("a slowly moving target stays locked") {
    ModelParams params = handcrafted_params(CorrMode::dw);
    auto sig = unit_signature(8, 2, 5);
    TrackConfig cfg;

    double cy = 8.0, cx = 8.0;
    Tensor3 world0 = blob_world(24, 8, {{cy, cx, 1.0, 1.2}}, {sig});
    TrackerState state = tracker_init(FrameInput::from_features(world0),
                                      BoundingBox{cx, cy, 3.0, 3.0}, params, cfg);
    for (int t = 1; t <= 12; t++) {
        cy += 0.7;
        cx += 0.5;
        Tensor3 world = blob_world(24, 8, {{cy, cx, 1.0, 1.2}}, {sig});
        StepResult res = tracker_step(state, FrameInput::from_features(world), params, cfg);
        CHECK(std::fabs(res.box.cx - cx) <= 1.5);
        CHECK(std::fabs(res.box.cy - cy) <= 1.5);
        state = res.state;
    }
}

TEST_CASE("stepping is a pure function of its inputs") {
    ModelParams params = handcrafted_params(CorrMode::svc);
    params.svc = make_svc_params(8, 4, 777);
    auto sig = unit_signature(8, 0, 3);
    Tensor3 world = blob_world(24, 8, {{12.0, 12.0, 1.0, 1.2}}, {sig});
    FrameInput frame = FrameInput::from_features(world);
    TrackConfig cfg;
    TrackerState state = tracker_init(frame, BoundingBox{12, 12, 3, 3}, params, cfg);

    StepResult a = tracker_step(state, frame, params, cfg);
    StepResult b = tracker_step(state, frame, params, cfg);
    CHECK(a.box.cx == b.box.cx);
    CHECK(a.box.cy == b.box.cy);
    CHECK(a.confidence == b.confidence);
    CHECK(a.k_hat == b.k_hat);
    CHECK(std::memcmp(a.state.pred_last.data.data(), b.state.pred_last.data.data(),
                      a.state.pred_last.size() * sizeof(double)) == 0);
}

TEST_CASE("literal policy leaves state untouched while k_hat stays 1") {
    ModelParams params = handcrafted_params(CorrMode::dw);
    auto sig = unit_signature(8, 0, 3);
    Tensor3 world = blob_world(24, 8, {{12.0, 12.0, 1.0, 1.2}}, {sig});
    FrameInput frame = FrameInput::from_features(world);
    TrackConfig cfg;
    TrackerState state = tracker_init(frame, BoundingBox{12, 12, 3, 3}, params, cfg);
    Tensor2 initial_label = state.label_last;
    Tensor2 initial_pred = state.pred_last;

    for (int t = 0; t < 6; t++) {
        StepResult res = tracker_step(state, frame, params, cfg);
        REQUIRE(res.k_hat == 1);
        state = res.state;
    }
    CHECK(std::memcmp(state.label_last.data.data(), initial_label.data.data(),
                      initial_label.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(state.pred_last.data.data(), initial_pred.data.data(),
                      initial_pred.size() * sizeof(double)) == 0);
}

TEST_CASE("K=1 equals a run with the candidate branch disabled, bit-exactly") {
    ModelParams params = handcrafted_params(CorrMode::dw);
    auto sig = unit_signature(8, 0, 3);
    auto sig_d = unit_signature(8, 2, 5);

    TrackConfig k1;
    k1.k = 1;
    TrackConfig no_arm;
    no_arm.arm = false;

    double cy = 10.0, cx = 10.0;
    Tensor3 world0 = blob_world(24, 8, {{cy, cx, 1.0, 1.2}}, {sig});
    TrackerState sa = tracker_init(FrameInput::from_features(world0),
                                   BoundingBox{cx, cy, 3.0, 3.0}, params, k1);
    TrackerState sb = tracker_init(FrameInput::from_features(world0),
                                   BoundingBox{cx, cy, 3.0, 3.0}, params, no_arm);

    Rng rng(808);
    for (int t = 1; t <= 8; t++) {
        cy += rng.uniform(-0.8, 0.8);
        cx += rng.uniform(-0.8, 0.8);
        Tensor3 world = blob_world(
            24, 8, {{cy, cx, 1.0, 1.2}, {cy + 6.0, cx - 5.0, 0.8, 1.2}}, {sig, sig_d});
        FrameInput frame = FrameInput::from_features(world);
        StepResult ra = tracker_step(sa, frame, params, k1);
        StepResult rb = tracker_step(sb, frame, params, no_arm);
        CHECK(ra.box.cx == rb.box.cx);
        CHECK(ra.box.cy == rb.box.cy);
        CHECK(ra.box.w == rb.box.w);
        CHECK(ra.box.h == rb.box.h);
        CHECK(ra.confidence == rb.confidence);
        CHECK(ra.k_hat == 1);
        CHECK(rb.k_hat == 1);
        sa = ra.state;
        sb = rb.state;
    }
}

TEST_CASE("window penalty unit cases") {
    Rng rng(809);
    Tensor2 heat = oracle::random_tensor2(9, 9, rng, 0.0, 1.0);
    Tensor3 size_map(9, 9, 2);
    for (int y = 0; y < 9; y++)
        for (int x = 0; x < 9; x++) {
            size_map.at(y, x, 0) = rng.uniform(1.0, 5.0);
            size_map.at(y, x, 1) = rng.uniform(1.0, 5.0);
        }

    SUBCASE("disabled penalty and window leave the map unchanged") {
        TrackConfig cfg;
        cfg.penalty_k = 0.0;
        cfg.window_influence = 0.0;
        Tensor2 out = apply_window_penalty(heat, size_map, 3.0, 3.0, cfg);
        for (size_t i = 0; i < heat.size(); i++) CHECK(out.data[i] == heat.data[i]);
    }
    SUBCASE("full window influence returns the cosine window") {
        TrackConfig cfg;
        cfg.window_influence = 1.0;
        Tensor2 out = apply_window_penalty(heat, size_map, 3.0, 3.0, cfg);
        Tensor2 hann = hanning2d(9, 9);
        for (size_t i = 0; i < out.size(); i++)
            CHECK(out.data[i] == doctest::Approx(hann.data[i]));
        CHECK(topk_peaks(out, 1)[0].y == 4);
        CHECK(topk_peaks(out, 1)[0].x == 4);
    }
    SUBCASE("stationary size gives unit penalty") {
        TrackConfig cfg;
        cfg.penalty_k = 0.2;
        cfg.window_influence = 0.0;
        Tensor3 stationary(9, 9, 2);
        for (int y = 0; y < 9; y++)
            for (int x = 0; x < 9; x++) {
                stationary.at(y, x, 0) = 3.0;
                stationary.at(y, x, 1) = 3.0;
            }
        Tensor2 out = apply_window_penalty(heat, stationary, 3.0, 3.0, cfg);
        for (size_t i = 0; i < heat.size(); i++)
            CHECK(out.data[i] == doctest::Approx(heat.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("params save/load round trip is bit exact") {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.template_cells = 4;
    cfg.search_cells = 12;
    cfg.corr = CorrMode::svc;
    ModelParams p = make_model_params(cfg, 99);
    auto dir = std::filesystem::temp_directory_path() / "stm_params_test";
    std::filesystem::remove_all(dir);
    save_params(p, dir.string());
    ModelParams q = load_params(dir.string());
    CHECK(q.cfg.channels == 8);
    CHECK(q.cfg.corr == CorrMode::svc);
    bool all_equal = true;
    for_each_bank(p, [&](const std::string& name, const KernelBank& k, bool) {
        for_each_bank(q, [&](const std::string& name2, const KernelBank& k2, bool) {
            if (name == name2)
                all_equal = all_equal && k.weights == k2.weights && k.bias == k2.bias;
        });
    });
    CHECK(all_equal);
    CHECK_THROWS_AS(load_params("/nonexistent/params/dir"), DataError);
}

TEST_CASE("template and search features come from the same parameter record") {
    ModelConfig mc;
    mc.channels = 4;
    mc.template_cells = 2;
    mc.search_cells = 4;
    mc.reduction = 2;
    mc.pixel_mode = true;
    ModelParams params = make_model_params(mc, 61);
    REQUIRE(!params.backbone.empty());

    Rng rng(62);
    Tensor3 world = oracle::random_tensor3(64, 64, 1, rng, 0.0, 1.0);
    FrameInput frame = FrameInput::from_pixels(world);
    BoundingBox box{32.0, 32.0, 12.0, 12.0};
    TrackerState state = tracker_init(frame, box, params, TrackConfig{});

    // recompute the template features externally through the same handle
    Tensor3 crop = crop_window(world, 32, 32, 2 * params.stride());
    Tensor3 want = extract(FrameInput::from_pixels(crop), params.backbone);
    REQUIRE(state.template_feat.same_shape(want));
    CHECK(std::memcmp(state.template_feat.data.data(), want.data.data(),
                      want.size() * sizeof(double)) == 0);
}

TEST_CASE("default candidate count is three") {
    TrackConfig cfg;
    CHECK(cfg.k == 3);
}

TEST_CASE("tracker init matches a frozen golden fixture") {
    const char* dir = std::getenv("STM_FIXTURE_DIR");
    REQUIRE(dir != nullptr);
    std::filesystem::path fixture = std::filesystem::path(dir) / "init_heat_golden.st1";

    ModelConfig mc;
    mc.channels = 8;
    mc.template_cells = 4;
    mc.search_cells = 12;
    mc.reduction = 4;
    mc.corr = CorrMode::svc;
    ModelParams params = make_model_params(mc, 4040);
    Rng rng(4041);
    Tensor3 world = oracle::random_tensor3(24, 24, 8, rng, 0.0, 1.0);
    TrackerState state = tracker_init(FrameInput::from_features(world),
                                      BoundingBox{11.3, 12.6, 3.0, 3.0}, params, TrackConfig{});

    if (std::getenv("STM_REGEN_FIXTURES")) {
        write_st1(fixture.string(), state.pred_last);
        MESSAGE("regenerated ", fixture.string());
        return;
    }
    Tensor2 want = read_st1_2d(fixture.string());
    REQUIRE(state.pred_last.same_shape(want));
    CHECK(std::memcmp(state.pred_last.data.data(), want.data.data(),
                      want.size() * sizeof(double)) == 0);
}
