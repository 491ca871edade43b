#include <doctest.h>

#include "stm/ablate.hpp"

using namespace stm;

TEST_CASE("ablation cell spec parsing") {
    auto cells = parse_ablation_cells("dw,svc x arm,noarm");
    REQUIRE(cells.size() == 4);
    CHECK(cells[0].first == CorrMode::dw);
    CHECK(cells[0].second == true);
    CHECK(cells[3].first == CorrMode::svc);
    CHECK(cells[3].second == false);

    auto single = parse_ablation_cells("svc x arm");
    REQUIRE(single.size() == 1);
    CHECK(single[0].first == CorrMode::svc);
    CHECK(single[0].second == true);

    CHECK_THROWS_AS(parse_ablation_cells("dw,svc"), ConfigError);
    CHECK_THROWS_AS(parse_ablation_cells("dw x sometimes"), ConfigError);
    CHECK_THROWS_AS(parse_ablation_cells("fft x arm"), ConfigError);
}

TEST_CASE("ablation scenarios are deterministic and distractor-laden") {
    for (int s = 0; s < 8; s++) {
        ScenarioConfig a = ablation_scenario(s, 0, 8);
        ScenarioConfig b = ablation_scenario(s, 0, 8);
        CHECK(a.seed == b.seed);
        CHECK(a.overlap == b.overlap);
        CHECK(a.distractors >= 2);
        CHECK(a.flicker_frame >= 0);
        SyntheticSequence seq = gen_sequence(a);
        CHECK(seq.frames.size() == static_cast<size_t>(a.frames));
    }
}

TEST_CASE("a trained tracker rides out an injected distractor pulse with the temporal module") {
    auto data = ablation_train_set(8, 5000, 8);
    ModelConfig mc;
    mc.channels = 8;
    mc.template_cells = 4;
    mc.search_cells = 12;
    mc.reduction = 4;
    mc.corr = CorrMode::svc;
    ModelParams params = make_model_params(mc, 101);
    OptimConfig oc;
    oc.total_steps = 300;
    oc.batch = 8;
    oc.warmup_steps = 75;
    oc.decay_steps = 300;
    oc.lambda_arm = 0.5;
    train(data, params, oc, 1001);

    SyntheticSequence seq = gen_sequence(ablation_scenario(38, 0, 8));
    TrackConfig with_arm;
    with_arm.window_influence = 0.2;
    TrackConfig without_arm = with_arm;
    without_arm.arm = false;

    SequenceMetrics m_on = run_sequence(seq, params, with_arm);
    SequenceMetrics m_off = run_sequence(seq, params, without_arm);

    int triggers = 0;
    for (const FrameRecord& r : m_on.records) triggers += r.k_hat != 1;
    CHECK(triggers >= 1);
    // without the module the pulse captures the tracker, with it the target
    // is held
    CHECK(m_off.failures >= 1);
    CHECK(m_on.failures < m_off.failures);
    CHECK(m_on.mean_iou > m_off.mean_iou);
}

TEST_CASE("tiny ablation run produces the full grid deterministically") {
    AblationConfig cfg;
    cfg.scenarios = 6;
    cfg.train_steps = 40;
    cfg.train_sequences = 4;
    cfg.threads = 2;

    AblationResult a = run_ablation(cfg);
    REQUIRE(a.cells.size() == 4);
    for (const AblationCell& cell : a.cells) {
        CHECK(cell.failures.size() == 6);
        CHECK(cell.mean_iou >= 0.0);
        CHECK(cell.mean_iou <= 1.0);
    }
    CHECK(a.p_svc_lt_dw >= 0.0);
    CHECK(a.p_svc_lt_dw <= 1.0);

    AblationResult b = run_ablation(cfg);
    for (size_t i = 0; i < 4; i++) {
        CHECK(a.cells[i].total_failures == b.cells[i].total_failures);
        CHECK(a.cells[i].mean_iou == b.cells[i].mean_iou);
    }
}
