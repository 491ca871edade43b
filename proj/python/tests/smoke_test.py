"""Smoke tests for the python module, runnable directly or under pytest."""

import numpy as np

import stmtrack


def test_dw_xcorr_matches_numpy_oracle():
    rng = np.random.default_rng(7)
    z = rng.uniform(-1, 1, (3, 4, 5))
    x = rng.uniform(-1, 1, (9, 8, 5))
    got = stmtrack.dw_xcorr(z, x)
    assert got.shape == (7, 5, 5)
    want = np.zeros_like(got)
    for y in range(7):
        for xx in range(5):
            want[y, xx] = np.sum(z * x[y : y + 3, xx : xx + 4], axis=(0, 1))
    assert np.max(np.abs(got - want)) < 1e-12


def test_model_correlate_dw_agrees_with_bare_kernel():
    rng = np.random.default_rng(8)
    model = stmtrack.Model(channels=8, template_cells=4, search_cells=10, corr="dw", seed=1)
    z = rng.uniform(0, 1, (4, 4, 8))
    x = rng.uniform(0, 1, (10, 10, 8))
    assert np.allclose(model.correlate(z, x), stmtrack.dw_xcorr(z, x))


def test_svc_model_head_shapes_and_ranges():
    rng = np.random.default_rng(9)
    model = stmtrack.Model(channels=8, template_cells=4, search_cells=12, corr="svc", seed=2)
    z = rng.uniform(0, 1, (4, 4, 8))
    x = rng.uniform(0, 1, (12, 12, 8))
    resp = model.correlate(z, x)
    assert resp.shape == (9, 9, 8)
    outs = model.head(resp)
    assert outs["heat"].shape == (9, 9)
    assert np.all(outs["heat"] > 0) and np.all(outs["heat"] < 1)
    assert np.all(outs["size"] > 0)


def test_circular_shift_is_a_roll():
    rng = np.random.default_rng(10)
    m = rng.normal(size=(6, 7))
    assert np.array_equal(stmtrack.circular_shift(m, 2, -3), np.roll(m, (2, -3), axis=(0, 1)))


def test_hanning_outer_product():
    h = stmtrack.hanning2d(7, 5)
    want = np.outer(np.hanning(7), np.hanning(5))
    assert np.max(np.abs(h - want)) < 1e-12


def test_kl_divergence_formula():
    y = np.array([[0.5, 0.5]])
    x = np.array([[0.9, 0.1]])
    want = 0.5 * np.log(0.5 / 0.9) + 0.5 * np.log(0.5 / 0.1)
    assert abs(stmtrack.kl_divergence(y, x) - want) < 1e-4
    assert stmtrack.kl_divergence(y, y) == 0.0


def test_label_offsets_spot_check():
    lab = stmtrack.make_labels((19.0, 35.0, 8.0, 8.0), 8, 8, 8)
    assert lab["offset"] == (0.375, 0.375)
    assert lab["heat"][lab["cell"]] == 1.0


def test_iou_corner_cases():
    assert stmtrack.iou((5, 5, 2, 2), (5, 5, 2, 2)) == 1.0
    assert stmtrack.iou((0, 0, 1, 1), (0.5, 0, 1, 1)) - 1 / 3 < 1e-12


def test_generator_is_deterministic():
    a_frames, a_boxes = stmtrack.gen_sequence(frames=5, grid=20, channels=4, seed=3)
    b_frames, b_boxes = stmtrack.gen_sequence(frames=5, grid=20, channels=4, seed=3)
    assert len(a_frames) == 5
    for fa, fb in zip(a_frames, b_frames):
        assert np.array_equal(fa, fb)
    assert a_boxes == b_boxes


def test_tracker_runs_a_sequence():
    frames, boxes = stmtrack.gen_sequence(
        frames=8, grid=24, channels=8, distractors=1, seed=4, step_sigma=0.3
    )
    model = stmtrack.Model(channels=8, template_cells=4, search_cells=12, corr="svc", seed=5)
    tracker = stmtrack.Tracker(model, window_influence=0.2)
    tracker.init(frames[0], boxes[0])
    for t in range(1, 8):
        res = tracker.step(frames[t])
        cx, cy, w, h = res["box"]
        assert np.isfinite([cx, cy, w, h]).all()
        assert w > 0 and h > 0
        assert res["k_hat"] >= 1


def test_arm_selection_prefers_the_consistent_peak():
    yy, xx = np.mgrid[0:16, 0:16]

    def gauss(cy, cx, amp, sigma):
        return amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))

    label_last = gauss(8, 8, 1.0, 1.2)
    pred_last = gauss(8, 8, 0.9, 1.2)
    pred_t = gauss(9, 8, 0.55, 1.2) + gauss(3, 13, 0.9, 1.0)
    k_hat, scores = stmtrack.arm_select(pred_t, label_last, pred_last, (8, 8), 3)
    assert k_hat != 1
    qy, qx, _, _ = scores[k_hat - 1]
    assert (qy, qx) == (9, 8)
    weighted = stmtrack.arm_reweight(pred_t, pred_last, (8, 8), (qy, qx))
    py, px, _ = stmtrack.topk_peaks(weighted, 1)[0]
    assert (py, px) == (9, 8)


def test_gradients_stay_tight():
    errs = stmtrack.grad_check("arm", seed=11)
    assert all(v <= 1e-4 for v in errs.values())


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
