import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tview.errors import IndexOutOfRange
from tview.estimator import KeypointEstimate, fit_frame
from tview.evaluation import (
    FrameMetrics,
    coverage,
    evaluate_frames,
    frame_metrics,
    merge_reports,
    mpjpe,
    report_rows,
    rows_to_csv,
    summarize,
    summarize_frames,
)
from tview.simulator import NoiseSpec, RigSpec, simulate_scene
from tview.tdist import MvtDist3, sample
from tview.triangulation import TriangulationResult


def estimate(mu, sigma=np.eye(3), nu=5.0, degenerate=False):
    tri = TriangulationResult(np.asarray(mu, float), 1.0, 1.0 if degenerate else 1e9)
    return KeypointEstimate(MvtDist3(mu, sigma, nu), 0.0, 1, tri, True)


def failed():
    return KeypointEstimate(None, math.nan, 0, None, False, error="InsufficientViews: no views")


def frame(err_mm, group="", k=2):
    """Frame whose MPJPE (over ``k`` joints) is ``err_mm``."""
    e = np.zeros(k)
    e[1:] = err_mm / 1000.0 * k / (k - 1)
    return FrameMetrics(e, {0.95: 1}, k, 0, group)


class TestMpjpe:
    def test_identity(self, rng):
        gt = rng.normal(size=(17, 3))
        assert mpjpe(gt, gt) == 0.0

    def test_example(self):
        assert mpjpe([[0, 0, 0], [3, 4, 0]], [[0, 0, 0], [0, 0, 0]]) == pytest.approx(2.5)

    def test_pelvis_index(self):
        gt = np.zeros((3, 3))
        pred = np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 0]])
        assert mpjpe(pred, gt, pelvis_index=1) == pytest.approx(1 / 3)
        assert mpjpe(pred, gt, pelvis_index=0) == pytest.approx(2 / 3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_translation_invariance(self, seed):
        r = np.random.default_rng(seed)
        gt, pred = r.normal(size=(17, 3)), r.normal(size=(17, 3))
        t, u = r.normal(size=3) * 10, r.normal(size=3) * 10
        base = mpjpe(pred, gt)
        assert mpjpe(pred + t, gt + t) == pytest.approx(base, abs=1e-12)
        assert mpjpe(pred + u, gt) == pytest.approx(base, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            mpjpe(np.zeros((2, 3)), np.zeros((2, 3)), pelvis_index=2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mpjpe(np.zeros((2, 3)), np.zeros((3, 3)))


class TestCoverage:
    def test_gt_at_mean(self, rng):
        mus = rng.normal(size=(10, 3))
        ests = [estimate(m) for m in mus]
        for lv in (0.01, 0.5, 0.99):
            assert coverage(ests, mus, lv) == 1.0

    def test_vanishing_ellipsoid(self, rng):
        mus = rng.normal(size=(10, 3))
        ests = [estimate(m, 1e-12 * np.eye(3)) for m in mus]
        assert coverage(ests, mus + 1e-3, 0.99) == 0.0

    def test_failed_estimate_is_a_miss(self):
        assert coverage([estimate(np.zeros(3)), failed()], np.zeros((2, 3)), 0.5) == 0.5

    def test_well_specified_calibration(self):
        # ground truth drawn from the very distribution reported as the estimate
        rng = np.random.default_rng(17)
        ests, gts = [], []
        for i in range(2500):
            A = rng.normal(size=(3, 3))
            d = MvtDist3(rng.normal(size=3), A @ A.T + 0.1 * np.eye(3), 5.0)
            ests.append(estimate(d.mu, d.sigma))
            gts.append(sample(d, seed=i))
        assert 0.92 <= coverage(ests, gts, 0.95) <= 0.98

    def test_monotone_in_level(self, rng):
        ests = [estimate(rng.normal(size=3)) for _ in range(300)]
        gt = [e.mu + rng.standard_t(5, 3) for e in ests]
        levels = np.linspace(0.01, 0.99, 30)
        cov = [coverage(ests, gt, lv) for lv in levels]
        assert np.all(np.diff(cov) >= 0)


class TestSummarize:
    def test_single_frame(self):
        (overall, by_group, rows) = summarize([frame(12.5, "Walk")])
        assert overall.mpjpe_mm == pytest.approx(12.5)
        assert by_group["Walk"].mpjpe_mm == pytest.approx(12.5)
        assert rows[0] == ("Avg", "mpjpe_mm", overall.mpjpe_mm, 1)

    def test_frame_weighted_average(self):
        frames = [frame(10, "a"), frame(10, "a"), frame(20, "b"), frame(20, "b")]
        overall, by_group, rows = summarize(frames)
        assert overall.mpjpe_mm == pytest.approx(15.0)
        assert dict(((g, m), v) for g, m, v, n in rows)[("AvgGroups", "mpjpe_mm")] == pytest.approx(15.0)

    def test_unequal_groups_report_both_averages(self):
        frames = [frame(10, "a")] * 3 + [frame(20, "b")]
        overall, by_group, rows = summarize(frames)
        table = {(g, m): v for g, m, v, n in rows}
        assert table[("Avg", "mpjpe_mm")] == pytest.approx(12.5)
        assert table[("AvgGroups", "mpjpe_mm")] == pytest.approx(15.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_csv(self):
        text = rows_to_csv(report_rows(*summarize([frame(1 / 3, "a")])[:2]))
        lines = text.splitlines()
        assert lines[0] == "group,metric,value,n"
        assert lines[1] == "Avg,mpjpe_mm,0.333333,1"

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 8))
    def test_merge_matches_concatenation(self, seed, na, nb):
        r = np.random.default_rng(seed)

        def rand_frame():
            e = r.exponential(0.05, 5)
            e[0] = 0.0
            e[r.random(5) < 0.2] = np.nan
            return FrameMetrics(e, {0.5: int(r.integers(0, 6)), 0.95: int(r.integers(0, 6))}, 5, int(r.integers(0, 3)))

        a = [rand_frame() for _ in range(na)]
        b = [rand_frame() for _ in range(nb)]
        whole = summarize_frames(a + b)
        merged = merge_reports(summarize_frames(a), summarize_frames(b))
        for name in ("mpjpe_mm", "mpjpe_se_mm", "degenerate_fraction", "n_frames", "mpjpe_sq_mm"):
            assert getattr(merged, name) == pytest.approx(getattr(whole, name), rel=1e-12, abs=1e-12, nan_ok=True)
        np.testing.assert_allclose(merged.per_keypoint_mpjpe, whole.per_keypoint_mpjpe, rtol=1e-12, equal_nan=True)
        for lv in whole.coverage_at:
            assert merged.coverage_at[lv] == pytest.approx(whole.coverage_at[lv], rel=1e-12)

    def test_report_invariants(self, noiseless_scene):
        gts = [f.gt for f in noiseless_scene.frames]
        ests = [fit_frame(noiseless_scene.cameras, f.observations, f.valid) for f in noiseless_scene.frames]
        overall, _, _ = summarize(evaluate_frames(ests, gts, [f.action for f in noiseless_scene.frames]))
        assert overall.mpjpe_mm >= 0
        assert overall.mpjpe_mm < 1e-3
        assert all(0.0 <= v <= 1.0 for v in overall.coverage_at.values())
        assert overall.n_frames == len(gts)
        assert overall.per_keypoint_mpjpe.shape == (17,)


@pytest.fixture(scope="module")
def antipodal():
    # cameras face each other along x: joints near that axis are ill-posed
    scene = simulate_scene(RigSpec("two_antipodal"), 6, NoiseSpec(pixel_sigma=2.0, seed=8))
    ests = [fit_frame(scene.cameras, f.observations, f.valid) for f in scene.frames]
    return scene, ests


class TestDegenerate:
    def test_fraction_and_exclusion(self, antipodal):
        scene, ests = antipodal
        n_deg = sum(e.degenerate for fr in ests for e in fr)
        assert n_deg > 0
        gts = [f.gt for f in scene.frames]
        inc = evaluate_frames(ests, gts)
        exc = evaluate_frames(ests, gts, include_degenerate=False)
        rep_inc, rep_exc = summarize_frames(inc), summarize_frames(exc)
        n = 17 * len(gts)
        assert rep_inc.degenerate_fraction == rep_exc.degenerate_fraction == pytest.approx(n_deg / n)
        assert int(rep_exc.per_keypoint_counts.sum()) == n - n_deg
        assert int(rep_inc.per_keypoint_counts.sum()) == n
        assert sum(f.n_degenerate for f in exc) == n_deg

    def test_forced_failures_counted(self, noiseless_scene):
        f = noiseless_scene.frames[0]
        mask = f.valid.copy()
        mask[1:, [3, 9]] = False
        ests = fit_frame(noiseless_scene.cameras, f.observations, mask)
        fm = frame_metrics(ests, f.gt, include_degenerate=False)
        assert fm.n_degenerate == 2
        assert np.isnan(fm.joint_errors[[3, 9]]).all()
        assert np.isfinite(fm.mpjpe)
        assert fm.covered[0.95] <= 15
