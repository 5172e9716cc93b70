import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation as ScipyRotation

from trajrobust.errors import DegenerateGeometryError, InsufficientOverlapError, InvalidArgumentError
from trajrobust.geometry import Pose, compose_arrays, so3_exp
from trajrobust.metrics import (
    ErrorSeries,
    RobustnessCurve,
    ate,
    f1,
    precision_recall,
    robustness_auc,
    rpe,
    umeyama_align,
    velocity_error_series,
)
from trajrobust.spline import fit, fit_pieces
from trajrobust.synth import WaveSpec, gen_wave
from trajrobust.trajio import Trajectory


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def transformed(traj, pose, name=""):
    q, p = compose_arrays(
        np.broadcast_to(pose.rotation.quat, traj.quats.shape),
        np.broadcast_to(pose.translation, traj.positions.shape),
        traj.quats,
        traj.positions,
    )
    return Trajectory(traj.t, p, q, name=name)


@pytest.fixture(scope="module")
def wave():
    traj, _ = gen_wave(WaveSpec(duration=20))
    return traj


class TestUmeyama:
    def setup_method(self):
        self.pts = np.random.default_rng(0).normal(size=(50, 3))

    def test_identity(self):
        r = umeyama_align(self.pts, self.pts)
        np.testing.assert_allclose(r.transform.rotation.matrix, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(r.transform.translation, 0, atol=1e-12)
        assert r.scale == 1.0
        assert r.residual_rmse < 1e-12

    def test_shift(self):
        r = umeyama_align(self.pts, self.pts + [1, -2, 0.5])
        np.testing.assert_allclose(r.transform.translation, [1, -2, 0.5], atol=1e-12)
        assert r.residual_rmse < 1e-12

    def test_similarity(self):
        t0 = np.array([0.3, -1.0, 2.0])
        est = 0.5 * self.pts @ rot_z(math.pi / 3).T + t0
        r = umeyama_align(est, self.pts, with_scale=True)
        assert r.scale == pytest.approx(2.0, abs=1e-9)
        np.testing.assert_allclose(r.transform.rotation.matrix, rot_z(-math.pi / 3), atol=1e-9)
        assert r.residual_rmse < 1e-9

    def test_matches_scipy_align_vectors(self):
        rng = np.random.default_rng(1)
        R = ScipyRotation.random(random_state=2)
        gt = self.pts
        est = R.inv().apply(gt) + rng.normal(scale=0.01, size=gt.shape)
        r = umeyama_align(est, gt)
        # Scipy solves the same orthogonal Procrustes problem on centred points.
        ref, _ = ScipyRotation.align_vectors(gt - gt.mean(0), est - est.mean(0))
        np.testing.assert_allclose(r.transform.rotation.matrix, ref.as_matrix(), atol=1e-9)

    def test_reflection_guarded(self):
        mirrored = self.pts * [1, 1, -1]
        r = umeyama_align(mirrored, self.pts)
        assert np.linalg.det(r.transform.rotation.matrix) == pytest.approx(1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            umeyama_align(self.pts[:2], self.pts[:2])
        line = np.outer(np.arange(10.0), [1, 2, 3])
        with pytest.raises(DegenerateGeometryError):
            umeyama_align(line, line)


class TestATE:
    def test_identity(self, wave):
        r = ate(wave, wave)
        assert r.rmse < 1e-12

    def test_offset(self, wave):
        shifted = transformed(wave, Pose(translation=(1, 0, 0)))
        assert ate(shifted, wave, align="none").rmse == pytest.approx(1.0, abs=1e-12)
        assert ate(shifted, wave, align="rigid").rmse < 1e-9

    def test_statistics(self, wave):
        r = ate(transformed(wave, Pose(translation=(0, 0, 2))), wave, align="none")
        assert (r.mean, r.median, r.max) == pytest.approx((2, 2, 2))
        assert r.n_pairs == len(wave)

    def test_similarity_absorbs_scale(self, wave):
        scaled = Trajectory(wave.t, 3.0 * wave.positions, wave.quats)
        assert ate(scaled, wave, align="similarity").rmse < 1e-9
        assert ate(scaled, wave, align="rigid").rmse > 0.1

    def test_straight_line_allowed(self):
        t = np.arange(20) * 0.1
        gt = Trajectory(t, np.column_stack([t, 0 * t, 0 * t]), np.tile([0, 0, 0, 1.0], (20, 1)))
        assert ate(transformed(gt, Pose(translation=(0, 1, 0))), gt).rmse < 1e-9

    def test_joint_rigid_invariance(self, wave):
        est = Trajectory(wave.t, wave.positions + np.random.default_rng(0).normal(scale=0.1, size=wave.positions.shape), wave.quats)
        S = Pose(so3_exp((0.4, -1.2, 2.0)), (10, -3, 7))
        a = ate(est, wave).rmse
        b = ate(transformed(est, S), transformed(wave, S)).rmse
        assert abs(a - b) < 1e-9

    def test_insufficient_overlap(self, wave):
        late = Trajectory(wave.t + 1000, wave.positions, wave.quats)
        with pytest.raises(InsufficientOverlapError, match="got 0"):
            ate(late, wave)

    def test_bad_mode(self, wave):
        with pytest.raises(InvalidArgumentError):
            ate(wave, wave, align="affine")


class TestRPE:
    def test_identity(self, wave):
        r = rpe(wave, wave)
        assert r.trans_rmse < 1e-9 and r.rot_rmse < 1e-9

    def test_left_invariance(self, wave):
        S = Pose(so3_exp((0.4, -1.2, 2.0)), (10, -3, 7))
        r = rpe(transformed(wave, S), wave)
        assert r.trans_rmse < 1e-9 and r.rot_rmse < 1e-9

    def test_drift(self):
        t = np.arange(11.0)
        q = np.tile([0, 0, 0, 1.0], (11, 1))
        gt = Trajectory(t, np.zeros((11, 3)), q)
        est = Trajectory(t, np.column_stack([0.1 * t, 0 * t, 0 * t]), q)
        r = rpe(est, gt, delta=1.0)
        assert r.trans_rmse == pytest.approx(0.1, abs=1e-12)
        assert len(r.trans_errors) == 10

    def test_rotation_error(self):
        t = np.arange(5.0)
        gt = Trajectory(t, np.zeros((5, 3)), np.tile([0, 0, 0, 1.0], (5, 1)))
        est = Trajectory.from_poses(t, [Pose(so3_exp((0, 0, 0.05 * k))) for k in range(5)])
        assert rpe(est, gt).rot_rmse == pytest.approx(0.05, abs=1e-12)

    def test_invariance_with_noise(self, wave):
        rng = np.random.default_rng(5)
        est = Trajectory(wave.t, wave.positions + rng.normal(scale=0.05, size=wave.positions.shape), wave.quats)
        S = Pose(so3_exp((1.0, 0.2, -0.7)), (3, 4, 5))
        a, b = rpe(est, wave), rpe(transformed(est, S), wave)
        assert abs(a.trans_rmse - b.trans_rmse) < 1e-9 and abs(a.rot_rmse - b.rot_rmse) < 1e-9

    def test_no_window(self, wave):
        short = wave.select(np.arange(5))
        with pytest.raises(InsufficientOverlapError):
            rpe(short, short, delta=1.0)


class TestPrecisionRecall:
    def test_all_zero(self):
        assert precision_recall(ErrorSeries.from_errors(np.zeros(10)), 0.1) == (1.0, 1.0)

    def test_all_large(self):
        assert precision_recall(ErrorSeries.from_errors(np.full(10, 0.5)), 0.1) == (0.0, 0.0)

    def test_hand_count(self):
        series = ErrorSeries.from_errors([0.05] * 6 + [0.5] * 4, gt_total=20)
        assert precision_recall(series, 0.1) == pytest.approx((0.6, 0.3))

    def test_strict_inequality(self):
        assert precision_recall(ErrorSeries.from_errors([0.1]), 0.1) == (0.0, 0.0)

    def test_empty(self):
        assert precision_recall(ErrorSeries.from_errors([], gt_total=10), 0.1) == (1.0, 0.0)

    def test_f1(self):
        assert f1(1, 1) == 1.0
        assert f1(0, 0.7) == 0.0
        assert f1(0.6, 0.4) == pytest.approx(0.48)
        with pytest.raises(InvalidArgumentError):
            f1(1.2, 0.5)

    def test_series_invariants(self):
        with pytest.raises(InvalidArgumentError):
            ErrorSeries.from_errors([0.1, 0.2], gt_total=1)
        with pytest.raises(InvalidArgumentError):
            ErrorSeries.from_errors([-0.1])


def brute_force_auc(errors, gt_total, n):
    """Threshold-by-threshold reference using the scalar helpers."""
    series = ErrorSeries.from_errors(errors, gt_total)
    s = np.arange(1, n + 1) / n
    values = []
    for sk in s:
        T = -math.log(sk) / 10
        if T == 0:
            # T -> 0+ limit
            T = np.nextafter(0.0, 1.0)
        values.append(f1(*precision_recall(series, T)))
    y = np.concatenate([[values[0]], values])
    x = np.concatenate([[0.0], s])
    return float(np.sum((y[1:] + y[:-1]) / 2 * np.diff(x)))


class TestAUC:
    def test_perfect(self):
        assert robustness_auc(ErrorSeries.from_errors(np.zeros(100))).auc == pytest.approx(1.0, abs=1e-6)

    def test_empty(self):
        c = robustness_auc(ErrorSeries.from_errors([], gt_total=100))
        assert c.auc == 0.0
        assert np.all(c.f1 == 0)

    def test_half_coverage(self):
        c = robustness_auc(ErrorSeries.from_errors(np.zeros(50), gt_total=100))
        assert c.auc == pytest.approx(2 / 3, abs=1e-3)
        np.testing.assert_allclose(c.f1, 2 / 3)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(9)
        e = rng.exponential(0.2, size=300)
        e[:20] = 0.0
        expected = brute_force_auc(e, 400, 200)
        assert robustness_auc(ErrorSeries.from_errors(e, 400), 200).auc == pytest.approx(expected, abs=1e-12)

    def test_constant_error_closed_form(self):
        # F1 = 1 where T > e, i.e. s < exp(-10 e); integral over s is exp(-10 e).
        e = 0.05
        c = robustness_auc(ErrorSeries.from_errors(np.full(10, e)), 100000)
        assert c.auc == pytest.approx(math.exp(-10 * e), abs=1e-4)

    def test_convergence(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            e = rng.gamma(2.0, 0.1, size=500)
            series = ErrorSeries.from_errors(e, 600)
            assert abs(robustness_auc(series, 100).auc - robustness_auc(series, 100000).auc) < 1e-3

    def test_points_layout(self):
        c = robustness_auc(ErrorSeries.from_errors([0.1, 0.2]), 10)
        pts = c.points
        assert len(pts) == 10
        assert pts[-1][:2] == (1.0, 0.0)
        assert all(a[0] < b[0] for a, b in zip(pts, pts[1:]))

    def test_bad_thresholds(self):
        with pytest.raises(InvalidArgumentError):
            robustness_auc(ErrorSeries.from_errors([0.1]), 1)

    def test_empty_curve(self):
        c = RobustnessCurve.empty("angular")
        assert len(c) == 0 and c.auc == 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(0, 5, allow_nan=False), max_size=60),
        st.integers(0, 40),
        st.integers(2, 300),
    )
    def test_properties(self, errors, extra, n):
        series = ErrorSeries.from_errors(errors, len(errors) + extra)
        c = robustness_auc(series, n)
        assert 0.0 <= c.auc <= 1.0
        # T decreases along s, so P, R, F1 must be non-increasing in s.
        assert np.all(np.diff(c.precision) <= 1e-15)
        assert np.all(np.diff(c.recall) <= 1e-15)
        assert np.all(np.diff(c.f1) <= 1e-15)
        denom = c.precision + c.recall
        expected = np.where(denom > 0, 2 * c.precision * c.recall / np.where(denom > 0, denom, 1), 0)
        np.testing.assert_allclose(c.f1, expected, atol=1e-15)
        assert (c.auc == 0) == bool(np.all(c.f1 == 0))


class TestVelocityErrors:
    def test_identical(self, wave):
        s = fit(wave)
        lin, ang = velocity_error_series(s, s)
        assert lin.covered == lin.gt_total > 0
        assert np.all(lin.e == 0) and np.all(ang.e == 0)

    def test_half_coverage(self, wave):
        half = wave.select(np.arange(len(wave) // 2))
        lin, _ = velocity_error_series(fit(half), fit(wave))
        assert lin.covered / lin.gt_total == pytest.approx(0.5, abs=0.03)
        assert np.max(lin.e) < 1e-12

    def test_constant_bias(self, wave):
        est = Trajectory(wave.t, wave.positions + np.outer(wave.t, [0.3, 0, 0]), wave.quats)
        lin, ang = velocity_error_series(fit(est), fit(wave))
        # The SE(3) spline couples translation to rotation, so a position ramp
        # is reproduced to ~1e-8 rather than exactly.
        np.testing.assert_allclose(lin.e, 0.3, atol=1e-6)
        assert np.max(ang.e) < 1e-12

    def test_no_overlap(self, wave):
        late = Trajectory(wave.t + 100, wave.positions, wave.quats)
        lin, _ = velocity_error_series(fit(late), fit(wave))
        assert lin.covered == 0 and lin.gt_total > 0
        assert robustness_auc(lin).auc == 0.0

    def test_pieces_and_grid(self, wave):
        gt = fit(wave)
        est = fit_pieces(Trajectory(wave.t, wave.positions, wave.quats, breaks=(100,)))
        lin, _ = velocity_error_series(est, gt, rate=10)
        lo, hi = gt.valid_span
        assert lin.gt_total == int(round((hi - lo) * 10)) + 1
        assert lin.covered < lin.gt_total
        np.testing.assert_allclose(np.diff(lin.t)[np.diff(lin.t) < 0.15], 0.1)

    def test_empty_estimate(self, wave):
        lin, ang = velocity_error_series([], fit(wave))
        assert lin.covered == 0 and ang.gt_total == lin.gt_total

    def test_rate_validation(self, wave):
        with pytest.raises(InvalidArgumentError):
            velocity_error_series(fit(wave), fit(wave), rate=0)
