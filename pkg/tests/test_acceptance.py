"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import io
import math
import re
import time

import numpy as np

from trajrobust.errors import ParseError
from trajrobust.geometry import Pose, compose_arrays, log_so3, quat_conjugate, quat_multiply, se3_exp, so3_exp
from trajrobust.metrics import ErrorSeries, ate, robustness_auc, rpe
from trajrobust.pipeline import EvalConfig, evaluate_sequence
from trajrobust.spline import cumulative_basis, fit
from trajrobust.synth import DegradationSpec, ScrewSpec, WaveSpec, degrade, gen_screw, gen_wave, velocity_arrays
from trajrobust.trajio import Trajectory, format_tum, parse_tum, resample_uniform, write_tum


def transformed(traj, pose):
    q, p = compose_arrays(
        np.broadcast_to(pose.rotation.quat, traj.quats.shape),
        np.broadcast_to(pose.translation, traj.positions.shape),
        traj.quats,
        traj.positions,
    )
    return Trajectory(traj.t, p, q)


def test_01_basis_correctness(acceptance):
    b0 = cumulative_basis(0.0).b
    b1 = cumulative_basis(1.0).b
    err = max(np.max(np.abs(b0 - [1, 5 / 6, 1 / 6, 0])), np.max(np.abs(b1 - [1, 1, 5 / 6, 1 / 6])))
    acceptance(1, "cumulative basis at u=0 and u=1", err <= 1e-12, f"max deviation {err:.2e} (tol 1e-12)")


def test_02_screw_oracle_end_to_end(acceptance):
    start = time.perf_counter()
    traj, vel = gen_screw(ScrewSpec(v=(0.5, 0.2, 0.0), w=(0.0, 0.0, 0.2), duration=20, rate=10))
    traj = parse_tum(format_tum(traj))  # through the file format as well
    spline = fit(resample_uniform(traj))
    t, v, w = velocity_arrays(vel)
    inside = spline.contains(t)
    v_s, w_s = spline.velocities_at(t[inside])
    ev = float(np.max(np.linalg.norm(v_s - v[inside], axis=1)))
    ew = float(np.max(np.linalg.norm(w_s - w[inside], axis=1)))
    elapsed = time.perf_counter() - start
    ok = ev < 1e-3 and ew < 1e-4 and elapsed < 1.0 and np.count_nonzero(inside) == len(t) - 2
    acceptance(2, "screw oracle end to end", ok,
               f"max |dv| {ev:.2e} m/s (tol 1e-3), max |dw| {ew:.2e} rad/s (tol 1e-4), "
               f"{np.count_nonzero(inside)} interior instants, {elapsed:.3f} s")


def test_03_derivative_check(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    poses = [Pose(so3_exp(rng.normal(size=3)), rng.normal(size=3))]
    for _ in range(19):
        poses.append(poses[-1] @ se3_exp(rng.normal(scale=0.3, size=6)))
    spline = fit(Trajectory.from_poses(np.arange(20) * 0.1, poses))
    lo, hi = spline.valid_span
    h = 1e-5
    worst = 0.0
    for t in rng.uniform(lo + h, hi - h, 100):
        v, w = spline.velocities_at(t)
        a, b = spline.pose_at(t - h), spline.pose_at(t + h)
        fv = (b.translation - a.translation) / (2 * h)
        fw = log_so3(quat_multiply(b.rotation.quat, quat_conjugate(a.rotation.quat))) / (2 * h)
        worst = max(worst, np.linalg.norm(v - fv) / np.linalg.norm(fv), np.linalg.norm(w - fw) / np.linalg.norm(fw))
    elapsed = time.perf_counter() - start
    acceptance(3, "analytic velocity vs central differences", worst < 1e-4 and elapsed < 1.0,
               f"max relative error {worst:.2e} (tol 1e-4) at 100 times, {elapsed:.3f} s")


def test_04_perfect_trajectory_identity(acceptance):
    gt, _ = gen_wave(WaveSpec(duration=30))
    a = ate(gt, gt, align="rigid").rmse
    r = rpe(gt, gt)
    res = evaluate_sequence(gt, gt)
    ok = a < 1e-9 and r.trans_rmse < 1e-9 and r.rot_rmse < 1e-9 and res.r_p >= 1 - 1e-6 and res.r_r >= 1 - 1e-6
    acceptance(4, "est = gt gives perfect scores", ok,
               f"ATE {a:.1e}, RPE ({r.trans_rmse:.1e}, {r.rot_rmse:.1e}), R_p {res.r_p:.9f}, R_r {res.r_r:.9f}")


def test_05_coverage_arithmetic(acceptance):
    direct = robustness_auc(ErrorSeries.from_errors(np.zeros(500), gt_total=1000)).auc
    # Same case through the full pipeline: estimate = first half of gt.
    gt, _ = gen_wave(WaveSpec(duration=60))
    half = gt.select(np.arange(len(gt) // 2 + 1))
    piped = evaluate_sequence(half, gt).r_p
    ok = abs(direct - 2 / 3) < 1e-3
    acceptance(5, "half coverage, zero error gives R_p = 2/3", ok,
               f"R_p {direct:.6f} (tol 1e-3); pipeline with half-span estimate {piped:.4f}")


def test_06_auc_convergence(acceptance):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(50, 2000))
        e = rng.lognormal(mean=-2.5, sigma=1.0, size=n)
        series = ErrorSeries.from_errors(e, gt_total=n + int(rng.integers(0, n)))
        worst = max(worst, abs(robustness_auc(series, 100).auc - robustness_auc(series, 100000).auc))
    acceptance(6, "AUC with 100 vs 100000 thresholds", worst < 1e-3, f"max difference {worst:.2e} over 10 seeds (tol 1e-3)")


def _mean_rp(gt, specs, config):
    values = np.array([evaluate_sequence(degrade(gt, s), gt, config).r_p for s in specs])
    return values.mean(), values.std(ddof=1) / math.sqrt(len(values))


def test_07_degradation_monotonicity(acceptance):
    start = time.perf_counter()
    gt, _ = gen_wave(WaveSpec(duration=30))
    config = EvalConfig(resample_dt=0.1)
    seeds = range(20)
    drop = [_mean_rp(gt, [DegradationSpec(dropout_fraction=f, seed=s) for s in seeds], config) for f in (0.0, 0.25, 0.5)]
    noise = [_mean_rp(gt, [DegradationSpec(noise_sigma_vel=v, seed=s) for s in seeds], config) for v in (0.0, 0.1, 0.3)]
    drop_ok = drop[0][0] > drop[1][0] > drop[2][0]
    noise_ok = all(noise[k + 1][0] <= noise[k][0] + max(noise[k][1], noise[k + 1][1]) for k in range(2))
    elapsed = time.perf_counter() - start
    acceptance(7, "R_p decreases under dropout and velocity noise", drop_ok and noise_ok and elapsed < 30,
               "dropout 0/25/50%: " + "/".join(f"{m:.4f}" for m, _ in drop)
               + "; noise 0/0.1/0.3 m/s: " + "/".join(f"{m:.4f}+-{se:.4f}" for m, se in noise)
               + f"; {elapsed:.1f} s")


def test_08_spike_sensitivity(acceptance):
    gt, _ = gen_wave(WaveSpec(duration=100, rate=10))
    spiked = degrade(gt, DegradationSpec(spike=(50.0, (1.0, 0.0, 0.0))))
    clean_res = evaluate_sequence(gt, gt)
    spike_res = evaluate_sequence(spiked, gt)
    d_ate = abs(spike_res.ate.rmse - clean_res.ate.rmse)
    d_rp = clean_res.r_p - spike_res.r_p
    bound = 1.0 / math.sqrt(len(gt)) * 1.1
    ok = d_ate < 0.11 and d_ate < bound and d_rp > 1e-3
    acceptance(8, "single 1 m spike: small ATE change, R_p drop", ok,
               f"ATE change {d_ate:.4f} m (tol 0.11, bound {bound:.4f}), R_p drop {d_rp:.4f} (> 1e-3)")


def test_09_invariances(acceptance):
    gt, _ = gen_wave(WaveSpec(duration=30))
    rng = np.random.default_rng(9)
    est = degrade(gt, DegradationSpec(noise_sigma_trans=0.05, noise_sigma_rot=0.01, seed=3))
    S = Pose(so3_exp((0.7, -1.1, 2.3)), (12.0, -4.0, 3.5))
    base_ate = ate(est, gt).rmse
    d_ate = abs(ate(transformed(est, S), transformed(gt, S)).rmse - base_ate)
    base = rpe(est, gt)
    d_rpe = 0.0
    for left_est in (True, False):
        S2 = Pose(so3_exp(rng.normal(size=3)), rng.normal(size=3) * 10)
        r = rpe(transformed(est, S2), gt) if left_est else rpe(est, transformed(gt, S2))
        d_rpe = max(d_rpe, abs(r.trans_rmse - base.trans_rmse), abs(r.rot_rmse - base.rot_rmse))
    acceptance(9, "ATE joint-rigid and RPE left invariance", d_ate < 1e-9 and d_rpe < 1e-9,
               f"ATE change {d_ate:.1e}, RPE change {d_rpe:.1e} (tol 1e-9)")


def test_10_format_fidelity(acceptance):
    rng = np.random.default_rng(10)
    n = 10000
    traj = Trajectory(1.7e9 + np.cumsum(rng.uniform(0.005, 0.05, n)), rng.normal(scale=50, size=(n, 3)), rng.normal(size=(n, 4)))
    buf = io.StringIO()
    write_tum(traj, buf)
    text = buf.getvalue()
    once = parse_tum(text)
    twice = parse_tum(format_tum(once))
    err = max(
        float(np.max(np.abs(twice.t - traj.t))),
        float(np.max(np.abs(twice.positions - traj.positions))),
        float(np.max(np.abs(twice.quats - traj.quats))),
    )
    lines = text.splitlines()
    malformed = {
        "wrong field count": "1 2 3",
        "non-numeric": "1.0 0 0 x 0 0 0 1",
        "zero quaternion": "1.0 0 0 0 0 0 0 0",
        "non-finite": "1.0 nan 0 0 0 0 0 1",
    }
    line_numbers_ok = True
    for k, bad in enumerate(malformed.values()):
        where = 100 + 1000 * k
        broken = "\n".join(lines[:where - 1] + [bad] + lines[where:])
        try:
            parse_tum(broken)
            line_numbers_ok = False
        except ParseError as exc:
            # Message is "[source:]line: reason".
            line_numbers_ok &= exc.line == where and re.match(rf"(.*:)?{where}: ", str(exc)) is not None
    acceptance(10, "TUM roundtrip on 10k lines, line-numbered errors", len(lines) == n and err <= 1e-15 and line_numbers_ok,
               f"max roundtrip deviation {err:.1e} (tol 1e-15); {len(malformed)} malformed cases report their line: {line_numbers_ok}")


def test_11_performance(acceptance):
    gt, _ = gen_wave(WaveSpec(duration=999.9, rate=10))
    est = degrade(gt, DegradationSpec(noise_sigma_trans=0.02, noise_sigma_rot=0.002, seed=11))
    gt_text, est_text = format_tum(gt), format_tum(est)
    config = EvalConfig(n_thresholds=1000)
    timings = []
    for _ in range(3):
        start = time.perf_counter()
        res = evaluate_sequence(parse_tum(est_text), parse_tum(gt_text), config)
        timings.append(time.perf_counter() - start)
    best = min(timings)
    ok = len(gt) == len(est) == 10000 and res.complete and len(res.curves[0]) == 1000 and best < 1.0
    acceptance(11, "10k vs 10k poses full evaluation", ok,
               f"best of 3: {best:.3f} s (runs {', '.join(f'{t:.3f}' for t in timings)}), limit 1 s, includes parsing")
