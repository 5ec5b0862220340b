"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary.

Run with ``pytest tests/test_acceptance.py`` (add ``-s`` for no capture).
Joint-level analyses use the canonical analysis joints (1 and 2); the
joint-3 limitation is pinned by the strict xfail diagnostics at the end.
"""

import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from softfinger.cli import generate_trials, main
from softfinger.config import default_config, parse_config
from softfinger.distributions import REFERENCE_SHAPES, LogNormalShape, canonical_distributions
from softfinger.errors import NumericalError
from softfinger.estimation import TrialSet, estimate_distributions, reject_outliers
from softfinger.finger import FingerGeometry
from softfinger.rvt import kde_density, l1_distance, marginal_pdf, mc_sample_trajectories, moment_band
from softfinger.sobol import creep_sensitivity_series, default_time_grid, sobol_first_order
from softfinger.viscoelastic import (
    JointViscoelasticity,
    simulate_full,
    simulate_quasi_static,
    simulate_quasi_static_wire,
    step_response,
)

CANONICAL = default_config()
ANALYSIS_JOINTS = CANONICAL.analysis.joints
DISTS = CANONICAL.parameter_distributions()
TORQUE = CANONICAL.step_torque()


def test_criterion_1_analytic_numeric_equivalence(criterion):
    rng = np.random.default_rng(0)
    dists = canonical_distributions()
    params, q_ini = [], rng.normal(0.0, 0.07, 50)
    for i in range(50):
        d = dists[i % 3]
        params.append(JointViscoelasticity(*(np.exp(s.mu + s.sigma * rng.standard_normal()) for s in (d.cv, d.cp, d.kv))))
    K = np.full(50, 0.02)
    start = time.perf_counter()
    traj = simulate_quasi_static(params, K, q_ini, (0.0, 30.0), 1e-3)
    elapsed = time.perf_counter() - start
    err = max(np.max(np.abs(traj.angles[:, i] - step_response(p, K[i], q_ini[i], traj.times)))
              for i, p in enumerate(params))
    criterion(1, err <= 1e-6 and elapsed < 30 and traj.times.size == 30_001,
              f"50 tuples, max |numeric - closed form| = {err:.2e} rad (<= 1e-6), {elapsed:.1f} s (< 30 s)")


def test_criterion_2_quasi_static_assumption(criterion):
    geom, params, q0 = CANONICAL.finger_geometry(), CANONICAL.joint_params(), CANONICAL.initial_angles()
    tensions = np.array(CANONICAL.drive.tensions)
    start = time.perf_counter()
    reference = simulate_quasi_static_wire(geom, params, tensions, q0, (0.0, 1.0), 1e-3)
    after = reference.times >= 0.1 - 1e-12
    gaps = []
    for scale in (1.0, 0.5, 0.25):
        scaled = FingerGeometry(geom.link_lengths, tuple(m * scale for m in geom.link_masses),
                                tuple(i * scale for i in geom.link_inertias), geom.wire_offset_d, geom.joint_length)
        full = simulate_full(scaled, params, tensions, q0, (0.0, 1.0), 1e-3)
        gaps.append(np.max(np.abs(full.angles[after] - reference.angles[after])))
    elapsed = time.perf_counter() - start
    ok = gaps[0] < 1e-3 and gaps[0] > gaps[1] > gaps[2] and elapsed < 120
    criterion(2, ok, f"max gap after 0.1 s for mass scale 1, 0.5, 0.25: "
                     f"{', '.join(f'{g:.2e}' for g in gaps)} rad (< 1e-3, decreasing), {elapsed:.1f} s (< 120 s)")


def test_criterion_3_rvt_against_monte_carlo(criterion):
    start = time.perf_counter()
    worst_l1, sup0 = 0.0, 0.0
    details = []
    for j in ANALYSIS_JOINTS:
        d, K = DISTS[j - 1], float(TORQUE[j - 1])
        times = [0.0, 10.0, 20.0, 30.0]
        mc = mc_sample_trajectories(d, K, times, 1_000_000, seed=0)
        for i, t in enumerate(times):
            curve = marginal_pdf(t, K, d)
            l1 = l1_distance(curve.support, curve.density, kde_density(mc.angles[:, i], curve.support))
            worst_l1 = max(worst_l1, l1)
            details.append(f"{l1:.4f}")
            if t == 0.0:
                sup0 = max(sup0, np.max(np.abs(curve.density - d.qini.pdf(curve.support))))
    elapsed = time.perf_counter() - start
    ok = worst_l1 < 0.05 and sup0 < 1e-6 and elapsed < 300
    criterion(3, ok, f"joints {ANALYSIS_JOINTS}, L1 at t=0/10/20/30 = {'/'.join(details)} (< 0.05), "
                     f"t=0 sup error {sup0:.1e} (< 1e-6), {elapsed:.1f} s (< 300 s)")


def test_criterion_4_density_evolution(criterion):
    start = time.perf_counter()
    ok, parts = True, []
    for j in ANALYSIS_JOINTS:
        d, K = DISTS[j - 1], float(TORQUE[j - 1])
        band = moment_band(default_time_grid(30.0, 0.1), K, d)
        peaks = np.array([marginal_pdf(t, K, d).peak() for t in np.arange(0.0, 31.0, 2.0)])
        ev_up = np.all(np.diff(band.expected_value) >= 0)
        peak_down = np.all(np.diff(peaks) <= 0)
        sd_up = band.standard_deviation[-1] > band.standard_deviation[0]
        ok &= bool(ev_up and peak_down and sd_up)
        parts.append(f"joint {j}: EV {band.expected_value[0]:.3f}->{band.expected_value[-1]:.3f} "
                     f"{'monotone' if ev_up else 'NOT monotone'}, peak {peaks[0]:.2f}->{peaks[-1]:.2f} "
                     f"{'non-increasing' if peak_down else 'INCREASES'}, "
                     f"SD {band.standard_deviation[0]:.3f}->{band.standard_deviation[-1]:.3f}")
    elapsed = time.perf_counter() - start
    criterion(4, ok and elapsed < 60, f"{'; '.join(parts)}; {elapsed:.1f} s (< 60 s)")


def test_criterion_5_sobol_estimator(criterion):
    start = time.perf_counter()
    truth = np.array([0.2, 0.8, 0.0, 0.0])
    additive = lambda u: u[:, 0] + 2 * u[:, 1]  # noqa: E731
    est = sobol_first_order(additive, 4, 100_000, seed=0).first_order
    sizes = np.array([10_000, 40_000, 160_000])
    medians = np.array([
        np.median([np.max(np.abs(sobol_first_order(additive, 4, int(n), 20 * level + s).first_order - truth))
                   for s in range(20)])
        for level, n in enumerate(sizes)
    ])
    slope = np.polyfit(np.log(sizes), np.log(medians), 1)[0]
    elapsed = time.perf_counter() - start
    err = np.max(np.abs(est - truth))
    ok = err < 0.02 and np.all(np.diff(medians) < 0) and -0.7 < slope < -0.3 and elapsed < 120
    criterion(5, ok, f"additive S = {np.round(est, 4).tolist()} (max error {err:.4f} < 0.02); median error at "
                     f"n=1e4/4e4/1.6e5 = {'/'.join(f'{m:.4f}' for m in medians)}, log-log slope {slope:.2f} "
                     f"(-0.5 +- 0.2); {elapsed:.1f} s (< 120 s)")


def test_criterion_6_sensitivity_anchors(criterion):
    start = time.perf_counter()
    ok, parts = True, []
    for j in ANALYSIS_JOINTS:
        s = creep_sensitivity_series(DISTS[j - 1], float(TORQUE[j - 1]), default_time_grid(), n=100_000, seed=0)
        t, cv, cp = s.times, s.indices["c_v"], s.indices["c_p"]
        total = s.sum()
        anchor = abs(s.indices["q_ini"][0] - 1.0) <= 0.02
        sum_err = np.max(np.abs(total - 1.0))
        peak = int(np.argmax(cv))
        cv_shape = cv[0] == 0.0 and 0 < t[peak] <= 5.0 and cv[-1] < 0.1 * cv[peak]
        cp_up = np.all(np.diff(cp[t >= 5.0 - 1e-9]) >= 0)
        all_idx = np.array([s.indices[n] for n in s.indices])
        in_range = all_idx.min() >= -0.02 and all_idx.max() <= 1.02
        ok &= bool(anchor and sum_err <= 0.03 and cv_shape and cp_up and in_range)
        parts.append(f"joint {j}: S_qini(0)={s.indices['q_ini'][0]:.4f}, max|sum-1|={sum_err:.4f}, "
                     f"S_cv peak {cv[peak]:.3f} at {t[peak]:.1f} s -> {cv[-1]:.1e} at 30 s, "
                     f"S_cp {'non-decreasing' if cp_up else 'DECREASES'} after 5 s, "
                     f"indices in [{all_idx.min():.3f}, {all_idx.max():.3f}]")
    elapsed = time.perf_counter() - start
    criterion(6, ok and elapsed < 600, f"{'; '.join(parts)}; {elapsed:.1f} s (< 600 s)")


def test_criterion_7_estimation_round_trip(criterion):
    start = time.perf_counter()
    trials, torques, _ = generate_trials(CANONICAL, 100)
    result = estimate_distributions(TrialSet(trials, torques))
    misses = []
    for j in range(3):
        for name in ("c_v", "c_p", "k_v"):
            sigma, mu = REFERENCE_SHAPES[name][j]
            fit = getattr(result.distributions[j], name.replace("_", ""))
            e_sigma, e_mu = abs(fit.sigma / sigma - 1), abs(fit.mu / mu - 1)
            if e_sigma > 0.15 or e_mu > 0.05:
                misses.append(f"{name} joint {j + 1} (sigma {fit.sigma:.4f} vs {sigma}, {e_sigma:.0%}; "
                              f"mu {fit.mu:.4f} vs {mu}, {e_mu:.1%})")

    rng = np.random.default_rng(0)
    injection_misses, worst_loss = [], 0.0
    for name, shapes in REFERENCE_SHAPES.items():
        for j, (sigma, mu) in enumerate(shapes):
            shape = LogNormalShape(sigma, mu)
            inliers = np.exp(mu + sigma * rng.standard_normal(1000))
            outliers = np.full(10, 50 * shape.median)
            kept = reject_outliers(np.concatenate([inliers, outliers]))
            removed = 10 - np.isin(outliers, kept).sum()
            loss = 1 - np.isin(inliers, kept).sum() / inliers.size
            worst_loss = max(worst_loss, loss)
            if removed < 10 or loss > 0.02:
                injection_misses.append(f"{name} joint {j + 1}: {removed}/10 removed, {loss:.1%} inliers lost")
    elapsed = time.perf_counter() - start
    ok = not misses and not injection_misses and elapsed < 300
    detail = (f"round trip misses {len(misses)}/9 (sigma 15%, mu 5%)"
              + (": " + "; ".join(misses) if misses else "")
              + f"; injection misses {len(injection_misses)}/9, worst inlier loss {worst_loss:.1%}"
              + (": " + "; ".join(injection_misses) if injection_misses else "")
              + f"; {elapsed:.1f} s (< 300 s)")
    criterion(7, ok, detail)


REDUCED = {
    "simulation.t_end": 2.0,
    "simulation.full_t_end": 0.2,
    "simulation.models": ["quasi_static", "quasi_static_wire", "full"],
    "trials.n_trials": 12,
    "trials.t_end": 10.0,
    "pdf.times": [0.0, 5.0],
    "pdf.mc_samples": 50_000,
    "pdf.grid_points": 128,
    "pdf.nodes": 16,
    "pdf.horizon": 5.0,
    "pdf.band_step": 0.5,
    "sobol.n": 20_000,
    "sobol.horizon": 3.0,
    "seed": 7,
}
SUBDIRS = {"simulate": "simulate", "generate-trials": "trials", "fit": "fit", "pdf": "pdf",
           "sensitivity": "sensitivity"}


def _run_all(root: Path, workers: int):
    config = root / "config.yaml"
    config.write_text(yaml.safe_dump({**REDUCED, "output.dir": str(root / "out")}))
    codes = [main([command, "--config", str(config), "--workers", str(workers), "--no-plots"])
             for command in SUBDIRS]
    outputs = {}
    for command, sub in SUBDIRS.items():
        for p in sorted((root / "out" / sub).glob("*.csv")):
            outputs[f"{sub}/{p.name}"] = p.read_bytes()
    return codes, outputs


def test_criterion_8_cli_determinism(criterion, tmp_path):
    roots = [tmp_path / name for name in ("w1", "w2", "w1_again")]
    for r in roots:
        r.mkdir()
    codes_a, a = _run_all(roots[0], 1)
    codes_b, b = _run_all(roots[1], 2)
    codes_c, c = _run_all(roots[2], 1)
    differing = sorted(k for k in set(a) | set(b) | set(c) if not (a.get(k) == b.get(k) == c.get(k)))
    ok = codes_a == codes_b == codes_c == [0] * 5 and len(a) >= 12 and not differing
    criterion(8, ok, f"{len(a)} CSV files from 5 commands, workers 1 vs 2 vs rerun: "
                     + (f"differing {differing}" if differing else "byte-identical")
                     + f", exit codes {codes_a}")


@pytest.mark.xfail(raises=NumericalError, strict=True,
                   reason="joint 3 c_p spread (sigma 3.23) puts ~10% of the angle mass beyond 10 rad by 30 s")
def test_joint3_density_not_resolvable():
    marginal_pdf(30.0, float(TORQUE[2]), DISTS[2])


@pytest.mark.xfail(strict=True, reason="joint 3 angle variance is dominated by extreme c_p tails")
def test_joint3_index_sum():
    s = creep_sensitivity_series(DISTS[2], float(TORQUE[2]), default_time_grid(), n=100_000, seed=0)
    assert np.nanmax(np.abs(s.sum() - 1.0)) <= 0.03
