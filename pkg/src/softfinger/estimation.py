"""Per-trial creep fits and distribution estimates across repeated trials."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .distributions import JointDistributions, LogNormalShape, NormalShape, ParameterDistributions
from .errors import ConfigError, DegenerateError, FitError
from .rng import ordered_map
from .viscoelastic import JointViscoelasticity, Trajectory

log = logging.getLogger(__name__)

__all__ = [
    "TrialSet",
    "CreepFit",
    "EstimationResult",
    "fit_joint_creep",
    "fit_creep_params",
    "outlier_mask",
    "reject_outliers",
    "fit_lognormal",
    "fit_normal",
    "density_histogram",
    "estimate_distributions",
]

N_STARTS = 8
MAD_TO_SD = 1.4826


@dataclass
class TrialSet:
    """Repeated trials with their declared per-joint step torques.

    ``torque`` is one vector shared by all trials or one row per trial.
    """

    trials: list[Trajectory]
    torque: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.torque = np.asarray(self.torque, dtype=float)
        if not self.names:
            self.names = [f"trial_{i:03d}" for i in range(len(self.trials))]
        if len(self.names) != len(self.trials):
            raise ConfigError("one name per trial is required")
        if self.torque.ndim == 2 and self.torque.shape[0] != len(self.trials):
            raise ConfigError(f"{self.torque.shape[0]} torque rows for {len(self.trials)} trials")
        if self.torque.ndim not in (1, 2):
            raise ConfigError("torque must be a vector or one row per trial")
        for trial in self.trials:
            if trial.n_joints != self.n_joints:
                raise ConfigError(
                    f"trial has {trial.n_joints} joints but {self.n_joints} torques were declared"
                )

    @property
    def n_joints(self) -> int:
        return self.torque.shape[-1]

    def torque_of(self, i: int) -> np.ndarray:
        return self.torque if self.torque.ndim == 1 else self.torque[i]

    def __len__(self):
        return len(self.trials)


@dataclass(frozen=True)
class CreepFit:
    params: JointViscoelasticity
    q_ini: float
    cost: float
    n_samples: int


def _design(t, rate):
    return np.column_stack([np.ones_like(t), -np.expm1(-rate * t), t])


def _model(theta, t, K):
    with np.errstate(all="ignore"):
        c_v, c_p, k_v = np.exp(theta[:3])
        return theta[3] - (K / k_v) * np.expm1(-(k_v / c_v) * t) + (K / c_p) * t


def _jacobian(theta, t, K):
    jac = np.empty((t.size, 4))
    with np.errstate(all="ignore"):
        c_v, c_p, k_v = np.exp(theta[:3])
        rate = k_v / c_v
        amp = K / k_v
        d_rate = amp * t * np.exp(-rate * t) * rate
        jac[:, 0] = -d_rate
        jac[:, 1] = -(K / c_p) * t
        jac[:, 2] = amp * np.expm1(-rate * t) + d_rate
    jac[:, 3] = 1.0
    return jac


def fit_joint_creep(t, q, K: float) -> CreepFit:
    """Least-squares fit of the step response to one joint's angle samples.

    Optimizes ``(log c_v, log c_p, log k_v, q_ini)`` with Levenberg-Marquardt
    from ``N_STARTS`` starts whose rate ``k_v/c_v`` is spread over decades
    (amplitudes for each start come from a linear solve).  Raises
    :class:`FitError` when the data cannot identify positive parameters.
    """
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    if t.shape != q.shape or t.ndim != 1:
        raise ConfigError("t and q must be 1-D arrays of equal length")
    if t.size < 5:
        raise FitError(f"need at least 5 samples, got {t.size}")
    if not np.all(np.isfinite(q)):
        raise FitError("non-finite angle samples")
    if K == 0 or not np.isfinite(K):
        raise FitError("zero step torque: c_v, c_p, k_v are not identifiable")
    span = t[-1] - t[0]
    dt_min = np.min(np.diff(t))
    if span <= 0 or dt_min <= 0:
        raise FitError("sample times must be strictly increasing")
    if np.ptp(q) == 0:
        raise FitError("constant trajectory: c_v, c_p, k_v are not identifiable")

    t_rel = t - t[0]
    rates = np.geomspace(0.3 / span, 3.0 / dt_min, N_STARTS)
    best = None
    for rate0 in rates:
        coef, *_ = np.linalg.lstsq(_design(t_rel, rate0), q, rcond=None)
        q0, amp, slope = coef
        inv_kv = max(amp / K, 1e-12)
        inv_cp = max(slope / K, 1e-12)
        k_v0 = 1.0 / inv_kv
        theta0 = np.array([np.log(k_v0 / rate0), np.log(1.0 / inv_cp), np.log(k_v0), q0])
        try:
            res = optimize.least_squares(
                lambda th: _model(th, t_rel, K) - q, theta0,
                jac=lambda th: _jacobian(th, t_rel, K),
                method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=4000,
            )
        except (ValueError, FloatingPointError) as exc:
            log.debug("start rate=%g failed: %s", rate0, exc)
            continue
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.cost):
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None or best.status <= 0:
        raise FitError("least squares did not converge from any start")

    with np.errstate(over="ignore"):
        c_v, c_p, k_v = np.exp(best.x[:3])
        rate = k_v / c_v
    if not np.isfinite([c_v, c_p, k_v, rate]).all() or c_v <= 0 or k_v <= 0:
        raise FitError("parameters diverged at the optimum")
    if rate * span < 0.05 or rate * dt_min > 50.0:
        raise FitError(f"relaxation rate {rate:.3g}/s is not resolved by the sampled window")
    # interior check: the unconstrained amplitudes at the optimal rate must keep their signs
    coef, *_ = np.linalg.lstsq(_design(t_rel, rate), q, rcond=None)
    if coef[1] / K <= 0 or coef[2] / K <= 0:
        raise FitError(
            f"negative parameter at optimum (1/k_v={coef[1] / K:.3g}, 1/c_p={coef[2] / K:.3g})"
        )
    # the step is taken to start at the first sample
    return CreepFit(JointViscoelasticity(c_v, c_p, k_v), float(best.x[3]), float(best.cost), t.size)


def fit_creep_params(traj: Trajectory, K) -> list[CreepFit]:
    """Fit every joint of a trajectory; raise :class:`FitError` naming all failing joints."""
    K = np.broadcast_to(np.asarray(K, dtype=float), (traj.n_joints,))
    fits, errors = [], {}
    for j in range(traj.n_joints):
        try:
            fits.append(fit_joint_creep(traj.times, traj.angles[:, j], K[j]))
        except FitError as exc:
            fits.append(None)
            errors[j] = str(exc)
    if errors:
        detail = "; ".join(f"joint {j + 1}: {msg}" for j, msg in errors.items())
        err = FitError(f"creep fit failed for {detail}")
        err.fits = fits
        err.joint_errors = errors
        raise err
    return fits


def outlier_mask(values, threshold: float = 3.0, scale: float = MAD_TO_SD, log_space: bool = True) -> np.ndarray:
    """Boolean mask of values kept by the median-absolute-deviation rule.

    Nonpositive values are always dropped.  The remaining values (in log
    space by default) are kept when within ``threshold * scale * MAD`` of
    their median; the rule is re-applied until nothing more is removed, so
    the result is a fixed point.  With ``MAD == 0`` only values equal to the
    median survive.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ConfigError("reject_outliers needs a nonempty 1-D sequence")
    keep = np.isfinite(x) & (x > 0)
    while keep.any():
        y = np.log(x[keep]) if log_space else x[keep]
        med = np.median(y)
        dev = np.abs(y - med)
        mad = np.median(dev)
        inside = dev == 0 if mad == 0 else dev <= threshold * scale * mad
        if inside.all():
            break
        idx = np.flatnonzero(keep)
        keep[idx[~inside]] = False
    return keep


def reject_outliers(values, threshold: float = 3.0, scale: float = MAD_TO_SD, log_space: bool = True) -> np.ndarray:
    """Values surviving :func:`outlier_mask`, in their original order."""
    x = np.asarray(values, dtype=float)
    keep = outlier_mask(x, threshold, scale, log_space)
    if not keep.any():
        raise DegenerateError("no values survive outlier rejection")
    return x[keep]


def fit_lognormal(samples) -> LogNormalShape:
    """Closed-form maximum likelihood log-normal fit."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 2:
        raise DegenerateError(f"need at least 2 samples, got {x.size}")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ConfigError("log-normal samples must be finite and positive")
    logs = np.log(x)
    sigma = float(np.std(logs))
    if sigma == 0:
        raise DegenerateError("all samples identical; log-normal sigma would be zero")
    return LogNormalShape(sigma=sigma, mu=float(np.mean(logs)))


def fit_normal(samples) -> NormalShape:
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 2:
        raise DegenerateError(f"need at least 2 samples, got {x.size}")
    sd = float(np.std(x, ddof=1))
    if sd == 0:
        raise DegenerateError("all samples identical; normal sd would be zero")
    return NormalShape(mean=float(np.mean(x)), sd=sd)


def density_histogram(values, bins=None):
    """Histogram normalized to unit area, square-root rule for the bin count."""
    x = np.asarray(values, dtype=float)
    if bins is None:
        bins = max(1, int(np.ceil(np.sqrt(x.size))))
    return np.histogram(x, bins=bins, density=True)


@dataclass
class EstimationResult:
    distributions: ParameterDistributions
    fits: list[list[CreepFit | None]]  # [trial][joint]
    failures: dict[int, list[tuple[str, str]]]  # joint -> [(trial name, reason)]
    kept: dict[tuple[int, str], np.ndarray]  # (joint, parameter) -> retained values


def estimate_distributions(trials: TrialSet, min_fits: int = 10, workers: int = 1,
                           threshold: float = 3.0) -> EstimationResult:
    """Per-trial fits, outlier rejection per parameter, then distribution fits per joint.

    ``c_v``, ``c_p``, ``k_v`` get log-normal fits after outlier rejection at
    ``threshold`` scaled MADs, and the initial angle a normal fit.  Joints
    with fewer than ``min_fits`` successful trial fits raise
    :class:`FitError` carrying the failure counts.
    """
    n_joints = trials.n_joints
    if len(trials) < 2:
        raise DegenerateError("at least 2 trials are needed for a distribution fit")

    def fit_trial(i):
        trial, torque = trials.trials[i], trials.torque_of(i)
        row, errs = [], []
        for j in range(n_joints):
            try:
                row.append(fit_joint_creep(trial.times, trial.angles[:, j], torque[j]))
                errs.append(None)
            except FitError as exc:
                row.append(None)
                errs.append(str(exc))
        return row, errs

    results = ordered_map(fit_trial, range(len(trials)), workers)
    fits = [row for row, _ in results]
    failures = {j: [] for j in range(n_joints)}
    for name, (_, errs) in zip(trials.names, results):
        for j, msg in enumerate(errs):
            if msg is not None:
                failures[j].append((name, msg))

    short = {j + 1: len(trials) - len(f) for j, f in failures.items() if len(trials) - len(f) < min_fits}
    if short:
        counts = ", ".join(f"joint {j}: {ok} usable of {len(trials)}" for j, ok in short.items())
        raise FitError(f"too few successful creep fits ({counts}; need {min_fits})")

    joints, kept = [], {}
    for j in range(n_joints):
        good = [row[j] for row in fits if row[j] is not None]
        shapes = []
        for name, attr in (("c_v", "c_v"), ("c_p", "c_p"), ("k_v", "k_v")):
            values = reject_outliers(np.sort([getattr(f.params, attr) for f in good]), threshold)
            kept[(j, name)] = values
            shapes.append(fit_lognormal(values))
        qini = np.sort([f.q_ini for f in good])
        kept[(j, "q_ini")] = qini
        joints.append(JointDistributions(*shapes, fit_normal(qini)))
    return EstimationResult(ParameterDistributions(tuple(joints)), fits, failures, kept)
