"""First-order Sobol indices of the creep response over time.

Parameters are mapped to the unit hypercube with their inverse CDFs and the
indices are estimated by plain Monte Carlo with the Homma-Saltelli product
estimator: two independent sample matrices ``A`` and ``B``, and for each
input ``i`` a matrix ``C_i`` equal to ``B`` with column ``i`` taken from ``A``::

    S_i = (mean(y_A * y_Ci) - f0^2) / D,    f0^2 ~ mean(y_A * y_B)

Estimating the squared mean by ``mean(y_A * y_B)`` (unbiased because ``A``
and ``B`` are independent) cancels the noise that a squared sample mean
would otherwise add to every index at once; an input with no effect gets an
index of exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import PARAMETER_NAMES, JointDistributions
from .errors import ConfigError, DegenerateError
from .rng import BLOCK_SIZE, block_ranges, ordered_map, uniform_block
from .viscoelastic import creep_displacement

__all__ = [
    "SobolResult",
    "SensitivitySeries",
    "to_unit_cube",
    "sobol_first_order",
    "creep_model",
    "creep_sensitivity_series",
    "default_time_grid",
]


def to_unit_cube(dists: JointDistributions) -> dict:
    """``{name: (F, F_inverse)}`` for ``c_v, c_p, k_v, q_ini``."""
    return {name: (shape.cdf, shape.ppf) for name, shape in zip(PARAMETER_NAMES, dists.shapes())}


@dataclass
class SobolResult:
    first_order: np.ndarray  # (k,) or (k, m) for vector outputs
    mean: np.ndarray
    variance: np.ndarray
    degenerate: np.ndarray  # True where the output variance vanishes
    total_order: np.ndarray | None = None


def _degenerate(var, second_moment):
    scale = np.maximum(second_moment, np.finfo(float).tiny)
    return var <= 1e-13 * scale


def _merge_moments(blocks):
    """Pooled mean and centered sum of squares from per-block ``(count, mean, M2)``."""
    count, mean, m2 = blocks[0]
    for n_b, mean_b, m2_b in blocks[1:]:
        total = count + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / total)
        m2 = m2 + m2_b + delta * delta * (count * n_b / total)
        count = total
    return mean, m2


def sobol_first_order(model, k: int, n: int, seed: int, workers: int = 1,
                      total_order: bool = False, min_n: int = 1000) -> SobolResult:
    """Monte Carlo first-order indices of ``model`` on the unit cube ``(0, 1)^k``.

    ``model`` maps an ``(m, k)`` array of points to ``(m,)`` or ``(m, T)``
    outputs.  Vector outputs get one index per column; columns with zero
    variance come back as NaN with ``degenerate`` set, while a scalar model
    with zero variance raises :class:`DegenerateError`.  With
    ``total_order=True`` the Jansen total-effect estimate
    ``mean((y_B - y_Ci)^2) / (2 D)`` is added for diagnostics.

    Samples are drawn per fixed-size block from counter-based streams and
    block sums are reduced in block order, so results are bit-identical for
    any ``workers``.
    """
    if n < min_n:
        raise ConfigError(f"n must be at least {min_n}, got {n}")
    if k < 1:
        raise ConfigError("k must be positive")

    def run(block):
        b, start, stop = block
        a = uniform_block(seed, 0, b, stop - start, k)
        bm = uniform_block(seed, 1, b, stop - start, k)
        y_a = np.asarray(model(a), dtype=float)
        y_b = np.asarray(model(bm), dtype=float)
        cross, lift, jump = [], [], []
        for i in range(k):
            c = bm.copy()
            c[:, i] = a[:, i]
            diff = np.asarray(model(c), dtype=float) - y_b
            cross.append((y_a * diff).sum(axis=0))
            lift.append(diff.sum(axis=0))
            if total_order:
                jump.append((diff * diff).sum(axis=0))
        y = np.concatenate([y_a, y_b])
        mean = y.mean(axis=0)
        return (y.shape[0], mean, ((y - mean) ** 2).sum(axis=0)), cross, lift, jump

    parts = ordered_map(run, block_ranges(n, BLOCK_SIZE), workers)
    f0, ss = _merge_moments([p[0] for p in parts])
    var = ss / (2 * n)
    degenerate = np.asarray(_degenerate(var, var + f0 ** 2))
    if degenerate.ndim == 0 and degenerate:
        raise DegenerateError("model output variance is zero; Sobol indices are undefined")
    safe_var = np.where(degenerate, np.nan, var)
    first = []
    for i in range(k):
        # sum (y_A - f0) (y_Ci - y_B): the pooled mean enters only through the lift term
        s_cross = sum(p[1][i] for p in parts) - f0 * sum(p[2][i] for p in parts)
        first.append(s_cross / n / safe_var)
    first = np.array(first)
    total = None
    if total_order:
        total = np.array([sum(p[3][i] for p in parts) / (2 * n) / safe_var for i in range(k)])
    return SobolResult(first, f0, var, degenerate, total)


def default_time_grid(horizon: float = 30.0, step: float = 0.1) -> np.ndarray:
    return np.round(np.arange(0, int(round(horizon / step)) + 1) * step, 12)


def creep_model(dists: JointDistributions, K: float, times):
    """Unit-cube model ``u -> q(times)`` for one joint."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    shapes = dists.shapes()

    def model(u):
        cv, cp, kv, qi = (shape.ppf(u[:, i]) for i, shape in enumerate(shapes))
        return qi[:, None] + creep_displacement(cv[:, None], cp[:, None], kv[:, None], K, times[None, :])

    return model


@dataclass
class SensitivitySeries:
    times: np.ndarray
    indices: dict  # name -> (T,) first-order index
    n_samples: int
    seed: int
    degenerate: np.ndarray = field(default=None)
    total: dict | None = None

    def sum(self) -> np.ndarray:
        return sum(self.indices[name] for name in PARAMETER_NAMES)


def creep_sensitivity_series(dists: JointDistributions, K: float, t_grid=None, n: int = 100_000,
                             seed: int = 0, workers: int = 1, total_order: bool = False) -> SensitivitySeries:
    """First-order indices of ``c_v, c_p, k_v, q_ini`` at every time in ``t_grid``.

    All times share the same sample matrices, so the curves are smooth in
    time.  Times where the angle has no variance (e.g. ``K = 0`` and a
    degenerate initial angle) are flagged rather than raised.
    """
    t_grid = default_time_grid() if t_grid is None else np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0:
        raise ConfigError("t_grid must not be empty")
    if np.any(t_grid < 0):
        raise ConfigError("times must be nonnegative")
    res = sobol_first_order(creep_model(dists, K, t_grid), 4, n, seed, workers, total_order)
    indices = {name: res.first_order[i] for i, name in enumerate(PARAMETER_NAMES)}
    total = None
    if total_order:
        total = {name: res.total_order[i] for i, name in enumerate(PARAMETER_NAMES)}
    return SensitivitySeries(t_grid, indices, n, seed, res.degenerate, total)
