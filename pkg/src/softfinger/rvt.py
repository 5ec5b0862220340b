"""Joint-angle densities by random variable transformation, with a Monte Carlo oracle.

The map ``(c_v, c_p, k_v, q_ini) -> (c_v, c_p, k_v, q)`` with
``q = q_ini + phi(c_v, c_p, k_v; t, K)`` only shears the last coordinate,
so its Jacobian determinant is exactly one and the joint density of
``(c_v, c_p, k_v, q)`` is::

    f_cv(c_v) f_cp(c_p) f_kv(k_v) f_qini(q - phi)

Marginalizing the three viscoelastic coefficients gives the angle density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .distributions import JointDistributions, lognormal_pdf
from .errors import ConfigError, NumericalError
from .rng import BLOCK_SIZE, block_ranges, ordered_map, uniform_block
from .viscoelastic import creep_displacement

__all__ = [
    "DensityCurve",
    "MomentBand",
    "MCSamples",
    "QuadratureConfig",
    "lognormal_pdf",
    "rvt_transformed_density",
    "quadrature_nodes",
    "marginal_pdf",
    "mc_sample_trajectories",
    "pilot_grid",
    "kde_density",
    "silverman_bandwidth",
    "l1_distance",
    "moment_band",
    "check_moment_agreement",
]

GRID_POINTS = 512
PILOT_SAMPLES = 100_000
PILOT_SEED = 20_240_601


@dataclass(frozen=True)
class QuadratureConfig:
    """Tensor Gauss-Legendre settings for the three coefficient axes."""

    nodes: int = 48
    tail: float = 1e-6  # each axis covers quantiles [tail, 1 - tail]
    prune: float = 1e-20  # drop node products lighter than this

    def __post_init__(self):
        if self.nodes < 2:
            raise ConfigError("quadrature needs at least 2 nodes per axis")
        if not 0 < self.tail < 0.5:
            raise ConfigError("quadrature tail must lie in (0, 0.5)")


@dataclass
class DensityCurve:
    support: np.ndarray
    density: np.ndarray
    time: float

    def integral(self) -> float:
        return float(integrate.trapezoid(self.density, self.support))

    def peak(self) -> float:
        return float(self.density.max())


@dataclass
class MomentBand:
    times: np.ndarray
    expected_value: np.ndarray
    standard_deviation: np.ndarray

    @property
    def lower(self):
        return self.expected_value - self.standard_deviation

    @property
    def upper(self):
        return self.expected_value + self.standard_deviation


@dataclass
class MCSamples:
    params: np.ndarray  # (n, 4) columns c_v, c_p, k_v, q_ini
    times: np.ndarray
    angles: np.ndarray  # (n, len(times))


def rvt_transformed_density(c_v, c_p, k_v, q, t, K, dists: JointDistributions):
    """Joint density of ``(c_v, c_p, k_v, q)`` at time ``t`` (broadcasting)."""
    c_v, c_p, k_v = (np.asarray(x, dtype=float) for x in (c_v, c_p, k_v))
    if np.any(c_v <= 0) or np.any(c_p <= 0) or np.any(k_v <= 0):
        raise ConfigError("c_v, c_p and k_v must be strictly positive")
    if np.any(np.asarray(t) < 0):
        raise ConfigError("t must be nonnegative")
    shift = creep_displacement(c_v, c_p, k_v, K, t)
    return (
        lognormal_pdf(c_v, dists.cv)
        * lognormal_pdf(c_p, dists.cp)
        * lognormal_pdf(k_v, dists.kv)
        * dists.qini.pdf(np.asarray(q, dtype=float) - shift)
    )


def _axis_rule(shape, quad: QuadratureConfig):
    # Gauss-Legendre in the standardized log coordinate z = (log c - mu)/sigma,
    # where f_c(c) dc = phi(z) dz; truncation at the quantiles becomes |z| <= z_max.
    z_max = -special.ndtri(quad.tail)
    x, w = np.polynomial.legendre.leggauss(quad.nodes)
    z = z_max * x
    weights = z_max * w * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return np.exp(shape.mu + shape.sigma * z), weights


def quadrature_nodes(dists: JointDistributions, quad: QuadratureConfig = QuadratureConfig()):
    """Flattened tensor nodes ``(c_v, c_p, k_v)`` and weights summing to one.

    Weights are renormalized over the truncated box, i.e. the box is treated
    as the whole support.
    """
    axes = [_axis_rule(shape, quad) for shape in (dists.cv, dists.cp, dists.kv)]
    grids = np.meshgrid(*(a[0] for a in axes), indexing="ij")
    wgrid = np.einsum("i,j,k->ijk", *(a[1] for a in axes))
    w = wgrid.ravel()
    keep = w > quad.prune * w.max()
    w = w[keep] / w[keep].sum()
    return tuple(g.ravel()[keep] for g in grids), w


def marginal_pdf(t: float, K: float, dists: JointDistributions, grid=None,
                 quad: QuadratureConfig = QuadratureConfig(), chunk: int = 64,
                 check_normalization: bool = True) -> DensityCurve:
    """Density of the joint angle at time ``t`` on ``grid``.

    Without a grid, 512 uniform points spanning the [1e-4, 1 - 1e-4] quantile
    range of a Monte Carlo pilot are used; a supplied grid that misses that
    range is extended with its own spacing.
    """
    if t < 0:
        raise ConfigError("t must be nonnegative")
    pilot = pilot_grid(t, K, dists)
    if grid is None:
        grid = pilot
    else:
        grid = _cover(np.asarray(grid, dtype=float), pilot[0], pilot[-1])
    (cv, cp, kv), w = quadrature_nodes(dists, quad)
    shift = creep_displacement(cv, cp, kv, K, t)
    density = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        q = grid[start:start + chunk]
        density[start:start + chunk] = dists.qini.pdf(q[:, None] - shift[None, :]) @ w
    curve = DensityCurve(grid, density, float(t))
    if check_normalization:
        total = curve.integral()
        if abs(total - 1.0) > 1e-2:
            raise NumericalError(
                f"angle density at t={t} integrates to {total:.6f} over [{grid[0]:.4g}, {grid[-1]:.4g}] "
                f"({grid.size} points, {w.size} quadrature nodes); the grid does not resolve the density"
            )
    return curve


def _cover(grid, lo, hi):
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be a strictly increasing 1-D array with at least 2 points")
    step = np.min(np.diff(grid))
    parts = [grid]
    if lo < grid[0]:
        n = int(np.ceil((grid[0] - lo) / step))
        parts.insert(0, grid[0] - step * np.arange(n, 0, -1))
    if hi > grid[-1]:
        n = int(np.ceil((hi - grid[-1]) / step))
        parts.append(grid[-1] + step * np.arange(1, n + 1))
    return np.concatenate(parts)


def _draw_params(u, dists: JointDistributions):
    return np.column_stack([shape.ppf(u[:, i]) for i, shape in enumerate(dists.shapes())])


def mc_sample_trajectories(dists: JointDistributions, K: float, times, n: int, seed: int,
                           workers: int = 1, stream: int = 0) -> MCSamples:
    """``n`` independent parameter draws and their step responses at ``times``.

    Draws come from fixed-size counter-based blocks, so the output depends
    on ``seed`` only, never on ``workers``.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    times = np.atleast_1d(np.asarray(times, dtype=float))

    def run(block):
        b, start, stop = block
        params = _draw_params(uniform_block(seed, stream, b, stop - start, 4), dists)
        angles = params[:, 3:4] + creep_displacement(
            params[:, 0:1], params[:, 1:2], params[:, 2:3], K, times[None, :]
        )
        return params, angles

    parts = ordered_map(run, block_ranges(n, BLOCK_SIZE), workers)
    return MCSamples(np.concatenate([p for p, _ in parts]), times, np.concatenate([a for _, a in parts]))


def pilot_grid(t: float, K: float, dists: JointDistributions, n_points: int = GRID_POINTS,
               n_pilot: int = PILOT_SAMPLES, seed: int = PILOT_SEED, tail: float = 1e-4) -> np.ndarray:
    q = mc_sample_trajectories(dists, K, [t], n_pilot, seed).angles[:, 0]
    lo, hi = np.quantile(q, [tail, 1.0 - tail])
    return np.linspace(lo, hi, n_points)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.quantile(x, [0.75, 0.25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def kde_density(samples, grid, bandwidth: float | None = None, max_bins: int = 1 << 18) -> np.ndarray:
    """Gaussian kernel density estimate on ``grid`` (binned, FFT convolution).

    Samples are histogrammed at a resolution of ``bandwidth / 16`` over the
    grid padded by eight bandwidths, which carries every sample whose kernel
    reaches the grid; the histogram is then convolved with the sampled kernel.
    """
    x = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise NumericalError("kernel bandwidth is zero; samples are degenerate")
    lo, hi = grid[0] - 8 * h, grid[-1] + 8 * h
    n_bins = int(min(max_bins, np.ceil((hi - lo) / (h / 16))))
    edges = np.linspace(lo, hi, n_bins + 1)
    width = edges[1] - edges[0]
    counts, _ = np.histogram(x, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = int(np.ceil(8 * h / width))
    offsets = width * np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (offsets / h) ** 2) / (h * np.sqrt(2 * np.pi))
    smoothed = _fft_convolve(counts.astype(float), kernel)[half:half + n_bins] / x.size
    return np.interp(grid, centers, smoothed)


def _fft_convolve(a, b):
    n = a.size + b.size - 1
    size = 1 << (n - 1).bit_length()
    out = np.fft.irfft(np.fft.rfft(a, size) * np.fft.rfft(b, size), size)[:n]
    return np.maximum(out, 0.0)


def l1_distance(grid, f, g) -> float:
    return float(integrate.trapezoid(np.abs(np.asarray(f) - np.asarray(g)), grid))


def moment_band(t_grid, K: float, dists: JointDistributions, method: str = "quadrature",
                quad: QuadratureConfig = QuadratureConfig(), n: int = 100_000, seed: int = 0,
                workers: int = 1) -> MomentBand:
    """Expected joint angle and its standard deviation over ``t_grid``.

    ``"quadrature"`` integrates the transformed joint density over the
    tensor nodes (the initial angle contributes its mean and variance in
    closed form); ``"mc"`` uses :func:`mc_sample_trajectories`.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0):
        raise ConfigError("times must be nonnegative")
    if method == "quadrature":
        (cv, cp, kv), w = quadrature_nodes(dists, quad)
        mean = np.empty(t_grid.size)
        second = np.empty(t_grid.size)
        for start in range(0, t_grid.size, 16):
            ts = t_grid[start:start + 16]
            phi = creep_displacement(cv[:, None], cp[:, None], kv[:, None], K, ts[None, :])
            mean[start:start + 16] = w @ phi
            second[start:start + 16] = w @ (phi - (w @ phi)[None, :]) ** 2
        ev = mean + dists.qini.mean
        sd = np.sqrt(second + dists.qini.sd ** 2)
    elif method == "mc":
        samples = mc_sample_trajectories(dists, K, t_grid, n, seed, workers)
        ev = samples.angles.mean(axis=0)
        sd = samples.angles.std(axis=0, ddof=1)
    else:
        raise ConfigError(f"unknown moment method {method!r}; use 'quadrature' or 'mc'")
    return MomentBand(t_grid, ev, sd)


def check_moment_agreement(reference: MomentBand, mc: MomentBand, n: int, n_se: float = 4.0) -> np.ndarray:
    """Standardized EV differences; raise if any exceeds ``n_se`` standard errors."""
    se = mc.standard_deviation / np.sqrt(n)
    z = np.abs(reference.expected_value - mc.expected_value) / np.where(se > 0, se, np.inf)
    if np.any(z > n_se):
        worst = int(np.argmax(z))
        raise NumericalError(
            f"quadrature and Monte Carlo expected values diverge at t={reference.times[worst]:.3g} "
            f"({z[worst]:.1f} standard errors)"
        )
    return z
