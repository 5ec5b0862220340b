"""Command-line front end: ``softfinger <command> [options]``.

Each command writes into its own subdirectory of the output directory and
writes ``manifest.json`` there last.  Exit codes: 0 success, 2 config
error, 3 input-data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__, plots
from .config import RunConfig, config_hash, default_config, dump_config, load_config, parse_config
from .distributions import PARAMETER_NAMES
from .errors import ConfigError, InputDataError, NumericalError
from .estimation import density_histogram, estimate_distributions
from .io import MANIFEST_NAME, ResultManifest, atomic_write, file_sha256, read_trial_set, write_csv, \
    write_trajectory, write_trial_set
from .rng import block_generator, uniforms
from .rvt import kde_density, l1_distance, marginal_pdf, mc_sample_trajectories, moment_band, pilot_grid
from .sobol import creep_sensitivity_series, default_time_grid
from .viscoelastic import Trajectory, creep_displacement, simulate_full, simulate_quasi_static, \
    simulate_quasi_static_wire

log = logging.getLogger("softfinger")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4

# RNG streams, kept apart so commands never share draws
TRIAL_PARAM_STREAM = 10
TRIAL_NOISE_STREAM = 11
PDF_MC_STREAM = 20


class _Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command: str, cfg: RunConfig, root: Path):
        self.root = root
        self.plots = cfg.output.plots
        self.manifest = ResultManifest(command, config_hash(cfg), __version__, seed=cfg.seed)
        self.started = time.perf_counter()
        root.mkdir(parents=True, exist_ok=True)
        # an old manifest would vouch for outputs this run is about to replace
        (root / MANIFEST_NAME).unlink(missing_ok=True)
        self.output(atomic_write(root / "config.yaml", dump_config(cfg)))

    def output(self, path):
        self.manifest.add_output(path, self.root)
        return path

    def input(self, path):
        self.manifest.inputs[Path(path).as_posix()] = file_sha256(path)

    def finish(self) -> Path:
        self.manifest.duration_s = round(time.perf_counter() - self.started, 3)
        return self.manifest.write(self.root)


def cmd_simulate(cfg: RunConfig, args) -> int:
    run = _Run("simulate", cfg, _out(cfg) / "simulate")
    sim = cfg.simulation
    geom, params, q_ini = cfg.finger_geometry(), cfg.joint_params(), cfg.initial_angles()
    tensions = None if cfg.drive.tensions is None else np.array(cfg.drive.tensions)
    for model in sim.models:
        if model == "quasi_static":
            traj = simulate_quasi_static(params, cfg.step_torque(), q_ini, (0.0, sim.t_end), sim.dt, sim.record_every)
        elif model == "quasi_static_wire":
            if tensions is None:
                raise ConfigError("simulation.models: quasi_static_wire needs drive.tensions")
            traj = simulate_quasi_static_wire(geom, params, tensions, q_ini, (0.0, sim.t_end), sim.dt,
                                              sim.record_every)
        else:
            drive = {"tension_profile": tensions} if tensions is not None else {"torque_profile": cfg.step_torque()}
            traj = simulate_full(geom, params, q_ini=q_ini, t_span=(0.0, sim.full_t_end), dt=sim.dt,
                                 record_every=sim.record_every, **drive)
        run.output(write_trajectory(run.root / f"{model}.csv", traj))
        if run.plots:
            run.output(plots.plot_trajectory(run.root / f"{model}.svg", traj, model.replace("_", " ")))
        log.info("%s: %d samples, final angles %s", model, traj.times.size, np.round(traj.angles[-1], 6))
    run.finish()
    return EXIT_OK


def generate_trials(cfg: RunConfig, n_trials: int):
    """Synthetic repeated trials: parameter draws, step responses and sensor noise.

    Returns ``(trajectories, torques, params)`` with ``params[i]`` the
    ``(c_v, c_p, k_v, q_ini)`` tuple per joint of trial ``i``.
    """
    opts = cfg.trials
    dists = cfg.parameter_distributions()
    n_joints = len(dists)
    n_samples = int(round(opts.t_end * opts.sample_rate)) + 1
    times = np.arange(n_samples) / opts.sample_rate
    u = uniforms(cfg.seed, TRIAL_PARAM_STREAM, n_trials, 4 * n_joints)
    params = np.empty((n_trials, n_joints, 4))
    for j, joint in enumerate(dists.joints):
        for k, shape in enumerate(joint.shapes()):
            params[:, j, k] = shape.ppf(u[:, 4 * j + k])
    trajectories, torques = [], np.empty((n_trials, n_joints))
    for i in range(n_trials):
        c_v, c_p, k_v, q_ini = params[i].T
        torques[i] = cfg.step_torque(q_ini)
        clean = q_ini + creep_displacement(c_v[None], c_p[None], k_v[None], torques[i][None], times[:, None])
        noise = block_generator(cfg.seed, TRIAL_NOISE_STREAM, i).normal(0.0, 1.0, clean.shape) * opts.noise_sd
        trajectories.append(Trajectory(times, clean + noise))
    return trajectories, torques, params


def cmd_generate_trials(cfg: RunConfig, args) -> int:
    n_trials = cfg.trials.n_trials if args.n_trials is None else args.n_trials
    if n_trials < 1:
        raise ConfigError(f"--n-trials must be at least 1, got {n_trials}")
    run = _Run("generate-trials", cfg, _out(cfg) / "trials")
    trajectories, torques, params = generate_trials(cfg, n_trials)
    for path in write_trial_set(run.root, trajectories, torques, params.reshape(n_trials, -1)):
        run.output(path)
    log.info("wrote %d trials to %s", n_trials, run.root)
    run.finish()
    return EXIT_OK


def cmd_fit(cfg: RunConfig, args) -> int:
    source = Path(args.trials) if args.trials else _out(cfg) / "trials"
    trials, inputs = read_trial_set(source, default_torque=cfg.step_torque())
    if trials.n_joints != len(cfg.distributions):
        raise InputDataError(f"trials have {trials.n_joints} joints, config has {len(cfg.distributions)}")
    run = _Run("fit", cfg, _out(cfg) / "fit")
    for path in inputs:
        run.input(path)
    result = estimate_distributions(trials, cfg.fit.min_fits, cfg.workers, cfg.fit.mad_threshold)
    for j, fails in result.failures.items():
        if fails:
            log.warning("joint %d: %d of %d trial fits failed (first: %s: %s)",
                        j + 1, len(fails), len(trials), *fails[0])
    dists = result.distributions
    n_joints = len(dists)
    lognormal = ("c_v", "c_p", "k_v")

    header = ["shape"] + [f"{name}_{j + 1}" for name in lognormal for j in range(n_joints)]
    shape = {name: [getattr(dists[j], name.replace("_", "")) for j in range(n_joints)] for name in lognormal}
    rows = [["sigma"] + [s.sigma for name in lognormal for s in shape[name]],
            ["mu"] + [s.mu for name in lognormal for s in shape[name]]]
    run.output(write_csv(run.root / "shape_table.csv", header, rows))

    hist_rows = []
    for j in range(n_joints):
        for name in PARAMETER_NAMES:
            density, edges = density_histogram(result.kept[(j, name)], cfg.fit.histogram_bins)
            hist_rows += [[j + 1, name, lo, hi, d] for lo, hi, d in zip(edges[:-1], edges[1:], density)]
    run.output(write_csv(run.root / "histograms.csv", ["joint", "parameter", "bin_left", "bin_right", "density"],
                         hist_rows))

    report = []
    for name, row in zip(trials.names, result.fits):
        for j, fit in enumerate(row):
            if fit is None:
                reason = next(msg for trial, msg in result.failures[j] if trial == name)
                report.append([name, j + 1, "failed", "nan", "nan", "nan", "nan", "nan", reason])
            else:
                p = fit.params
                report.append([name, j + 1, "ok", p.c_v, p.c_p, p.k_v, fit.q_ini, fit.cost, ""])
    run.output(write_csv(run.root / "trial_fits.csv",
                         ["trial", "joint", "status", "c_v", "c_p", "k_v", "q_ini", "cost", "reason"], report))

    fitted = {"distributions": [
        {"c_v": {"sigma": d.cv.sigma, "mu": d.cv.mu},
         "c_p": {"sigma": d.cp.sigma, "mu": d.cp.mu},
         "k_v": {"sigma": d.kv.sigma, "mu": d.kv.mu},
         "q_ini": {"mean": d.qini.mean, "sd": d.qini.sd}}
        for d in dists.joints
    ]}
    run.output(atomic_write(run.root / "fitted_distributions.yaml", yaml.safe_dump(fitted, sort_keys=False)))
    run.finish()
    return EXIT_OK


def cmd_pdf(cfg: RunConfig, args) -> int:
    run = _Run("pdf", cfg, _out(cfg) / "pdf")
    opts = cfg.pdf
    quad = opts.quadrature()
    dists_all, torque = cfg.parameter_distributions(), cfg.step_torque()
    times = np.array(opts.times, dtype=float)
    comparison = []
    for j in cfg.analysis.joints:
        dists, K = dists_all[j - 1], float(torque[j - 1])
        mc = mc_sample_trajectories(dists, K, times, opts.mc_samples, cfg.seed, cfg.workers, PDF_MC_STREAM + j)
        curves, rows = [], []
        for i, t in enumerate(times):
            grid = pilot_grid(t, K, dists, n_points=opts.grid_points)
            curve = marginal_pdf(t, K, dists, grid, quad)
            kde = kde_density(mc.angles[:, i], curve.support)
            curves.append(curve)
            rows += [[t, q, f, g] for q, f, g in zip(curve.support, curve.density, kde)]
            q_mean = float(np.sum(curve.support * curve.density) / np.sum(curve.density))
            comparison.append([j, t, l1_distance(curve.support, curve.density, kde), q_mean,
                               float(mc.angles[:, i].mean()), opts.mc_samples])
        run.output(write_csv(run.root / f"density_joint{j}.csv", ["t", "q", "density", "mc_kde"], rows))

        band = moment_band(default_time_grid(opts.horizon, opts.band_step), K, dists, quad=quad)
        run.output(write_csv(run.root / f"moments_joint{j}.csv", ["t", "ev", "sd", "lower", "upper"],
                             zip(band.times, band.expected_value, band.standard_deviation, band.lower, band.upper)))
        if run.plots:
            run.output(plots.plot_densities(run.root / f"density_joint{j}.svg", curves, f"joint {j}"))
            run.output(plots.plot_band(run.root / f"moments_joint{j}.svg", band, f"joint {j}"))
    run.output(write_csv(run.root / "mc_comparison.csv", ["joint", "t", "l1", "ev_density", "ev_mc", "mc_samples"],
                         comparison))
    for row in comparison:
        log.info("joint %d t=%g: L1(quadrature, MC KDE) = %.4f", row[0], row[1], row[2])
    run.finish()
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig, args) -> int:
    run = _Run("sensitivity", cfg, _out(cfg) / "sensitivity")
    opts = cfg.sobol
    dists_all, torque = cfg.parameter_distributions(), cfg.step_torque()
    t_grid = default_time_grid(opts.horizon, opts.step)
    names = [f"S_{n.replace('_', '')}" for n in PARAMETER_NAMES]
    for j in cfg.analysis.joints:
        series = creep_sensitivity_series(dists_all[j - 1], float(torque[j - 1]), t_grid, opts.n, cfg.seed,
                                          cfg.workers, opts.total_order)
        residual = series.sum() - 1.0
        columns = [series.times] + [series.indices[n] for n in PARAMETER_NAMES] + [residual, series.degenerate]
        header = ["t", *names, "residual", "degenerate"]
        if opts.total_order:
            columns += [series.total[n] for n in PARAMETER_NAMES]
            header += [f"T_{n.replace('_', '')}" for n in PARAMETER_NAMES]
        run.output(write_csv(run.root / f"sensitivity_joint{j}.csv", header, zip(*columns)))
        if run.plots:
            run.output(plots.plot_sensitivity(run.root / f"sensitivity_joint{j}.svg", series, f"joint {j}"))
        if np.any(series.degenerate):
            log.warning("joint %d: output variance vanishes at %d times (flagged)", j, int(series.degenerate.sum()))
        worst = np.nanmax(np.abs(residual)) if np.any(np.isfinite(residual)) else np.nan
        log.info("joint %d: max |sum - 1| = %.4f", j, worst)
    run.finish()
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "generate-trials": cmd_generate_trials,
    "fit": cmd_fit,
    "pdf": cmd_pdf,
    "sensitivity": cmd_sensitivity,
}


def _out(cfg: RunConfig) -> Path:
    return Path(cfg.output.dir)


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # shared by the main parser and every subcommand so options may go on either side
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    p.add_argument("--config", help="YAML run configuration (default: packaged canonical config)")
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    p.add_argument("--workers", type=int, help="worker threads for sampling and fitting")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softfinger", description=__doc__.splitlines()[0],
                                     parents=[_global_options(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = [_global_options(True)]
    sub.add_parser("simulate", parents=common, help="quasi-static and/or full-dynamics trajectories")
    gen = sub.add_parser("generate-trials", parents=common, help="synthetic repeated creep trials")
    gen.add_argument("--n-trials", type=int, default=None)
    fit = sub.add_parser("fit", parents=common, help="fit parameter distributions to a trial directory")
    fit.add_argument("trials", nargs="?", help="trial directory (default: <out>/trials)")
    sub.add_parser("pdf", parents=common, help="joint-angle densities and moment band")
    sub.add_parser("sensitivity", parents=common, help="first-order Sobol indices over time")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    data = cfg.model_dump()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.out is not None:
        data["output"]["dir"] = args.out
    if args.no_plots:
        data["output"]["plots"] = False
    return parse_config(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = _apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
