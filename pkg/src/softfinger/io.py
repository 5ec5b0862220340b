"""CSV and manifest files.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a partial file.  Floats are written with ``repr``, the
shortest text that parses back to the same double.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputDataError
from .estimation import TrialSet
from .viscoelastic import Trajectory

__all__ = [
    "atomic_write",
    "format_value",
    "write_csv",
    "read_csv",
    "write_trajectory",
    "read_trajectory",
    "write_trial_set",
    "read_trial_set",
    "file_sha256",
    "ResultManifest",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.json"
INDEX_NAME = "index.csv"


def atomic_write(path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path, header, rows) -> Path:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputDataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputDataError(f"{path} is not UTF-8 text") from None
    if not rows:
        raise InputDataError(f"{path} is empty")
    return rows[0], rows[1:]


def write_trajectory(path, traj: Trajectory) -> Path:
    header = ["t"] + [f"q{j + 1}" for j in range(traj.n_joints)]
    return write_csv(path, header, (
        [t, *q] for t, q in zip(traj.times, traj.angles)
    ))


def read_trajectory(path) -> Trajectory:
    """Parse a ``t,q1,...,qn`` file; malformed content raises :class:`InputDataError`."""
    header, rows = read_csv(path)
    if not header or header[0] != "t" or header[1:] != [f"q{j + 1}" for j in range(len(header) - 1)] \
            or len(header) < 2:
        raise InputDataError(f"{path}: header must be t,q1,...,qn, got {','.join(header)}")
    try:
        data = np.array([[float(v) for v in row] for row in rows if row], dtype=float)
    except ValueError as exc:
        raise InputDataError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != len(header):
        raise InputDataError(f"{path}: need at least 2 complete rows of {len(header)} values")
    if not np.all(np.isfinite(data)):
        raise InputDataError(f"{path}: non-finite values")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise InputDataError(f"{path}: times must be strictly increasing")
    return Trajectory(data[:, 0], data[:, 1:])


def write_trial_set(directory, trials: list[Trajectory], torques, params=None) -> list[Path]:
    """One ``trial_NNN.csv`` per trial plus ``index.csv``.

    The index lists each file with its per-joint step torque ``K1..Kn`` and,
    when given, the generating ``(c_v, c_p, k_v, q_ini)`` tuple per joint.
    """
    directory = Path(directory)
    torques = np.asarray(torques, dtype=float)
    n = trials[0].n_joints
    paths, rows = [], []
    for i, traj in enumerate(trials):
        name = f"trial_{i:03d}.csv"
        paths.append(write_trajectory(directory / name, traj))
        row = [name, *torques[i]]
        if params is not None:
            row += list(np.asarray(params[i], dtype=float).ravel())
        rows.append(row)
    header = ["file"] + [f"K{j + 1}" for j in range(n)]
    if params is not None:
        header += [f"{p}{j + 1}" for j in range(n) for p in ("c_v", "c_p", "k_v", "q_ini")]
    paths.append(write_csv(directory / INDEX_NAME, header, rows))
    return paths


def read_trial_set(directory, default_torque=None) -> tuple[TrialSet, list[Path]]:
    """Load trials listed in ``index.csv`` (or every ``*.csv`` when there is none).

    Torques come from the index's ``K`` columns, else ``default_torque``.
    Returns the trial set and the input files read.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputDataError(f"{directory} is not a directory")
    index = directory / INDEX_NAME
    torques = None
    if index.exists():
        header, rows = read_csv(index)
        if "file" not in header:
            raise InputDataError(f"{index}: missing 'file' column")
        files = [directory / row[header.index("file")] for row in rows if row]
        k_cols = [i for i, h in enumerate(header) if h.startswith("K") and h[1:].isdigit()]
        if k_cols:
            try:
                torques = np.array([[float(row[i]) for i in k_cols] for row in rows if row])
            except (ValueError, IndexError) as exc:
                raise InputDataError(f"{index}: bad torque entry ({exc})") from None
        inputs = [index]
    else:
        files = sorted(p for p in directory.glob("*.csv"))
        inputs = []
    if not files:
        raise InputDataError(f"no trial files in {directory}")
    if torques is None:
        if default_torque is None:
            raise InputDataError(f"{directory}: no torque columns in {INDEX_NAME} and no default torque")
        torques = np.asarray(default_torque, dtype=float)
    trials = [read_trajectory(p) for p in files]
    n = {t.n_joints for t in trials}
    if len(n) != 1:
        raise InputDataError(f"{directory}: trials have differing joint counts {sorted(n)}")
    if torques.shape[-1] != trials[0].n_joints:
        raise InputDataError(f"{directory}: {torques.shape[-1]} torques for {trials[0].n_joints} joints")
    return TrialSet(trials, torques, [p.stem for p in files]), inputs + files


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ResultManifest:
    """Record of one command run, written after all of its outputs."""

    command: str
    config_hash: str
    version: str
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: dict = field(default_factory=dict)  # relative path -> size in bytes
    duration_s: float = 0.0
    seed: int | None = None

    def add_output(self, path, root) -> None:
        path = Path(path)
        self.outputs[path.relative_to(root).as_posix()] = path.stat().st_size

    def write(self, root) -> Path:
        body = json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"
        return atomic_write(Path(root) / MANIFEST_NAME, body)

    @classmethod
    def read(cls, root) -> "ResultManifest":
        path = Path(root) / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputDataError(f"cannot read manifest {path}: {exc}") from None
        return cls(**data)

    def verify(self, root) -> list[str]:
        """Outputs that are missing or whose size differs from the record."""
        root = Path(root)
        bad = []
        for rel, size in self.outputs.items():
            p = root / rel
            if not p.exists() or p.stat().st_size != size:
                bad.append(rel)
        return bad
