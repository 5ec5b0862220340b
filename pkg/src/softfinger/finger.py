"""Planar lumped-parameter finger: geometry, wire kinematics and rigid-body terms.

Angles are relative joint angles (each link measured from the previous one),
the chain lies in the horizontal plane so gravity does not enter.  Each link
is a point mass at its geometric center plus a lumped rotational inertia.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "FingerGeometry",
    "JointConfiguration",
    "WireState",
    "DEFAULT_GEOMETRY",
    "wire_elongations",
    "wire_jacobian",
    "actuation_torque",
    "mass_matrix",
    "mass_matrix_derivatives",
    "nonlinear_term",
    "kinetic_energy",
    "link_centers",
]


@dataclass(frozen=True)
class FingerGeometry:
    """Link and wire-routing dimensions of the finger (SI units)."""

    link_lengths: tuple[float, ...]
    link_masses: tuple[float, ...]
    link_inertias: tuple[float, ...]
    wire_offset_d: float
    joint_length: float

    def __post_init__(self):
        for name in ("link_lengths", "link_masses", "link_inertias"):
            values = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, values)
        n = len(self.link_lengths)
        if n == 0 or len(self.link_masses) != n or len(self.link_inertias) != n:
            raise ConfigError("link_lengths, link_masses and link_inertias must have the same nonzero length")
        for name in ("link_lengths", "link_masses", "link_inertias"):
            values = np.asarray(getattr(self, name))
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise ConfigError(f"{name} must be finite and strictly positive, got {values.tolist()}")
        if not (self.wire_offset_d > 0 and self.joint_length > 0):
            raise ConfigError("wire_offset_d and joint_length must be strictly positive")
        if self.wire_offset_d >= self.joint_length:
            raise ConfigError(
                f"wire_offset_d ({self.wire_offset_d}) must be smaller than joint_length ({self.joint_length})"
            )

    @property
    def n_links(self) -> int:
        return len(self.link_lengths)

    @property
    def wire_radius(self) -> float:
        """Distance from the joint center to the wire exit point."""
        return float(np.hypot(0.5 * self.joint_length, self.wire_offset_d))

    @property
    def wire_angle(self) -> float:
        return float(np.arctan(2.0 * self.wire_offset_d / self.joint_length))

    def scaled(self, mass_factor: float) -> "FingerGeometry":
        """Copy with masses and inertias multiplied by ``mass_factor``."""
        return FingerGeometry(
            self.link_lengths,
            tuple(m * mass_factor for m in self.link_masses),
            tuple(i * mass_factor for i in self.link_inertias),
            self.wire_offset_d,
            self.joint_length,
        )


# Not measured values: centimeter/gram-scale placeholders for a 3D-printed finger.
DEFAULT_GEOMETRY = FingerGeometry(
    link_lengths=(0.030, 0.025, 0.020),
    link_masses=(0.006, 0.005, 0.004),
    link_inertias=(4.5e-7, 2.6e-7, 1.3e-7),
    wire_offset_d=0.004,
    joint_length=0.010,
)


@dataclass(frozen=True)
class JointConfiguration:
    q: tuple[float, ...]
    q_dot: tuple[float, ...]

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.q_dot, dtype=float)
        if q.shape != qd.shape:
            raise ConfigError("q and q_dot must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ConfigError("joint configuration must be finite")
        if np.any(np.abs(q) >= np.pi):
            raise ConfigError(f"joint angles must satisfy |q| < pi, got {q.tolist()}")


@dataclass(frozen=True)
class WireState:
    elongations: tuple[float, float]
    tensions: tuple[float, float]

    def __post_init__(self):
        if any(f < 0 for f in self.tensions):
            raise ConfigError("wire tensions must be nonnegative (wires only pull)")


def _angles(q, geom: FingerGeometry) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (geom.n_links,):
        raise ConfigError(f"expected {geom.n_links} joint angles, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ConfigError("joint angles must be finite")
    return q


def wire_elongations(q, geom: FingerGeometry) -> np.ndarray:
    """Elongations ``(l1, l2)`` of the flexion and extension wires.

    Each joint contributes ``l_joint - 2 R cos(q_i/2 +- a)`` with
    ``R = sqrt((l_joint/2)^2 + d^2)`` and ``a = atan(2 d / l_joint)``.
    """
    q = _angles(q, geom)
    r, a = geom.wire_radius, geom.wire_angle
    n = geom.n_links
    l1 = n * geom.joint_length - 2.0 * r * np.sum(np.cos(0.5 * q + a))
    l2 = n * geom.joint_length - 2.0 * r * np.sum(np.cos(0.5 * q - a))
    return np.array([l1, l2])


def wire_jacobian(q, geom: FingerGeometry) -> np.ndarray:
    """Wire Jacobian ``P = (dl/dq)^T`` with shape (n_joints, 2)."""
    q = _angles(q, geom)
    r, a = geom.wire_radius, geom.wire_angle
    return np.column_stack([r * np.sin(0.5 * q + a), r * np.sin(0.5 * q - a)])


def actuation_torque(q, f, geom: FingerGeometry) -> np.ndarray:
    """Joint torques produced by wire tensions ``f`` (virtual work, ``P f``)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (2,):
        raise ConfigError(f"expected 2 wire tensions, got shape {f.shape}")
    if np.any(f < 0):
        raise ConfigError(f"wire tensions must be nonnegative, got {f.tolist()}")
    return wire_jacobian(q, geom) @ f


def _lever_arms(geom: FingerGeometry) -> np.ndarray:
    # r[i, j]: length of link j entering the position of link i's center
    n = geom.n_links
    lengths = np.asarray(geom.link_lengths)
    r = np.tril(np.broadcast_to(lengths, (n, n)), k=-1).copy()
    r[np.diag_indices(n)] = 0.5 * lengths
    return r


def _mass_structure(geom: FingerGeometry):
    r = _lever_arms(geom)
    masses = np.asarray(geom.link_masses)
    coupling = np.einsum("i,ij,im->jm", masses, r, r)
    upper = np.triu(np.ones((geom.n_links, geom.n_links)))
    inertia_tail = np.cumsum(np.asarray(geom.link_inertias)[::-1])[::-1]
    idx = np.arange(geom.n_links)
    rot = inertia_tail[np.maximum.outer(idx, idx)]
    return coupling, upper, rot


def mass_matrix(q, geom: FingerGeometry) -> np.ndarray:
    """Inertia matrix ``M(q)`` of the planar chain."""
    q = _angles(q, geom)
    coupling, upper, rot = _mass_structure(geom)
    theta = np.cumsum(q)
    dtheta = theta[:, None] - theta[None, :]
    m = upper @ (coupling * np.cos(dtheta)) @ upper.T + rot
    return 0.5 * (m + m.T)  # exact symmetry despite rounding in the products


def mass_matrix_derivatives(q, geom: FingerGeometry) -> np.ndarray:
    """Partial derivatives ``dM/dq_p`` stacked along the first axis."""
    q = _angles(q, geom)
    coupling, upper, _ = _mass_structure(geom)
    theta = np.cumsum(q)
    dtheta = theta[:, None] - theta[None, :]
    n = geom.n_links
    out = np.empty((n, n, n))
    for p in range(n):
        moved = (np.arange(n) >= p).astype(float)
        factor = moved[:, None] - moved[None, :]
        out[p] = upper @ (-coupling * np.sin(dtheta) * factor) @ upper.T
    return out


def nonlinear_term(q, q_dot, geom: FingerGeometry) -> np.ndarray:
    """Coriolis and centrifugal torques ``h(q, q_dot)`` from the Christoffel symbols of ``M``."""
    q_dot = np.asarray(q_dot, dtype=float)
    dm = mass_matrix_derivatives(q, geom)
    m_dot = np.einsum("pij,p->ij", dm, q_dot)
    return m_dot @ q_dot - 0.5 * np.einsum("pij,i,j->p", dm, q_dot, q_dot)


def kinetic_energy(q, q_dot, geom: FingerGeometry) -> float:
    q_dot = np.asarray(q_dot, dtype=float)
    return 0.5 * float(q_dot @ mass_matrix(q, geom) @ q_dot)


def link_centers(q, geom: FingerGeometry) -> np.ndarray:
    """Planar positions of the link centers, shape (n_links, 2)."""
    q = _angles(q, geom)
    theta = np.cumsum(q)
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    return _lever_arms(geom) @ dirs
