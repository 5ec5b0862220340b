"""Three-element viscoelastic joints, creep simulation and the closed-form step response.

Each joint is a spring ``k_v`` parallel to a damper ``c_v`` (recoverable
part ``q_v``), in series with a damper ``c_p`` (plastic part ``q_p``)::

    tau = k_v q_v + c_v dq_v/dt
    tau = c_p dq_p/dt
    q   = q_v + q_p (+ initial offset)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, linalg

from . import finger
from .errors import ConfigError, NumericalError
from .finger import FingerGeometry

__all__ = [
    "JointViscoelasticity",
    "JointInternalState",
    "Trajectory",
    "constitutive_matrices",
    "creep_displacement",
    "step_response",
    "transfer_function_coeffs",
    "integrate_creep",
    "simulate_quasi_static",
    "simulate_quasi_static_wire",
    "simulate_full",
    "simulate_free_motion",
]


@dataclass(frozen=True)
class JointViscoelasticity:
    c_v: float
    c_p: float
    k_v: float

    def __post_init__(self):
        for name in ("c_v", "c_p", "k_v"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and strictly positive, got {value}")

    def scaled(self, factor: float) -> "JointViscoelasticity":
        return JointViscoelasticity(self.c_v * factor, self.c_p * factor, self.k_v * factor)


@dataclass(frozen=True)
class JointInternalState:
    q_v: float
    q_p: float


@dataclass
class Trajectory:
    """Sampled joint-angle history.

    ``angles`` has shape (n_samples, n_joints).  The optional arrays carry
    the same shape and are filled by the simulators that produce them.
    """

    times: np.ndarray
    angles: np.ndarray
    torques: np.ndarray | None = None
    q_v: np.ndarray | None = None
    q_p: np.ndarray | None = None
    q_dot: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.angles = np.asarray(self.angles, dtype=float)
        if self.angles.ndim == 1:
            self.angles = self.angles[:, None]
        if self.times.ndim != 1 or self.angles.shape[0] != self.times.shape[0]:
            raise ConfigError("times and angles must have the same number of samples")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ConfigError("trajectory times must be strictly increasing")
        for name in ("torques", "q_v", "q_p", "q_dot"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != self.angles.shape:
                    raise ConfigError(f"{name} must have the same shape as angles")
                setattr(self, name, arr)

    @property
    def n_joints(self) -> int:
        return self.angles.shape[1]

    def joint(self, i: int) -> np.ndarray:
        return self.angles[:, i]


def _param_arrays(params: Sequence[JointViscoelasticity]):
    if isinstance(params, JointViscoelasticity):
        params = [params]
    if len(params) == 0:
        raise ConfigError("at least one joint is required")
    for p in params:
        if not isinstance(p, JointViscoelasticity):
            raise ConfigError(f"expected JointViscoelasticity, got {type(p).__name__}")
    c_v = np.array([p.c_v for p in params])
    c_p = np.array([p.c_p for p in params])
    k_v = np.array([p.k_v for p in params])
    return c_v, c_p, k_v


def constitutive_matrices(params: Sequence[JointViscoelasticity]):
    """Diagonal matrices ``A, B, C, D`` of ``A q' + B q = C tau + D int(tau)``."""
    c_v, c_p, k_v = _param_arrays(params)
    return np.diag(c_v * c_p), np.diag(c_p * k_v), np.diag(c_v + c_p), np.diag(k_v)


def creep_displacement(c_v, c_p, k_v, K, t):
    """Step response without the initial offset; broadcasts over all arguments."""
    c_v, c_p, k_v, K, t = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (c_v, c_p, k_v, K, t)))
    return -(K / k_v) * np.expm1(-(k_v / c_v) * t) + (K / c_p) * t


def step_response(params_joint: JointViscoelasticity, K, q_ini, t):
    """Joint angle under a constant torque ``K`` applied from ``t = 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigError("step_response requires t >= 0")
    out = creep_displacement(params_joint.c_v, params_joint.c_p, params_joint.k_v, K, t) + q_ini
    return float(out) if out.ndim == 0 else out


def transfer_function_coeffs(params_joint: JointViscoelasticity):
    """Numerator and denominator of torque-to-angle ``G(s)``, highest power first."""
    p = params_joint
    num = np.array([p.c_v + p.c_p, p.k_v])
    den = np.array([p.c_v * p.c_p, p.c_p * p.k_v, 0.0])
    return num, den


def _time_grid(t_span, dt):
    t0, t1 = (float(x) for x in t_span)
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if not t1 > t0:
        raise ConfigError(f"t_span must be increasing, got {t_span}")
    n_steps = int(round((t1 - t0) / dt))
    if n_steps < 1 or abs(n_steps * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ConfigError(f"t_span length {t1 - t0} is not an integer multiple of dt={dt}")
    return t0, n_steps


def _as_profile(profile, n: int, name: str) -> Callable[[float], np.ndarray]:
    if callable(profile):
        def fn(t):
            value = np.asarray(profile(t), dtype=float)
            if value.shape != (n,):
                raise ConfigError(f"{name}({t}) returned shape {value.shape}, expected ({n},)")
            return value
        return fn
    value = np.asarray(profile, dtype=float)
    if value.shape != (n,):
        raise ConfigError(f"constant {name} must have shape ({n},), got {value.shape}")
    return lambda t: value


def _recorded_steps(n_steps, record_every):
    """Step indices kept in the output: every ``record_every``-th one plus the last."""
    if record_every < 1:
        raise ConfigError(f"record_every must be at least 1, got {record_every}")
    steps = np.arange(0, n_steps + 1, record_every)
    return steps if steps[-1] == n_steps else np.append(steps, n_steps)


def _rk4(rhs, y0, t0, dt, n_steps, record_every=1, substeps=1, check=None):
    """Classical fixed-step RK4; returns recorded times and states (first axis = samples)."""
    h = dt / substeps
    n_rec = _recorded_steps(n_steps, record_every).size
    times = np.empty(n_rec)
    states = np.empty((n_rec,) + np.shape(y0))
    y = np.array(y0, dtype=float)
    times[0], states[0] = t0, y
    rec = 1
    for step in range(1, n_steps + 1):
        t_base = t0 + (step - 1) * dt
        for sub in range(substeps):
            t = t_base + sub * h
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + step * dt
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at t={t:.6g}; reduce dt")
        if check is not None:
            check(t, y)
        if step % record_every == 0 or step == n_steps:
            times[rec], states[rec] = t, y
            rec += 1
    return times[:rec], states[:rec]


def integrate_creep(c_v, c_p, k_v, torque, q_ini, t_span, dt=1e-3, record_every=1):
    """RK4 integration of the quasi-static joint law for arrays of independent joints.

    ``c_v, c_p, k_v, q_ini`` broadcast to a common shape ``S``; ``torque`` is a
    constant array broadcastable to ``S`` or a callable ``torque(t, q)``
    returning one.  Returns ``(times, q, q_v, q_p)`` with sample axis first.
    """
    c_v, c_p, k_v, q_ini = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (c_v, c_p, k_v, q_ini)))
    if np.any(c_v <= 0) or np.any(c_p <= 0) or np.any(k_v <= 0):
        raise ConfigError("viscoelastic parameters must be strictly positive")
    t0, n_steps = _time_grid(t_span, dt)
    shape = c_v.shape
    inv_cv, inv_cp = 1.0 / c_v, 1.0 / c_p

    if callable(torque):
        def rhs(t, y):
            tau = torque(t, q_ini + y[0] + y[1])
            return np.stack([(tau - k_v * y[0]) * inv_cv, tau * inv_cp])
    else:
        tau = np.broadcast_to(np.asarray(torque, dtype=float), shape)
        dq_p = tau * inv_cp

        def rhs(t, y):
            return np.stack([(tau - k_v * y[0]) * inv_cv, dq_p])

    y0 = np.zeros((2,) + shape)
    times, states = _rk4(rhs, y0, t0, dt, n_steps, record_every)
    q_v, q_p = states[:, 0], states[:, 1]
    return times, q_ini + q_v + q_p, q_v, q_p


def simulate_quasi_static(params, torque_profile, q_ini, t_span=(0.0, 30.0), dt=1e-3, record_every=1) -> Trajectory:
    """Joint angles when inertia and Coriolis terms are neglected.

    ``torque_profile`` is a constant per-joint torque vector or a callable of
    time returning one.  Internal states start at zero; ``q_ini`` is carried
    as an additive offset.
    """
    c_v, c_p, k_v = _param_arrays(params)
    n = c_v.size
    q_ini = np.broadcast_to(np.asarray(q_ini, dtype=float), (n,))
    if callable(torque_profile):
        fn = _as_profile(torque_profile, n, "torque_profile")
        torque = lambda t, q: fn(t)  # noqa: E731
    else:
        torque = _as_profile(torque_profile, n, "torque_profile")(0.0)
    times, q, q_v, q_p = integrate_creep(c_v, c_p, k_v, torque, q_ini, t_span, dt, record_every)
    if callable(torque_profile):
        torques = np.array([fn(t) for t in times])
    else:
        torques = np.broadcast_to(torque, q.shape).copy()
    return Trajectory(times, q, torques=torques, q_v=q_v, q_p=q_p)


def simulate_quasi_static_wire(geom: FingerGeometry, params, tension_profile, q_ini,
                               t_span=(0.0, 30.0), dt=1e-3, record_every=1) -> Trajectory:
    """Quasi-static model driven by wire tensions, with torque ``P(q) f`` following the pose.

    This is the massless limit of :func:`simulate_full`.
    """
    c_v, c_p, k_v = _param_arrays(params)
    n = c_v.size
    if n != geom.n_links:
        raise ConfigError(f"{n} joint parameter sets for a {geom.n_links}-link finger")
    tensions = _as_profile(tension_profile, 2, "tension_profile")
    q_ini = np.asarray(q_ini, dtype=float)

    def torque(t, q):
        return finger.actuation_torque(q, tensions(t), geom)

    times, q, q_v, q_p = integrate_creep(c_v, c_p, k_v, torque, q_ini, t_span, dt, record_every)
    torques = np.array([torque(t, qi) for t, qi in zip(times, q)])
    return Trajectory(times, q, torques=torques, q_v=q_v, q_p=q_p)


def _stable_substeps(geom, c_eff, k_v, q_ini, dt, safety=1.5):
    m = finger.mass_matrix(q_ini, geom)
    damping_rate = linalg.eigh(np.diag(c_eff), m, eigvals_only=True).max()
    spring_rate = np.sqrt(linalg.eigh(np.diag(k_v), m, eigvals_only=True).max())
    rho = damping_rate + spring_rate
    return max(1, int(np.ceil(dt * rho / safety)))


def simulate_full(geom: FingerGeometry, params, tension_profile=None, q_ini=None,
                  t_span=(0.0, 30.0), dt=1e-3, *, torque_profile=None,
                  record_every=1, method="radau", rtol=1e-9, atol=1e-12, substeps=None) -> Trajectory:
    """Coupled rigid-body and viscoelastic dynamics, starting from rest.

    Integrates ``M(q) q'' + h(q, q') + tau_in = tau_ac`` where ``tau_in`` is
    realised through the recoverable state ``q_v``::

        dq_v/dt = (c_p q' - k_v q_v) / (c_v + c_p)
        tau_in  = k_v q_v + c_v dq_v/dt

    The drive is either wire tensions (``tau_ac = P(q) f``) or a direct joint
    torque profile, exactly one of them.

    Light links against the joint dampers make this system stiff (damping
    rates of ``M^-1 C`` reach 1e5/s for gram-scale links), so the default
    ``method="radau"`` uses an implicit solver and reports on the ``dt`` grid.
    ``method="rk4"`` splits each ``dt`` into enough fixed RK4 substeps to stay
    inside the stability region (or ``substeps`` if given); it is exact but slow.
    """
    c_v, c_p, k_v = _param_arrays(params)
    n = geom.n_links
    if c_v.size != n:
        raise ConfigError(f"{c_v.size} joint parameter sets for a {n}-link finger")
    if (tension_profile is None) == (torque_profile is None):
        raise ConfigError("give exactly one of tension_profile or torque_profile")
    q_ini = np.zeros(n) if q_ini is None else np.asarray(q_ini, dtype=float)
    if tension_profile is not None:
        tensions = _as_profile(tension_profile, 2, "tension_profile")

        def drive(t, q):
            return finger.actuation_torque(q, tensions(t), geom)
    else:
        torques_fn = _as_profile(torque_profile, n, "torque_profile")

        def drive(t, q):
            return torques_fn(t)

    t0, n_steps = _time_grid(t_span, dt)
    c_sum = c_v + c_p
    c_eff = c_v * c_p / c_sum

    def rhs(t, y):
        q, qd, qv = y[:n], y[n:2 * n], y[2 * n:]
        dqv = (c_p * qd - k_v * qv) / c_sum
        tau_in = k_v * qv + c_v * dqv
        rhs_torque = drive(t, q) - finger.nonlinear_term(q, qd, geom) - tau_in
        qdd = np.linalg.solve(finger.mass_matrix(q, geom), rhs_torque)
        return np.concatenate([qd, qdd, dqv])

    c_min = c_eff.min()

    def energy_check(t, y):
        q, qd, qv = y[:n], y[n:2 * n], y[2 * n:]
        m = finger.mass_matrix(q, geom)
        ke = 0.5 * qd @ m @ qd
        drive_norm = np.linalg.norm(drive(t, q)) + np.linalg.norm(c_p * k_v * qv / c_sum)
        bound = 0.5 * np.linalg.eigvalsh(m).max() * (drive_norm / c_min) ** 2
        if not np.isfinite(ke) or ke > 1e4 * bound + 1e-300:
            raise NumericalError(f"kinetic energy diverged at t={t:.6g} (dt={dt}, method={method})")

    y0 = np.concatenate([q_ini, np.zeros(n), np.zeros(n)])
    if method == "rk4":
        if substeps is None:
            substeps = _stable_substeps(geom, c_eff, k_v, q_ini, dt)
        times, states = _rk4(rhs, y0, t0, dt, n_steps, record_every, substeps, energy_check)
    elif method == "radau":
        times = t0 + dt * _recorded_steps(n_steps, record_every)
        sol = integrate.solve_ivp(rhs, (t0, t0 + n_steps * dt), y0, method="Radau",
                                  t_eval=times, rtol=rtol, atol=atol)
        if sol.status != 0:
            raise NumericalError(f"full-dynamics integration failed: {sol.message}")
        states = sol.y.T
        if not np.all(np.isfinite(states)):
            raise NumericalError("non-finite state in full-dynamics integration")
        for t, y in zip(times, states):
            energy_check(t, y)
    else:
        raise ConfigError(f"unknown method {method!r}; use 'radau' or 'rk4'")
    q, qd, qv = states[:, :n], states[:, n:2 * n], states[:, 2 * n:]
    torques = np.array([drive(t, qi) for t, qi in zip(times, q)])
    return Trajectory(times, q, torques=torques, q_v=qv, q_p=q - q_ini - qv, q_dot=qd)


def simulate_free_motion(geom: FingerGeometry, q0, q_dot0, t_span=(0.0, 1.0), dt=1e-3, record_every=1) -> Trajectory:
    """Unactuated rigid chain ``M q'' + h = 0`` (no joint viscoelasticity)."""
    n = geom.n_links
    t0, n_steps = _time_grid(t_span, dt)

    def rhs(t, y):
        q, qd = y[:n], y[n:]
        qdd = np.linalg.solve(finger.mass_matrix(q, geom), -finger.nonlinear_term(q, qd, geom))
        return np.concatenate([qd, qdd])

    y0 = np.concatenate([np.asarray(q0, dtype=float), np.asarray(q_dot0, dtype=float)])
    times, states = _rk4(rhs, y0, t0, dt, n_steps, record_every)
    return Trajectory(times, states[:, :n], q_dot=states[:, n:])
