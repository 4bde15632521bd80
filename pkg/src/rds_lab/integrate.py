"""Deterministic-given-path integration, tangent flow, Lyapunov spectra.

The state schemes are explicit one-step maps (Euler-Maruyama and tamed Euler;
jumps enter exactly through the stored path increments). The tangent frame is
propagated by the matrix exponential of the drift Jacobian over each step, so
the log-determinant of the tangent product telescopes to the time integral of
the Jacobian trace; the one-dimensional multiplicative system instead uses its
exact per-step factor 1 + dW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np
from scipy.linalg import expm

from .errors import (AlignmentError, BlowUpError, DegeneracyError, GridError,
                     ParameterError, StateError)
from .noise import NoisePath, OUPath, TimeGrid
from .stats import EnsembleStat
from .systems import SystemSpec

SCHEMES = ("euler_maruyama", "tamed_euler")


@dataclass(frozen=True)
class Trajectory:
    """Solution path on the grid of its driving noise."""

    grid: TimeGrid
    states: np.ndarray  # (n_steps+1, d), read-only
    system: SystemSpec
    path: NoisePath

    def __post_init__(self):
        s = np.ascontiguousarray(self.states, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def dump_csv(self, f: TextIO) -> None:
        cols = ",".join(f"x{i}" for i in range(self.states.shape[1]))
        f.write(f"t,{cols}\n")
        times = self.grid.times()
        for k in range(self.grid.n_steps + 1):
            row = ",".join(f"{v:.17g}" for v in self.states[k])
            f.write(f"{times[k]:.17g},{row}\n")


def coupled_increments(coupling: np.ndarray, dl: np.ndarray) -> np.ndarray:
    """Sigma * dL with a fixed channel summation order (bitwise stable rows)."""
    m = coupling.shape[1]
    out = dl[..., 0, None] * coupling[:, 0]
    for j in range(1, m):
        out = out + dl[..., j, None] * coupling[:, j]
    return out


def step_states(system: SystemSpec, x: np.ndarray, dl: np.ndarray, dt: float,
                scheme: str, o=None) -> np.ndarray:
    """One explicit step for states of shape (..., d); elementwise in rows."""
    b = system.drift(x, o)
    if scheme == "euler_maruyama":
        drift_part = b * dt
    elif scheme == "tamed_euler":
        nb = np.sqrt((b * b).sum(axis=-1, keepdims=True))
        drift_part = b * (dt / (1.0 + dt * nb))
    else:
        raise ParameterError(f"unknown scheme {scheme!r}; use one of {SCHEMES}")
    forcing = coupled_increments(system.coupling, dl)
    if system.multiplicative:
        forcing = x * forcing
    return x + drift_part + forcing


def resolve_scheme(system: SystemSpec, scheme: Optional[str]) -> str:
    s = scheme or system.default_scheme
    if s not in SCHEMES:
        raise ParameterError(f"unknown scheme {s!r}; use one of {SCHEMES}")
    return s


def aux_series(system: SystemSpec, grid: TimeGrid) -> Optional[np.ndarray]:
    """OU values aligned step-for-step with the integration grid."""
    if not system.needs_aux:
        return None
    if system.aux is None:
        raise StateError(f"{system.name} needs an attached OU path")
    g = system.aux.grid
    if g.dt != grid.dt or g.t_start != grid.t_start or g.n_steps < grid.n_steps:
        raise AlignmentError("attached OU path does not share the integration grid")
    return system.aux.values[: grid.n_steps + 1]


def integrate(system: SystemSpec, x0, path: NoisePath, scheme: Optional[str] = None) -> Trajectory:
    """Evolve x0 along a stored noise path; deterministic given its arguments."""
    scheme = resolve_scheme(system, scheme)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.dim,):
        raise ParameterError(f"x0 must have shape ({system.dim},)")
    if not np.all(np.isfinite(x0)):
        raise ParameterError("x0 must be finite")
    if path.channels != system.channels:
        raise GridError("path channel count does not match the system coupling")
    o = aux_series(system, path.grid)
    n = path.grid.n_steps
    states = np.empty((n + 1, system.dim))
    states[0] = x0
    x = x0
    inc = path.increments
    dt = path.grid.dt
    for k in range(n):
        x = step_states(system, x, inc[k], dt, scheme, None if o is None else o[k])
        if not np.all(np.isfinite(x)):
            raise BlowUpError(k + 1)
        states[k + 1] = x
    return Trajectory(path.grid, states, system, path)


def propagate_batch(system: SystemSpec, x0s: np.ndarray, path: NoisePath,
                    scheme: Optional[str] = None, *,
                    increments: Optional[np.ndarray] = None,
                    record_indices: Optional[list] = None):
    """Evolve a batch of states (B, d) sharing one path (or given increments).

    Non-finite rows are recorded, frozen to NaN and carried along instead of
    raising, so ensemble callers can count blow-ups as a separate category.
    Returns (recorded, final_states, first_bad) where first_bad[i] is the step
    of the first non-finite value in row i, or -1.
    """
    scheme = resolve_scheme(system, scheme)
    x = np.array(x0s, dtype=float)
    if x.ndim != 2 or x.shape[1] != system.dim:
        raise ParameterError("x0s must have shape (B, d)")
    o = aux_series(system, path.grid)
    inc = path.increments if increments is None else increments
    n = path.grid.n_steps
    dt = path.grid.dt
    record_set = {} if record_indices is None else {int(k): i for i, k in enumerate(record_indices)}
    recorded = np.full((len(record_set), x.shape[0], system.dim), np.nan) if record_set else None
    first_bad = np.full(x.shape[0], -1, dtype=int)
    if 0 in record_set:
        recorded[record_set[0]] = x
    for k in range(n):
        dl = inc[k] if inc.ndim == 2 else inc[:, k, :]
        x = step_states(system, x, dl, dt, scheme, None if o is None else o[k])
        bad = ~np.all(np.isfinite(x), axis=1)
        newly = bad & (first_bad < 0)
        if newly.any():
            first_bad[newly] = k + 1
            x[bad] = np.nan
        if k + 1 in record_set:
            recorded[record_set[k + 1]] = x
    return recorded, x, first_bad


@dataclass(frozen=True)
class LyapunovEstimate:
    """QR-renormalized exponent estimates with batch-means errors."""

    k: int
    exponents: np.ndarray  # sorted descending, 1/time units
    stderr: np.ndarray  # aligned with exponents
    total_time: float
    renorm_interval: int
    log_record: np.ndarray  # (n_renorms, k) per-block log |diag R|

    @property
    def sum_of_exponents(self) -> float:
        return float(self.exponents.sum())


def _qr_accumulate(M, logs):
    q, r = np.linalg.qr(M)
    diag = np.diagonal(r).copy()
    sign = np.where(diag < 0.0, -1.0, 1.0)
    mag = np.abs(diag)
    if np.any(mag < 1e-300):
        raise DegeneracyError("tangent frame collapsed: QR diagonal underflow")
    logs.append(np.log(mag))
    return q * sign


def _tangent_factors_1d(system: SystemSpec, states: np.ndarray, path: NoisePath,
                        o: Optional[np.ndarray]) -> np.ndarray:
    n = path.grid.n_steps
    if system.multiplicative:
        return 1.0 + coupled_increments(system.coupling, path.increments)[:, 0]
    jac = system.jacobian(states[:n], None if o is None else o[:n])[..., 0, 0]
    return np.exp(path.grid.dt * jac)


def lyapunov_spectrum(system: SystemSpec, x0, path: NoisePath, k: int,
                      renorm_every: int = 10, scheme: Optional[str] = None) -> LyapunovEstimate:
    """Leading k exponents via tangent propagation with QR renormalization."""
    if not 1 <= k <= system.dim:
        raise ParameterError("need 1 <= k <= d")
    if renorm_every < 1:
        raise ParameterError("renorm_every must be >= 1")
    traj = integrate(system, x0, path, scheme)
    n = path.grid.n_steps
    dt = path.grid.dt
    o = aux_series(system, path.grid)
    logs = []
    block_steps = []
    if system.dim == 1:
        factors = _tangent_factors_1d(system, traj.states, path, o)
        if np.any(factors == 0.0):
            raise DegeneracyError("tangent factor hit exactly zero")
        lf = np.log(np.abs(factors))
        for lo in range(0, n, renorm_every):
            hi = min(lo + renorm_every, n)
            logs.append(np.array([lf[lo:hi].sum()]))
            block_steps.append(hi - lo)
    else:
        M = np.eye(system.dim)[:, :k]
        since = 0
        jac_all = None
        for i in range(n):
            J = system.jacobian(traj.states[i], None if o is None else o[i])
            M = expm(J * dt) @ M
            since += 1
            if since == renorm_every or i == n - 1:
                M = _qr_accumulate(M, logs)
                block_steps.append(since)
                since = 0
        del jac_all
    log_record = np.vstack(logs)
    block_steps = np.asarray(block_steps, dtype=float)
    total_time = n * dt
    exponents = log_record.sum(axis=0) / total_time

    n_blocks = len(block_steps)
    n_batches = min(20, n_blocks)
    if n_batches >= 2:
        edges = np.linspace(0, n_blocks, n_batches + 1).astype(int)
        rates = np.empty((n_batches, k))
        for b in range(n_batches):
            sl = slice(edges[b], edges[b + 1])
            rates[b] = log_record[sl].sum(axis=0) / (block_steps[sl].sum() * dt)
        stderr = rates.std(axis=0, ddof=1) / math.sqrt(n_batches)
    else:
        stderr = np.zeros(k)

    order = np.argsort(-exponents, kind="stable")
    return LyapunovEstimate(k, exponents[order], stderr[order], total_time,
                            renorm_every, log_record)


def tangent_product(system: SystemSpec, trajectory: Trajectory, *, mode: str = "expm") -> np.ndarray:
    """Full tangent matrix over a trajectory, without renormalization.

    mode="expm" is the propagator used for exponent estimation; mode="euler"
    is the exact Jacobian product of the Euler state map (for linearization
    checks over short horizons).
    """
    n = trajectory.grid.n_steps
    dt = trajectory.grid.dt
    o = aux_series(system, trajectory.grid)
    M = np.eye(system.dim)
    for i in range(n):
        J = system.jacobian(trajectory.states[i], None if o is None else o[i])
        if mode == "expm":
            M = expm(J * dt) @ M
        elif mode == "euler":
            M = (np.eye(system.dim) + dt * J) @ M
        else:
            raise ParameterError(f"unknown tangent mode {mode!r}")
    return M


def log_det_accumulation(system: SystemSpec, trajectory: Trajectory) -> float:
    """Direct per-step log|det| accumulation of the tangent propagator.

    Independent cross-check for the QR log-sum telescoping identity.
    """
    n = trajectory.grid.n_steps
    dt = trajectory.grid.dt
    o = aux_series(system, trajectory.grid)
    total = 0.0
    for i in range(n):
        J = system.jacobian(trajectory.states[i], None if o is None else o[i])
        total += math.log(abs(np.linalg.det(expm(J * dt))))
    return total


def trace_series(system: SystemSpec, trajectory: Trajectory) -> np.ndarray:
    """Jacobian trace evaluated along the trajectory's left endpoints."""
    n = trajectory.grid.n_steps
    o = aux_series(system, trajectory.grid)
    jac = system.jacobian(trajectory.states[:n], None if o is None else o[:n])
    return np.trace(jac, axis1=-2, axis2=-1)


def trace_average(system: SystemSpec, trajectory: Trajectory,
                  batch_len: Optional[int] = None) -> EnsembleStat:
    """Time average (1/T) sum trace(Db(X_k)) dt with batch-means stderr."""
    if not np.all(np.isfinite(trajectory.states)):
        raise ParameterError("trajectory must be finite")
    series = trace_series(system, trajectory)
    if batch_len is None:
        batch_len = max(1, len(series) // 20)
    return EnsembleStat.from_batch_means(series, batch_len, label="trace_average")
