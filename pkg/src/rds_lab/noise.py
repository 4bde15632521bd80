"""Driving-noise paths on uniform grids.

A NoisePath stores one realization of the driving noise for all cocycle
evaluations. Increments are the canonical data; cumulative values are derived
from them by a fixed summation order, which is what makes the shift group law
and nested pullback truncations exact at the bit level.

Stable-law conventions: a symmetric alpha-stable channel has characteristic
function exp(-t|xi|^alpha), so alpha=2 is Gaussian with variance 2t.
Subordinator channels are one-sided alpha-stable with Laplace exponent
t*u^alpha. Both are sampled by the Chambers-Mallows-Stuck transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from . import rng as _rng
from .errors import GridError, KindError, ParameterError, PathIndexError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_start + k*dt, k = 0..n_steps (n_steps+1 points)."""

    t_start: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise GridError("dt must be positive and finite")
        if self.n_steps < 0 or self.n_steps != int(self.n_steps):
            raise GridError("n_steps must be a nonnegative integer")

    @property
    def t_end(self) -> float:
        return self.time_of(self.n_steps)

    def time_of(self, k: int) -> float:
        return self.t_start + k * self.dt

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time t; GridError if t is not grid-aligned."""
        k = (t - self.t_start) / self.dt
        ki = int(round(k))
        if not (0 <= ki <= self.n_steps) or abs(k - ki) > _REL_TOL * max(1.0, abs(k)):
            raise GridError(f"time {t} is not on the grid")
        return ki


def steps_for(horizon: float, dt: float) -> int:
    """Number of steps covering [0, horizon]; horizon must be a multiple of dt."""
    k = horizon / dt
    ki = int(round(k))
    if ki < 0 or abs(k - ki) > _REL_TOL * max(1.0, abs(k)):
        raise GridError(f"horizon {horizon} is not a multiple of dt={dt}")
    return ki


@dataclass(frozen=True)
class ChannelKind:
    """One driving channel: brownian, stable(alpha), poisson(rate, jump),
    subordinator(alpha) or zero."""

    kind: str
    alpha: Optional[float] = None
    rate: Optional[float] = None
    jump: Optional[float] = None

    def __post_init__(self):
        if self.kind == "brownian" or self.kind == "zero":
            pass
        elif self.kind == "stable":
            if self.alpha is None or not 0.0 < self.alpha <= 2.0:
                raise ParameterError("stable channel needs alpha in (0, 2]")
        elif self.kind == "poisson":
            if self.rate is None or not self.rate > 0:
                raise ParameterError("poisson channel needs rate > 0")
            if self.jump is None:
                object.__setattr__(self, "jump", 1.0)
        elif self.kind == "subordinator":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ParameterError("subordinator channel needs alpha in (0, 1)")
        else:
            raise ParameterError(f"unknown channel kind {self.kind!r}")

    @property
    def nondecreasing(self) -> bool:
        return self.kind in ("poisson", "subordinator")


def brownian() -> ChannelKind:
    return ChannelKind("brownian")


def stable(alpha: float) -> ChannelKind:
    return ChannelKind("stable", alpha=alpha)


def poisson(rate: float, jump: float = 1.0) -> ChannelKind:
    return ChannelKind("poisson", rate=rate, jump=jump)


def subordinator(alpha: float) -> ChannelKind:
    return ChannelKind("subordinator", alpha=alpha)


def zero() -> ChannelKind:
    return ChannelKind("zero")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _values_from_increments(increments: np.ndarray, pin_index: int) -> np.ndarray:
    """Cumulative values pinned to zero at pin_index.

    Forward part is a plain cumsum; the part before the pin is the negated
    reversed cumsum, which reproduces the recursion v[j] = v[j+1] - inc[j]
    bit-for-bit. Slices re-pinned at the same point therefore agree bitwise.
    """
    n, m = increments.shape
    values = np.zeros((n + 1, m))
    if pin_index < n:
        values[pin_index + 1:] = np.cumsum(increments[pin_index:], axis=0)
    if pin_index > 0:
        values[:pin_index] = -np.cumsum(increments[:pin_index][::-1], axis=0)[::-1]
    return values


@dataclass(frozen=True)
class NoisePath:
    """One noise realization: increments per step per channel, values derived."""

    grid: TimeGrid
    kinds: tuple
    increments: np.ndarray  # (n_steps, m), read-only
    master_seed: int
    stream_id: int
    pin_index: int = 0
    values: np.ndarray = field(init=False)  # (n_steps+1, m), read-only

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[0] != self.grid.n_steps or inc.shape[1] != len(self.kinds):
            raise GridError("increment array does not match grid/channels")
        if not 0 <= self.pin_index <= self.grid.n_steps:
            raise PathIndexError("pin_index out of range")
        object.__setattr__(self, "increments", _freeze(inc))
        object.__setattr__(self, "values", _freeze(_values_from_increments(inc, self.pin_index)))

    @property
    def channels(self) -> int:
        return len(self.kinds)

    def fingerprint(self) -> str:
        """Hash identifying this realization; used to assert same-omega discipline."""
        import hashlib

        h = hashlib.sha256()
        h.update(repr((self.grid, self.kinds, self.pin_index)).encode())
        h.update(self.increments.tobytes())
        return h.hexdigest()

    def dump_csv(self, f: TextIO) -> None:
        """Write `t,ch0,ch1,...` rows at full double precision."""
        cols = ",".join(f"ch{i}" for i in range(self.channels))
        f.write(f"t,{cols}\n")
        times = self.grid.times()
        for k in range(self.grid.n_steps + 1):
            row = ",".join(f"{v:.17g}" for v in self.values[k])
            f.write(f"{times[k]:.17g},{row}\n")


def _sample_increments(kind: ChannelKind, n: int, dt: float, gen: np.random.Generator) -> np.ndarray:
    if kind.kind == "brownian":
        return gen.standard_normal(n) * math.sqrt(dt)
    if kind.kind == "zero":
        return np.zeros(n)
    if kind.kind == "stable":
        return dt ** (1.0 / kind.alpha) * _cms_stable(gen, kind.alpha, 0.0, n)
    if kind.kind == "poisson":
        if kind.rate * dt > 0.1:
            raise ParameterError(
                f"poisson channel needs rate*dt <= 0.1 to keep multi-jump bins rare "
                f"(got {kind.rate * dt:.3g})")
        return kind.jump * gen.poisson(kind.rate * dt, n).astype(float)
    if kind.kind == "subordinator":
        a = kind.alpha
        scale = math.cos(math.pi * a / 2.0) ** (1.0 / a)
        return dt ** (1.0 / a) * scale * _cms_stable(gen, a, 1.0, n)
    raise ParameterError(f"unknown channel kind {kind.kind!r}")  # pragma: no cover


def _cms_stable(gen: np.random.Generator, alpha: float, beta: float, n: int) -> np.ndarray:
    """Chambers-Mallows-Stuck draw of S_alpha(1, beta, 0).

    beta=0 gives the symmetric law with characteristic function exp(-|xi|^alpha)
    (alpha=2 falls out as N(0,2)); beta=1 with alpha<1 gives the one-sided law.
    """
    U = (gen.random(n) - 0.5) * np.pi
    E = gen.exponential(1.0, n)
    if abs(alpha - 1.0) < 1e-12 and beta == 0.0:
        return np.tan(U)
    tb = beta * math.tan(math.pi * alpha / 2.0)
    B = math.atan(tb) / alpha
    S = (1.0 + tb * tb) ** (1.0 / (2.0 * alpha))
    return (S * np.sin(alpha * (U + B)) / np.cos(U) ** (1.0 / alpha)
            * (np.cos(U - alpha * (U + B)) / E) ** ((1.0 - alpha) / alpha))


def sample_path(kinds, grid: TimeGrid, master_seed: int, stream_id: int) -> NoisePath:
    """Sample one realization; bit-identical for identical arguments."""
    kinds = tuple(kinds)
    gen = _rng.substream(master_seed, stream_id, _rng.PURPOSE_PATH)
    inc = np.empty((grid.n_steps, len(kinds)))
    for j, kind in enumerate(kinds):
        inc[:, j] = _sample_increments(kind, grid.n_steps, grid.dt, gen)
    return NoisePath(grid, kinds, inc, master_seed, stream_id, pin_index=0)


def sample_two_sided(kinds, t_past: float, t_future: float, dt: float,
                     master_seed: int, stream_id: int) -> NoisePath:
    """Sample a path on [-t_past, t_future] pinned to zero at time 0.

    The restriction to [-t_past, 0] is fixed by (kinds, t_past, dt, seed,
    stream), so pullback truncations taken as slices of this object reuse
    identical noise.
    """
    n_past = steps_for(t_past, dt)
    n_future = steps_for(t_future, dt)
    grid = TimeGrid(-n_past * dt, dt, n_past + n_future)
    kinds = tuple(kinds)
    gen = _rng.substream(master_seed, stream_id, _rng.PURPOSE_PATH)
    inc = np.empty((grid.n_steps, len(kinds)))
    for j, kind in enumerate(kinds):
        inc[:, j] = _sample_increments(kind, grid.n_steps, dt, gen)
    return NoisePath(grid, kinds, inc, master_seed, stream_id, pin_index=n_past)


def shift_path(path: NoisePath, k: int) -> NoisePath:
    """Time shift: the returned path is omega(k + .) - omega(k) on its own clock.

    Slicing the canonical increments makes composition of shifts exact
    (bitwise) on grid indices.
    """
    if not 0 <= k <= path.grid.n_steps:
        raise PathIndexError(f"shift index {k} out of range 0..{path.grid.n_steps}")
    grid = TimeGrid(0.0, path.grid.dt, path.grid.n_steps - k)
    return NoisePath(grid, path.kinds, path.increments[k:], path.master_seed,
                     path.stream_id, pin_index=0)


def restrict_to_past(path: NoisePath, n_back: int) -> NoisePath:
    """Slice the last n_back steps before the pin: the segment [-n_back*dt, 0].

    Used by pullback runs; the values agree bitwise with the same index range
    of the parent path.
    """
    if not 0 <= n_back <= path.pin_index:
        raise PathIndexError(f"cannot take {n_back} steps before the pin")
    lo = path.pin_index - n_back
    grid = TimeGrid(-n_back * path.grid.dt, path.grid.dt, n_back)
    return NoisePath(grid, path.kinds, path.increments[lo:path.pin_index],
                     path.master_seed, path.stream_id, pin_index=n_back)


@dataclass(frozen=True)
class OUPath:
    """Ornstein-Uhlenbeck functional O of a Brownian channel on the same grid.

    Built by the recursion O[k+1] = exp(-lam*dt)*O[k] + gamma*dW[k] with a
    stationary N(0, gamma^2/(2 lam)) initial draw from a dedicated sub-stream.
    """

    grid: TimeGrid
    lam: float
    gamma: float
    values: np.ndarray  # (n_steps+1,), read-only
    source: str
    master_seed: int
    stream_id: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError("OU relaxation rate must be positive")
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_steps + 1,):
            raise GridError("OU value array does not match grid")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("OU path has non-finite values")
        object.__setattr__(self, "values", _freeze(vals))

    def slice_from(self, k: int) -> "OUPath":
        """Tail of the path from index k, on its own clock starting at 0."""
        if not 0 <= k <= self.grid.n_steps:
            raise PathIndexError(f"slice index {k} out of range")
        grid = TimeGrid(0.0, self.grid.dt, self.grid.n_steps - k)
        return OUPath(grid, self.lam, self.gamma, self.values[k:], self.source,
                      self.master_seed, self.stream_id)


def _ou_recursion(o0: float, gamma: float, lam: float, dt: float, dw: np.ndarray) -> np.ndarray:
    from scipy.signal import lfilter

    a = math.exp(-lam * dt)
    out = np.empty(len(dw) + 1)
    out[0] = o0
    if len(dw):
        # y[k] = a*y[k-1] + gamma*dw[k], seeded with y[-1] = o0
        out[1:], _ = lfilter([1.0], [1.0, -a], gamma * dw, zi=np.array([a * o0]))
    return out


def ou_from_path(path: NoisePath, channel: int, lam: float, gamma: float) -> OUPath:
    """OU functional driven by the given Brownian channel of an existing path."""
    if not 0 <= channel < path.channels:
        raise PathIndexError(f"channel {channel} out of range")
    if path.kinds[channel].kind != "brownian":
        raise KindError("OU construction needs a brownian channel")
    if not lam > 0:
        raise ParameterError("OU relaxation rate must be positive")
    gen = _rng.substream(path.master_seed, path.stream_id, _rng.PURPOSE_OU_INIT)
    o0 = gen.normal(0.0, abs(gamma) / math.sqrt(2.0 * lam)) if gamma != 0.0 else 0.0
    vals = _ou_recursion(o0, gamma, lam, path.grid.dt, path.increments[:, channel])
    return OUPath(path.grid, lam, gamma, vals, f"shared_brownian_channel({channel})",
                  path.master_seed, path.stream_id)


def stationary_ou_path(grid: TimeGrid, lam: float, gamma: float,
                       master_seed: int, stream_id: int) -> OUPath:
    """Standalone stationary OU path with its own Brownian sub-stream."""
    if not lam > 0:
        raise ParameterError("OU relaxation rate must be positive")
    gen = _rng.substream(master_seed, stream_id, _rng.PURPOSE_OU_PATH)
    dw = gen.standard_normal(grid.n_steps) * math.sqrt(grid.dt)
    gen0 = _rng.substream(master_seed, stream_id, _rng.PURPOSE_OU_INIT)
    o0 = gen0.normal(0.0, abs(gamma) / math.sqrt(2.0 * lam)) if gamma != 0.0 else 0.0
    vals = _ou_recursion(o0, gamma, lam, grid.dt, dw)
    return OUPath(grid, lam, gamma, vals, "standalone_stationary", master_seed, stream_id)


def sample_isotropic_stable_increments(d: int, alpha: float, n: int, dt: float,
                                       gen: np.random.Generator) -> np.ndarray:
    """Jointly isotropic d-dimensional stable increments, char. fn exp(-dt|xi|^alpha).

    Gaussian subordination: dL = sqrt(2 dS) Z with dS one-sided (alpha/2)-stable
    of Laplace exponent dt*u^(alpha/2). Only the d>=2 case needs this; a single
    stable channel is already isotropic in 1D.
    """
    if not 0.0 < alpha < 2.0:
        raise ParameterError("isotropic stable subordination needs alpha in (0, 2)")
    a2 = alpha / 2.0
    scale = math.cos(math.pi * a2 / 2.0) ** (1.0 / a2)
    ds = dt ** (1.0 / a2) * scale * _cms_stable(gen, a2, 1.0, n)
    z = gen.standard_normal((n, d))
    return np.sqrt(2.0 * ds)[:, None] * z
