"""Drift catalog: fields, analytic Jacobians, noise couplings, and a sampling
verifier for inner-product drift conditions in weighted metrics.

All drift/Jacobian kernels are module-level functions keyed by system name so
SystemSpec stays picklable and evaluations stay pure. Kernels are vectorized
over leading axes: drift maps (..., d) -> (..., d), jacobian (..., d) ->
(..., d, d). Systems whose drift depends on an attached OU functional take its
value as an extra broadcastable argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ParameterError, PreconditionError, StateError
from .noise import OUPath

DEFAULT_SCHEME_ADDITIVE = "euler_maruyama"
DEFAULT_SCHEME_TAMED = "tamed_euler"


@dataclass(frozen=True)
class SystemSpec:
    """A drift field with parameters, coupling matrix and metadata."""

    name: str
    dim: int
    params: dict
    coupling: np.ndarray  # (d, m), constant; rank < d means degenerate noise
    multiplicative: bool = False
    monotone_1d: bool = False
    default_scheme: str = DEFAULT_SCHEME_ADDITIVE
    needs_aux: bool = False
    aux: Optional[OUPath] = None

    def __post_init__(self):
        c = np.ascontiguousarray(self.coupling, dtype=float)
        if c.ndim != 2 or c.shape[0] != self.dim:
            raise ConfigurationError("coupling must be a d x m matrix")
        c.setflags(write=False)
        object.__setattr__(self, "coupling", c)

    @property
    def channels(self) -> int:
        return self.coupling.shape[1]

    @property
    def coupling_rank(self) -> int:
        return int(np.linalg.matrix_rank(self.coupling)) if self.coupling.size else 0

    def with_aux(self, aux: OUPath) -> "SystemSpec":
        if not self.needs_aux:
            raise ConfigurationError(f"{self.name} takes no auxiliary path")
        return replace(self, aux=aux)

    def drift(self, x, o=None):
        return _CATALOG[self.name].drift(self.params, np.asarray(x, dtype=float), o)

    def jacobian(self, x, o=None):
        return _CATALOG[self.name].jacobian(self.params, np.asarray(x, dtype=float), o)

    def aux_value_at(self, t: float) -> float:
        if not self.needs_aux:
            return 0.0
        if self.aux is None:
            raise StateError(f"{self.name} needs an attached OU path")
        return float(self.aux.values[self.aux.grid.index_of(t)])


def drift(system: SystemSpec, t: float, x) -> np.ndarray:
    """Drift field at state x and time t (t only matters for aux-driven systems)."""
    o = system.aux_value_at(t) if system.needs_aux else None
    return system.drift(x, o)


def jacobian(system: SystemSpec, t: float, x) -> np.ndarray:
    """Analytic Jacobian of the drift at state x and time t."""
    o = system.aux_value_at(t) if system.needs_aux else None
    return system.jacobian(x, o)


# --------------------------------------------------------------------------
# kernels


def _stack(*cols):
    return np.stack(cols, axis=-1)


def _linear_matrix(params) -> np.ndarray:
    d = int(params["d"])
    return np.diag([params[f"a{i + 1}"] for i in range(d)])


def _linear_drift(params, x, o):
    A = _linear_matrix(params)
    return x @ A.T


def _linear_jac(params, x, o):
    A = _linear_matrix(params)
    return np.broadcast_to(A, x.shape + (x.shape[-1],)).copy()


def _cubic_drift_1d(c2, c4, x):
    return c2 * x - c4 * x * x * x


def _cubic1d_drift(params, x, o):
    return _cubic_drift_1d(1.0, 1.0, x)


def _cubic1d_jac(params, x, o):
    return (1.0 - 3.0 * x * x)[..., None]


def _gradient1d_drift(params, x, o):
    return _cubic_drift_1d(params["c2"], params["c4"], x)


def _gradient1d_jac(params, x, o):
    return (params["c2"] - 3.0 * params["c4"] * x * x)[..., None]


def _geometric1d_drift(params, x, o):
    return np.zeros_like(x)


def _geometric1d_jac(params, x, o):
    return np.zeros_like(x)[..., None]


def _doublewell_drift(params, x, o):
    r2 = (x * x).sum(axis=-1, keepdims=True)
    return x * (1.0 - r2)


def _doublewell_jac(params, x, o):
    d = x.shape[-1]
    r2 = (x * x).sum(axis=-1)
    eye = np.eye(d)
    # J_ij = (1 - |x|^2) delta_ij - 2 x_i x_j
    return (1.0 - r2)[..., None, None] * eye - 2.0 * x[..., :, None] * x[..., None, :]


def _lorenz_drift(params, x, o):
    s, r, b = params["sigma"], params["rho"], params["beta"]
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    return _stack(s * (Y - X), r * X - Y - X * Z, -b * Z + X * Y)


def _lorenz_jac(params, x, o):
    s, r, b = params["sigma"], params["rho"], params["beta"]
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    zeros = np.zeros_like(X)
    row0 = _stack(np.full_like(X, -s), np.full_like(X, s), zeros)
    row1 = _stack(r - Z, np.full_like(X, -1.0), -X)
    row2 = _stack(Y, X, np.full_like(X, -b))
    return np.stack([row0, row1, row2], axis=-2)


def _lorenz_conj_drift(params, x, o):
    s, r, b, lam = params["sigma"], params["rho"], params["beta"], params["lam"]
    o = np.asarray(o, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    return _stack(s * (Y - X),
                  (r - o) * X - Y - X * Z,
                  -b * Z + X * Y - (b - lam) * o)


def _lorenz_conj_jac(params, x, o):
    s, r, b = params["sigma"], params["rho"], params["beta"]
    o = np.asarray(o, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    zeros = np.zeros_like(X)
    row0 = _stack(np.full_like(X, -s), np.full_like(X, s), zeros)
    row1 = _stack((r - o) - Z + zeros, np.full_like(X, -1.0), -X)
    row2 = _stack(Y, X, np.full_like(X, -b))
    return np.stack([row0, row1, row2], axis=-2)


@dataclass(frozen=True)
class _Entry:
    drift: Callable
    jacobian: Callable
    build: Callable


def _require(params, required, name, defaults=None):
    merged = dict(defaults or {})
    merged.update(params)
    unknown = set(merged) - set(required)
    if unknown:
        raise ConfigurationError(f"{name}: unknown parameters {sorted(unknown)}")
    missing = set(required) - set(merged)
    if missing:
        raise ConfigurationError(f"{name}: missing parameters {sorted(missing)}")
    return {k: merged[k] for k in required}


def _build_linear(params):
    if "d" not in params:
        raise ConfigurationError("linear_d: missing parameter 'd'")
    d = int(params["d"])
    if d < 1:
        raise ConfigurationError("linear_d: d must be >= 1")
    required = ["d"] + [f"a{i + 1}" for i in range(d)] + ["sigma"]
    p = _require(params, required, "linear_d", defaults={"sigma": 1.0})
    p["d"] = d
    coupling = p["sigma"] * np.eye(d)
    return SystemSpec("linear_d", d, p, coupling)


def _build_cubic1d(params):
    p = _require(params, ["sigma"], "cubic1d", defaults={"sigma": 1.0})
    return SystemSpec("cubic1d", 1, p, [[p["sigma"]]], monotone_1d=True,
                      default_scheme=DEFAULT_SCHEME_TAMED)


def _build_gradient1d(params):
    p = _require(params, ["c2", "c4", "sigma"], "gradient1d",
                 defaults={"c2": 1.0, "c4": 1.0, "sigma": 1.0})
    if p["c4"] <= 0:
        raise ConfigurationError("gradient1d: c4 must be positive (confining well)")
    return SystemSpec("gradient1d", 1, p, [[p["sigma"]]], monotone_1d=True,
                      default_scheme=DEFAULT_SCHEME_TAMED)


def _build_geometric1d(params):
    p = _require(params, [], "geometric1d")
    # one-step map x -> x*(1 + dW) is affine, so interval images are endpoint-exact
    return SystemSpec("geometric1d", 1, p, [[1.0]], multiplicative=True, monotone_1d=True)


def _build_doublewell(params):
    p = _require(params, ["d", "n", "sigma"], "doublewell_degenerate",
                 defaults={"sigma": 1.0})
    d, n = int(p["d"]), int(p["n"])
    if not (1 <= n < d):
        raise ConfigurationError("doublewell_degenerate: need 1 <= n < d")
    if p["sigma"] <= 0:
        raise ConfigurationError("doublewell_degenerate: sigma must be positive")
    p["d"], p["n"] = d, n
    coupling = np.zeros((d, n))
    coupling[:n, :n] = p["sigma"] * np.eye(n)
    return SystemSpec("doublewell_degenerate", d, p, coupling,
                      default_scheme=DEFAULT_SCHEME_TAMED)


def _check_lorenz(p):
    if p["sigma"] <= 0 or p["beta"] <= 0:
        raise ConfigurationError("lorenz63: sigma and beta must be positive")


def _build_lorenz(params):
    p = _require(params, ["sigma", "rho", "beta", "gamma"], "lorenz63",
                 defaults={"gamma": 1.0})
    _check_lorenz(p)
    return SystemSpec("lorenz63", 3, p, [[0.0], [0.0], [p["gamma"]]])


def _build_lorenz_conj(params):
    p = _require(params, ["sigma", "rho", "beta", "gamma", "lam"], "lorenz63_conjugated",
                 defaults={"gamma": 1.0, "lam": None})
    if p["lam"] is None:
        p["lam"] = p["beta"]
    _check_lorenz(p)
    if p["lam"] <= 0:
        raise ConfigurationError("lorenz63_conjugated: lam must be positive")
    return SystemSpec("lorenz63_conjugated", 3, p, [[0.0], [0.0], [0.0]], needs_aux=True)


_CATALOG = {
    "linear_d": _Entry(_linear_drift, _linear_jac, _build_linear),
    "cubic1d": _Entry(_cubic1d_drift, _cubic1d_jac, _build_cubic1d),
    "gradient1d": _Entry(_gradient1d_drift, _gradient1d_jac, _build_gradient1d),
    "geometric1d": _Entry(_geometric1d_drift, _geometric1d_jac, _build_geometric1d),
    "doublewell_degenerate": _Entry(_doublewell_drift, _doublewell_jac, _build_doublewell),
    "lorenz63": _Entry(_lorenz_drift, _lorenz_jac, _build_lorenz),
    "lorenz63_conjugated": _Entry(_lorenz_conj_drift, _lorenz_conj_jac, _build_lorenz_conj),
}


def catalog_names() -> list:
    return sorted(_CATALOG)


def build_system(name: str, params: Optional[dict] = None) -> SystemSpec:
    """Build a catalog system; ConfigurationError on unknown name or bad params."""
    if name not in _CATALOG:
        raise ConfigurationError(
            f"unknown system {name!r}; available: {', '.join(catalog_names())}")
    return _CATALOG[name].build(dict(params or {}))


# --------------------------------------------------------------------------
# drift-condition verification


@dataclass(frozen=True)
class OneSidedLipschitz:
    """(b(x)-b(y), x-y)_w <= lam |x-y|_w^2 for all sampled pairs."""

    lam: float


@dataclass(frozen=True)
class EventuallyMonotone:
    """Growth at most eta inside |x|_w+|y|_w < R, contraction at least lam outside."""

    R: float
    eta: float
    lam: float


@dataclass(frozen=True)
class MonotoneAtPoint:
    """(b(x)-b(z), x-z)_w <= -lam |x-z|_w^2 against the fixed point z."""

    z: tuple
    lam: float


@dataclass(frozen=True)
class DriftConditionReport:
    """Sampled evidence for a drift condition; never a proof.

    worst_margin is normalized by the squared weighted distance of the pair,
    so `passed` means: no sampled pair violated the inequality by more than
    1e-12 per unit squared distance.
    """

    condition: str
    metric_weights: tuple
    constants: dict
    n_pairs: int
    worst_margin: float
    passed: bool

    TOLERANCE = 1e-12


@dataclass(frozen=True)
class BallSampler:
    """Uniform sampler on a (weighted-metric) ball, with a deterministic coarse grid."""

    center: tuple
    radius: float
    weights: Optional[tuple] = None

    def _sqrtw(self, d):
        w = np.ones(d) if self.weights is None else np.asarray(self.weights, dtype=float)
        return np.sqrt(w)

    def sample(self, gen, n: int) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        d = len(c)
        u = gen.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = self.radius * gen.random((n, 1)) ** (1.0 / d)
        return c + (u * r) / self._sqrtw(d)

    def grid_points(self) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        d = len(c)
        per_axis = {1: 201, 2: 31, 3: 13}.get(d, 7)
        axis = np.linspace(-self.radius, self.radius, per_axis)
        mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
        mesh = mesh[np.linalg.norm(mesh, axis=1) <= self.radius]
        return c + mesh / self._sqrtw(d)


@dataclass(frozen=True)
class BoxSampler:
    """Uniform sampler on an axis-aligned box [lo, hi]."""

    lo: tuple
    hi: tuple

    def sample(self, gen, n: int) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return lo + (hi - lo) * gen.random((n, len(lo)))

    def grid_points(self) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        d = len(lo)
        per_axis = {1: 201, 2: 31, 3: 13}.get(d, 7)
        axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(d)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def _pair_margins(system, xs, ys, weights, t=0.0):
    w = np.asarray(weights, dtype=float)
    bx = drift(system, t, xs)
    by = drift(system, t, ys)
    d = xs - ys
    num = (w * (bx - by) * d).sum(axis=-1)
    den = (w * d * d).sum(axis=-1)
    ok = den > 1e-24
    return num[ok] / den[ok], den[ok], xs[ok], ys[ok]


def verify_drift_condition(system: SystemSpec, condition, metric_weights,
                           sampler, n_pairs: int, seed: int) -> DriftConditionReport:
    """Sample pairs (plus a coarse deterministic grid) and report the worst margin.

    A pass is Monte Carlo evidence over the sampled region, not a proof.
    """
    w = np.asarray(metric_weights, dtype=float)
    if w.ndim != 1 or len(w) != system.dim or not np.all(w > 0):
        raise ParameterError("metric weights must be positive, one per coordinate")
    gen = np.random.default_rng(seed)

    if isinstance(condition, MonotoneAtPoint):
        z = np.asarray(condition.z, dtype=float)
        xs = np.vstack([sampler.sample(gen, n_pairs), sampler.grid_points()])
        ys = np.broadcast_to(z, xs.shape)
        ratio, _, _, _ = _pair_margins(system, xs, ys, w)
        margins = ratio + condition.lam
        name = "monotone_at_point"
        constants = {"lambda": condition.lam}
    else:
        xs = np.vstack([sampler.sample(gen, n_pairs), sampler.grid_points()])
        ys = np.vstack([sampler.sample(gen, n_pairs),
                        sampler.grid_points()[::-1].copy()])
        ratio, _, xs2, ys2 = _pair_margins(system, xs, ys, w)
        if isinstance(condition, OneSidedLipschitz):
            margins = ratio - condition.lam
            name = "one_sided_lipschitz"
            constants = {"lambda": condition.lam}
        elif isinstance(condition, EventuallyMonotone):
            norms = (np.sqrt((w * xs2 * xs2).sum(axis=-1))
                     + np.sqrt((w * ys2 * ys2).sum(axis=-1)))
            inside = norms < condition.R
            margins = np.where(inside, ratio - condition.eta, ratio + condition.lam)
            name = "eventually_monotone"
            constants = {"R": condition.R, "eta": condition.eta, "lambda": condition.lam}
        else:
            raise ParameterError(f"unknown drift condition {condition!r}")

    worst = float(margins.max()) if len(margins) else 0.0
    return DriftConditionReport(name, tuple(w), constants, int(len(margins)), worst,
                                worst <= DriftConditionReport.TOLERANCE)


def require_verified_growth(report: DriftConditionReport, metric_weights) -> float:
    """Extract the growth constant from a passed one-sided Lipschitz report."""
    if not isinstance(report, DriftConditionReport):
        raise PreconditionError("growth rate must come from verify_drift_condition")
    if report.condition != "one_sided_lipschitz" or not report.passed:
        raise PreconditionError("growth rate needs a passed one_sided_lipschitz report")
    if not np.allclose(report.metric_weights, np.asarray(metric_weights, dtype=float)):
        raise PreconditionError("growth report was verified in a different metric")
    return float(report.constants["lambda"])


def finite_difference_jacobian(system: SystemSpec, t: float, x, h_rel: float = 1e-5):
    """Central finite-difference probe of the analytic Jacobian."""
    x = np.asarray(x, dtype=float)
    d = len(x)
    out = np.empty((d, d))
    for j in range(d):
        h = h_rel * max(1.0, abs(x[j]))
        e = np.zeros(d)
        e[j] = h
        out[:, j] = (drift(system, t, x + e) - drift(system, t, x - e)) / (2 * h)
    return out
