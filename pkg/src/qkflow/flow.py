"""Explicit finite-difference integration of the graphical Q_k-flow

    u_t = Q_k(Du, D^2u) * sqrt(1 + |Du|^2)

on uniform grids in one or two space dimensions.

Jets come from second-order central differences.  Dirichlet data are read
from a provider on the outermost ring of nodes (no one-sided stencils);
periodic grids wrap.  The pointwise kernel uses only +, -, *, / and sqrt, so
splitting the grid across worker threads cannot change a single bit of the
result.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from . import symfunc
from .errors import ConeViolation, ConfigError, DimensionError, NonFinite, QkError
from .report import MonitorReport

log = logging.getLogger(__name__)

Provider = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class Dirichlet:
    """Boundary values from ``provider(x, t)``; ``x`` has shape (..., n)."""

    provider: Provider


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class GraphPatch:
    """Samples of a graph function on the grid ``lower + h * index``."""

    lower: tuple[float, ...]
    h: float
    u: np.ndarray
    bc: Dirichlet | Periodic

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        if u.ndim not in (1, 2):
            raise DimensionError(f"grid dimension must be 1 or 2, got {u.ndim}")
        if len(self.lower) != u.ndim:
            raise DimensionError("lower corner does not match the grid dimension")
        if min(u.shape) < 5:
            raise DimensionError(f"need at least 5 nodes per axis, got {u.shape}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if not np.all(np.isfinite(u)):
            raise NonFinite(float("nan"), "initial grid data is not finite")

    @property
    def n(self) -> int:
        return self.u.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.u.shape

    @property
    def periodic(self) -> bool:
        return isinstance(self.bc, Periodic)

    def axes(self) -> list[np.ndarray]:
        return [lo + self.h * np.arange(m) for lo, m in zip(self.lower, self.dims)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``dims + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @property
    def active(self) -> tuple[slice, ...]:
        """Nodes whose values evolve (all of them on periodic grids)."""
        if self.periodic:
            return (slice(None),) * self.n
        return (slice(1, -1),) * self.n

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.dims, dtype=bool)
        mask[self.active] = False
        return mask

    def with_u(self, u: np.ndarray) -> "GraphPatch":
        return replace(self, u=u)


@dataclass(frozen=True)
class FlowState:
    patch: GraphPatch
    t: float = 0.0
    dt: float = 0.0
    k: int = 0
    cone_violations: int = 0
    steps: int = 0


# ---------------------------------------------------------------------------
# stencils


def _shifted(up: np.ndarray, offsets, width: int) -> np.ndarray:
    idx = tuple(slice(width + o, m - width + o) for o, m in zip(offsets, up.shape))
    return up[idx]


def central_jets(patch: GraphPatch):
    """Second-order central gradient and Hessian on the active nodes."""
    n, h = patch.n, patch.h
    up = np.pad(patch.u, 1, mode="wrap") if patch.periodic else patch.u
    c = _shifted(up, (0,) * n, 1)
    grad = np.empty(c.shape + (n,))
    hess = np.empty(c.shape + (n, n))
    unit = np.eye(n, dtype=int)
    for i in range(n):
        fp = _shifted(up, unit[i], 1)
        fm = _shifted(up, -unit[i], 1)
        grad[..., i] = (fp - fm) / (2 * h)
        hess[..., i, i] = (fp - 2 * c + fm) / (h * h)
        for j in range(i + 1, n):
            pp = _shifted(up, unit[i] + unit[j], 1)
            pm = _shifted(up, unit[i] - unit[j], 1)
            mp = _shifted(up, -unit[i] + unit[j], 1)
            mm = _shifted(up, -unit[i] - unit[j], 1)
            hess[..., i, j] = hess[..., j, i] = (pp - pm - mp + mm) / (4 * h * h)
    return grad, hess


def central_gradient4(patch: GraphPatch) -> tuple[np.ndarray, tuple[slice, ...]]:
    """Fourth-order central gradient; returns values and the node slice they cover."""
    n, h = patch.n, patch.h
    if patch.periodic:
        up, width = np.pad(patch.u, 2, mode="wrap"), 2
        region = (slice(None),) * n
    else:
        up, width = patch.u, 2
        region = (slice(2, -2),) * n
    unit = np.eye(n, dtype=int)
    shape = _shifted(up, (0,) * n, width).shape
    grad = np.empty(shape + (n,))
    for i in range(n):
        f = {s: _shifted(up, s * unit[i], width) for s in (-2, -1, 1, 2)}
        grad[..., i] = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
    return grad, region


def grid_curvatures(grad: np.ndarray, hess: np.ndarray):
    """Principal curvatures (descending) and w from jets, elementwise, n in {1, 2}."""
    n = grad.shape[-1]
    if n == 1:
        g = grad[..., 0]
        w = np.sqrt(1.0 + g * g)
        return (hess[..., 0, 0] / (w * w * w))[..., None], w
    if n != 2:
        raise DimensionError("grid kernels support n = 1 or 2")
    gx, gy = grad[..., 0], grad[..., 1]
    hxx, hyy, hxy = hess[..., 0, 0], hess[..., 1, 1], hess[..., 0, 1]
    w = np.sqrt(1.0 + gx * gx + gy * gy)
    c = 1.0 / (w * (1.0 + w))
    p11 = 1.0 - c * gx * gx
    p22 = 1.0 - c * gy * gy
    p12 = -c * gx * gy
    m11 = hxx * p11 + hxy * p12
    m12 = hxx * p12 + hxy * p22
    m21 = hxy * p11 + hyy * p12
    m22 = hxy * p12 + hyy * p22
    a11 = (p11 * m11 + p12 * m21) / w
    a22 = (p12 * m12 + p22 * m22) / w
    a12 = (p11 * m12 + p12 * m22) / w
    mean = 0.5 * (a11 + a22)
    half = 0.5 * (a11 - a22)
    rad = np.sqrt(half * half + a12 * a12)
    return np.stack([mean + rad, mean - rad], axis=-1), w


@dataclass
class Evaluation:
    """Pointwise quantities on the active nodes."""

    lam: np.ndarray
    w: np.ndarray
    q: np.ndarray
    admissible: np.ndarray
    trace: np.ndarray
    grad: np.ndarray = field(repr=False)


def _kernel(grad, hess, k, rtol):
    lam, w = grid_curvatures(grad, hess)
    s, sc = symfunc.tables(lam)
    q, defined = symfunc._quotient_from(s, sc, k, rtol)
    if k == 0:
        admissible = np.ones(w.shape, dtype=bool)
    else:
        admissible = symfunc._index_from(s, sc, rtol) >= k + 1
    trace, tdef = symfunc._trace_from(s, sc, k, rtol)
    q = np.where(defined, q, 0.0)
    trace = np.where(tdef & admissible, trace, np.nan)
    return lam, w, q, admissible, trace


def evaluate(patch: GraphPatch, k: int, rtol: float = symfunc.RTOL, threads: int = 1) -> Evaluation:
    """Curvatures, Q_k and the parabolicity trace on the active nodes.

    With ``threads > 1`` the active region is split into fixed row blocks; the
    kernel is elementwise so the result does not depend on the split.
    """
    grad, hess = central_jets(patch)
    rows = grad.shape[0]
    if threads <= 1 or rows < 2 * threads:
        parts = [_kernel(grad, hess, k, rtol)]
    else:
        bounds = np.linspace(0, rows, threads + 1).astype(int)
        blocks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: _kernel(grad[s], hess[s], k, rtol), blocks))
    lam, w, q, admissible, trace = (np.concatenate(x, axis=0) for x in zip(*parts))
    return Evaluation(lam=lam, w=w, q=q, admissible=admissible, trace=trace, grad=grad)


def _violations(patch: GraphPatch, ev: Evaluation) -> list[tuple[int, ...]]:
    bad = np.argwhere(~ev.admissible)
    if not patch.periodic:
        bad = bad + 1
    return [tuple(p) for p in bad]


def _speed(patch: GraphPatch, ev: Evaluation, source: float) -> np.ndarray:
    out = np.zeros(patch.dims)
    out[patch.active] = ev.q * ev.w - source
    return out


def rhs(patch: GraphPatch, k: int, policy: str = "abort", rtol: float = symfunc.RTOL,
        threads: int = 1, source: float = 0.0) -> np.ndarray:
    """Q_k(A) * w - source on the active nodes, zero on Dirichlet nodes."""
    ev = evaluate(patch, k, rtol, threads)
    if policy == "abort" and not np.all(ev.admissible):
        raise ConeViolation(_violations(patch, ev))
    return _speed(patch, ev, source)


def _dt_from(patch: GraphPatch, ev: Evaluation, k: int, safety: float, dt_max: float) -> float:
    n = patch.n
    if k == 0:
        bound = float(n)
    else:
        finite = ev.trace[np.isfinite(ev.trace)]
        bound = float(np.max(finite)) if finite.size else float("nan")
        floor = (n - k) / (k + 1)
        bound = floor if not bound >= floor else bound
    return min(safety * patch.h**2 / bound, dt_max)


def stable_dt(patch: GraphPatch, k: int, safety: float = 0.2, dt_max: float = math.inf,
              policy: str = "abort", rtol: float = symfunc.RTOL, threads: int = 1) -> float:
    """safety * h^2 / max_x sum_i dQ_k/dlam_i, capped at ``dt_max``.

    The diffusion matrix of the linearized operator is P G P with P^2 the inverse
    metric (eigenvalues <= 1) and G the curvature gradient, so its spectral
    radius is bounded by the trace of G.  Explicit Euler and Heun are stable for
    safety <= 1/4 in two dimensions and <= 1/2 in one.
    """
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    ev = evaluate(patch, k, rtol, threads)
    if policy == "abort" and not np.all(ev.admissible):
        raise ConeViolation(_violations(patch, ev))
    return _dt_from(patch, ev, k, safety, dt_max)


@lru_cache(maxsize=32)
def _ring(lower: tuple, h: float, dims: tuple):
    probe = GraphPatch(lower, h, np.zeros(dims), Periodic())
    mask = np.ones(dims, dtype=bool)
    mask[(slice(1, -1),) * len(dims)] = False
    x = probe.coords()[mask]
    x.setflags(write=False)
    mask.setflags(write=False)
    return mask, x


def _refresh(patch: GraphPatch, u: np.ndarray, t: float) -> np.ndarray:
    if isinstance(patch.bc, Dirichlet):
        mask, x = _ring(patch.lower, patch.h, patch.dims)
        u[mask] = np.asarray(patch.bc.provider(x, t), dtype=float)
    return u


def step(state: FlowState, scheme: str = "rk2", safety: float = 0.2, dt_max: float = math.inf,
         policy: str = "abort", rtol: float = symfunc.RTOL, threads: int = 1,
         source: float = 0.0) -> FlowState:
    """Advance one explicit step (``euler`` or ``rk2`` = Heun)."""
    patch, k = state.patch, state.k
    ev = evaluate(patch, k, rtol, threads)
    bad = int(np.count_nonzero(~ev.admissible))
    if bad and policy == "abort":
        raise ConeViolation(_violations(patch, ev))
    dt = _dt_from(patch, ev, k, safety, dt_max)
    t1 = state.t + dt
    k1 = _speed(patch, ev, source)
    u1 = _refresh(patch, patch.u + dt * k1, t1)
    if scheme == "rk2":
        stage = patch.with_u(u1) if np.all(np.isfinite(u1)) else None
        if stage is None:
            raise NonFinite(t1)
        ev2 = evaluate(stage, k, rtol, threads)
        bad2 = int(np.count_nonzero(~ev2.admissible))
        if bad2 and policy == "abort":
            raise ConeViolation(_violations(stage, ev2))
        bad = max(bad, bad2)
        k2 = _speed(stage, ev2, source)
        u1 = _refresh(patch, patch.u + 0.5 * dt * (k1 + k2), t1)
    elif scheme != "euler":
        raise ValueError(f"unknown scheme {scheme!r}")
    if not np.all(np.isfinite(u1)):
        raise NonFinite(t1)
    return FlowState(patch=patch.with_u(u1), t=t1, dt=dt, k=k,
                     cone_violations=state.cone_violations + bad, steps=state.steps + 1)


# ---------------------------------------------------------------------------
# initial data


def radius_law(n: int, k: int, r0: float, t):
    """Squared sphere radius R(t)^2 = R0^2 - 2 (n-k)/(k+1) t."""
    return r0 * r0 - 2.0 * (n - k) / (k + 1) * np.asarray(t, dtype=float)


def shrinking_cap(n: int, k: int, r0: float = 1.0, height: float = 0.0) -> Provider:
    """Exact solution u = height - sqrt(R(t)^2 - |x|^2) (lower hemisphere)."""

    def u(x, t):
        x = np.asarray(x, dtype=float)
        return height - np.sqrt(radius_law(n, k, r0, t) - np.sum(x * x, axis=-1))

    return u


def _static(f):
    return lambda x, t: f(np.asarray(x, dtype=float))


PROFILES: dict[str, Callable[..., Provider]] = {
    "shrinking_cap": lambda n, k, R0=1.0, height=0.0: shrinking_cap(n, k, R0, height),
    "sine": lambda n, k, amplitude=0.1, wavenumber=1.0: _static(
        lambda x: amplitude * np.sum(np.sin(wavenumber * x), axis=-1)),
    "affine": lambda n, k, slope=0.0, offset=0.0: _static(
        lambda x: offset + slope * np.sum(x, axis=-1)),
    "paraboloid": lambda n, k, curvature=1.0, height=0.0: _static(
        lambda x: height + 0.5 * curvature * np.sum(x * x, axis=-1)),
}


def build_patch(config) -> GraphPatch:
    """Initial patch described by a :class:`~qkflow.config.SolverConfig`."""
    from . import io

    n, k = config.n, config.k
    if config.initial == "file":
        lower, h, u = io.read_grid_csv(config.resolved_initial_path())
        provider = None
    else:
        if config.initial not in PROFILES:
            raise ConfigError(f"unknown initial profile {config.initial!r}")
        provider = PROFILES[config.initial](n, k, **config.initial_params)
        lower, h = config.lower, config.h
        # periodic grids exclude the upper endpoint, which duplicates the lower one
        extra = 0 if config.bc == "periodic" else 1
        dims = tuple(int(round((hi - lo) / h)) + extra for lo, hi in zip(config.lower, config.upper))
        u = None
    if config.bc == "periodic":
        bc = Periodic()
    elif config.bc == "exact":
        if provider is None:
            raise ConfigError("bc=exact needs an analytic initial profile")
        bc = Dirichlet(provider)
    elif config.bc == "fixed":
        bc = None
    else:
        raise ConfigError(f"unknown boundary type {config.bc!r}")
    if u is None:
        axes = [lo + h * np.arange(m) for lo, m in zip(lower, dims)]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        u = provider(x, 0.0)
    if bc is None:
        frozen = np.array(u, dtype=float, copy=True)
        lo_arr = np.asarray(lower, dtype=float)

        def held(x, t, _u=frozen, _lo=lo_arr, _h=h):
            idx = np.rint((np.asarray(x) - _lo) / _h).astype(int)
            return _u[tuple(idx[..., i] for i in range(idx.shape[-1]))]

        bc = Dirichlet(held)
    return GraphPatch(lower=tuple(lower), h=h, u=np.asarray(u, dtype=float), bc=bc)


Observer = Callable[[FlowState], float]


def evolve(config, observers: Mapping[str, Observer] | None = None,
           on_record: Callable[[FlowState], None] | None = None,
           patch: GraphPatch | None = None, source: float = 0.0,
           on_step: Callable[[FlowState], None] | None = None):
    """Integrate to ``config.t_final``; returns ``(state, report)``.

    Observers are evaluated at t = 0, every ``record_every`` steps and at the
    final time.  On failure the raised error carries ``t``, ``state`` and
    ``report`` attributes describing the last good state.
    """
    observers = dict(observers or {})
    patch = build_patch(config) if patch is None else patch
    state = FlowState(patch=patch, t=0.0, k=config.k)
    report = MonitorReport()
    tol = config.tolerances

    def record(s: FlowState):
        report.record_time(s.t)
        for name, fn in observers.items():
            report.add(name, s.t, fn(s))
        if on_record is not None:
            on_record(s)

    record(state)
    last_recorded = 0
    try:
        while state.t < config.t_final * (1 - 1e-14):
            state = step(state, scheme=config.scheme, safety=config.safety,
                         dt_max=min(config.dt_max, config.t_final - state.t),
                         policy=config.cone_policy, rtol=tol.get("cone_rtol", symfunc.RTOL),
                         threads=config.threads, source=source)
            if on_step is not None:
                on_step(state)
            if state.steps % config.record_every == 0:
                record(state)
                last_recorded = state.steps
    except QkError as exc:
        exc.t = getattr(exc, "t", state.t)
        exc.state = state
        exc.report = report
        log.warning("flow stopped at t=%g: %s", state.t, exc)
        raise
    if last_recorded != state.steps:
        record(state)
    return state, report
