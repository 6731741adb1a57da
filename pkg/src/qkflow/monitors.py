"""Diagnostics evaluated on stored snapshots of flow and translator runs.

Every monitor is a pure function of :class:`Snapshot` objects, so a report can
be recomputed bit for bit from the snapshot files of a run.  The estimates
being probed carry constants that are not explicit, so each check is phrased
as "one finite constant fits the whole sweep" and reports that constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import flow, symfunc
from .errors import DomainError, FitError, InsufficientData
from .report import MonitorReport

MIN_PANELS = 5


@dataclass(frozen=True)
class Snapshot:
    """Pointwise geometry of a graph at one time.

    ``x`` holds node positions (m, n); the remaining arrays are per node.
    Only nodes with a full stencil are kept.
    """

    t: float
    x: np.ndarray
    u: np.ndarray
    grad: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", self.x.shape[-1])

    @property
    def position(self) -> np.ndarray:
        """Points (x, u) of the hypersurface in R^{n+1}."""
        return np.column_stack([self.x, self.u])

    @property
    def mean_curvature(self) -> np.ndarray:
        return np.sum(self.lam, axis=-1)


def snapshot_from_patch(patch: flow.GraphPatch, t: float) -> Snapshot:
    grad, hess = flow.central_jets(patch)
    lam, w = flow.grid_curvatures(grad, hess)
    n = patch.n
    x = patch.coords()[patch.active]
    u = patch.u[patch.active]
    return Snapshot(t=float(t), x=x.reshape(-1, n), u=u.reshape(-1), grad=grad.reshape(-1, n),
                    lam=lam.reshape(-1, n), w=w.reshape(-1))


def snapshot_from_profile(profile, t: float = 0.0) -> Snapshot:
    """Radial samples placed on the first axis; enough for radially symmetric sweeps."""
    n, m = profile.n, profile.r.size
    x = np.zeros((m, n))
    x[:, 0] = profile.r
    grad = np.zeros((m, n))
    grad[:, 0] = profile.up
    return Snapshot(t=float(t), x=x, u=profile.u.copy(), grad=grad, lam=profile.curvatures(),
                    w=profile.w)


# ---------------------------------------------------------------------------
# gradient estimates


def gradient_test_functional(snap: Snapshot, xi, mode: str, r: float, center=None) -> float:
    """Maximum of the localized gradient test function over the ball B(center, r).

    parabolic: t * (1 - |x|^2/r^2) * (1 + u/M) * ln u_xi
    elliptic:  (r^2 - |x|^2) * (1 + u/M) * ln u_xi

    Heights are shifted to vanish at their minimum over the ball and M is the
    resulting maximum.  Points with u_xi <= 1 contribute 0.
    """
    if mode not in ("parabolic", "elliptic"):
        raise ValueError(f"mode must be parabolic or elliptic, got {mode!r}")
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    center = np.zeros(snap.n) if center is None else np.asarray(center, dtype=float)
    d2 = np.sum((snap.x - center) ** 2, axis=-1)
    inside = d2 < r * r
    if not np.any(inside):
        return 0.0
    u = snap.u[inside] - np.min(snap.u[inside])
    big_m = float(np.max(u))
    phi = 1.0 + (u / big_m if big_m > 0 else 0.0)
    slope = snap.grad[inside] @ xi
    log_term = np.log(np.maximum(slope, 1.0))
    if mode == "parabolic":
        rho = 1.0 - d2[inside] / (r * r)
        vals = snap.t * rho * phi * log_term
    else:
        rho = r * r - d2[inside]
        vals = rho * phi * log_term
    return float(np.max(vals))


@dataclass
class EstimatePanel:
    M: float
    r: float
    grad0: float
    fittedC: float = math.nan

    def __post_init__(self):
        if not (self.M >= 0 and self.r > 0):
            raise ValueError(f"panel needs M >= 0 and r > 0, got M={self.M}, r={self.r}")

    @property
    def scale(self) -> float:
        return self.M / self.r + (self.M / self.r) ** 2


def panels_from_profile(profile, center: float, radii: Sequence[float]) -> list[EstimatePanel]:
    """Balls B(x0, r) with x0 at distance ``center`` from the axis of a radial graph.

    The height is monotone in |x|, so its oscillation over a ball is
    u(center + r) - u(max(center - r, 0)).
    """
    sp = profile.spline()
    grad0 = abs(float(sp(center, 1)))
    out = []
    for r in radii:
        if center + r > profile.r[-1]:
            raise DomainError(f"ball of radius {r} about {center} leaves the profile")
        osc = float(sp(center + r) - sp(max(center - r, 0.0)))
        out.append(EstimatePanel(M=osc, r=float(r), grad0=grad0))
    return out


def panels_from_patch(patch: flow.GraphPatch, center_index: tuple[int, ...],
                      radii: Sequence[float]) -> list[EstimatePanel]:
    """Panels about a grid node; the center gradient uses fourth-order differences."""
    grad, region = flow.central_gradient4(patch)
    full = np.full(patch.dims + (patch.n,), np.nan)
    full[region] = grad
    g0 = full[tuple(center_index)]
    if np.any(np.isnan(g0)):
        raise DomainError("center node lacks a fourth-order stencil")
    x = patch.coords()
    x0 = x[tuple(center_index)]
    d2 = np.sum((x - x0) ** 2, axis=-1)
    out = []
    for r in radii:
        ball = patch.u[d2 <= r * r]
        out.append(EstimatePanel(M=float(np.ptp(ball)), r=float(r),
                                 grad0=float(np.linalg.norm(g0))))
    return out


@dataclass
class FitResult:
    constant: float
    passed: bool
    used: int
    message: str = ""


def elliptic_gradient_bound_check(panels: Sequence[EstimatePanel], c_max: float = 100.0) -> FitResult:
    """Smallest C with ln|Du(0)| <= C (M/r + M^2/r^2) over all panels.

    Panels with |Du(0)| <= 1 satisfy the bound for any C >= 0 and are skipped.
    Each panel's own ratio is stored in ``fittedC``.
    """
    if len(panels) < MIN_PANELS:
        raise InsufficientData(f"need at least {MIN_PANELS} panels, got {len(panels)}")
    worst = 0.0
    used = 0
    for p in panels:
        if not p.grad0 > 1.0:
            p.fittedC = 0.0
            continue
        used += 1
        p.fittedC = math.log(p.grad0) / p.scale if p.scale > 0 else math.inf
        worst = max(worst, p.fittedC)
    ok = math.isfinite(worst) and worst <= c_max
    msg = f"C = {worst:.6g} from {used} panels (ceiling {c_max:g})"
    return FitResult(constant=worst, passed=ok, used=used, message=msg)


# ---------------------------------------------------------------------------
# shrinking sphere


def fit_sphere(points: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Algebraic least-squares sphere; returns ``(center, radius, rms)``.

    Solves |p|^2 = 2 c.p + (R^2 - |c|^2) linearly, then reports the RMS of the
    geometric distances ||p - c| - R|.
    """
    p = np.asarray(points, dtype=float)
    if p.shape[0] < p.shape[1] + 2:
        raise FitError("too few points for a sphere fit")
    a = np.column_stack([2 * p, np.ones(p.shape[0])])
    b = np.sum(p * p, axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    c = sol[:-1]
    r2 = sol[-1] + c @ c
    if not r2 > 0:
        raise FitError("fit produced a non-positive squared radius")
    radius = math.sqrt(r2)
    rms = float(np.sqrt(np.mean((np.linalg.norm(p - c, axis=1) - radius) ** 2)))
    return c, radius, rms


def sphere_radius_law(snaps: Iterable[Snapshot], k: int, r0: float,
                      rms_max: float = 1e-2) -> list[tuple[float, float]]:
    """(t, |R(t)^2 + 2 (n-k)/(k+1) t - R0^2|) for each snapshot."""
    out = []
    for s in snaps:
        _, radius, rms = fit_sphere(s.position)
        if rms > rms_max:
            raise FitError(f"t={s.t!r}: surface is not spherical (rms {rms:.3e} > {rms_max:.1e})")
        rate = 2.0 * (s.n - k) / (k + 1)
        out.append((s.t, abs(radius * radius + rate * s.t - r0 * r0)))
    return out


# ---------------------------------------------------------------------------
# pinching and the gradient function


@dataclass
class PinchResult:
    gap: float
    passed: bool
    points: int


def pinching_monitor(snap: Snapshot, k: int, tol: float = 1e-10) -> PinchResult:
    """min of H^2 - |A|^2 over nodes whose curvatures lie in Gamma_{k+1}.

    The tolerance is relative to H^2.  With no admissible node the gap is +inf.
    """
    if k < 1:
        raise ValueError("pinching holds in Gamma_{k+1} only for k >= 1")
    s, sc = symfunc.tables(snap.lam)
    idx = symfunc._index_from(s, sc, symfunc.RTOL)
    sel = idx >= k + 1
    if not np.any(sel):
        return PinchResult(gap=math.inf, passed=True, points=0)
    lam = snap.lam[sel]
    h2 = np.sum(lam, axis=-1) ** 2
    gap = h2 - np.sum(lam * lam, axis=-1)
    ok = bool(np.all(gap >= -tol * np.maximum(h2, 1.0)))
    return PinchResult(gap=float(np.min(gap)), passed=ok, points=int(sel.sum()))


def max_v_value(snap: Snapshot, k: int, radius: float, x0) -> float:
    """sup of phi_+ w with phi = R^2 - |p - x0|^2 - 2 (n-k)/(k+1) t, p = (x, u)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (snap.n + 1,):
        raise ValueError(f"x0 must have n+1 = {snap.n + 1} entries")
    d2 = np.sum((snap.position - x0) ** 2, axis=-1)
    phi = radius * radius - d2 - 2.0 * (snap.n - k) / (k + 1) * snap.t
    return float(np.max(np.maximum(phi, 0.0) * snap.w))


def max_v_monitor(snaps: Iterable[Snapshot], k: int, radius: float, x0,
                  tol: float = 1e-3) -> tuple[list[tuple[float, float]], bool]:
    """Series of sup(phi_+ w).

    Passes iff no value exceeds its predecessor, or the initial value, by more than tol.
    """
    series = [(s.t, max_v_value(s, k, radius, x0)) for s in snaps]
    vals = [v for _, v in series]
    ok = all(b <= a + tol for a, b in zip(vals, vals[1:])) and all(v <= vals[0] + tol for v in vals)
    return series, ok


# ---------------------------------------------------------------------------
# curvature estimates


def curvature_estimate_check(snaps: Iterable[Snapshot], theta: float, radii: Sequence[float],
                             mode: str, k: int, x0=None, c_max: float = 1e3) -> FitResult:
    """Smallest c with sup H^2 <= c/(1-theta)^2 * B * sup w^4 on {|x - x0|^2 <= theta R^2}.

    B = 1/t + 1/R^2 (parabolic, t = 0 skipped) or 1 + 1/R^2 (elliptic).
    """
    if k < 1:
        raise ValueError("curvature estimates need k >= 1")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if mode not in ("parabolic", "elliptic"):
        raise ValueError(f"mode must be parabolic or elliptic, got {mode!r}")
    worst = 0.0
    used = 0
    for s in snaps:
        if mode == "parabolic" and s.t <= 0:
            continue
        center = np.zeros(s.n) if x0 is None else np.asarray(x0, dtype=float)
        d2 = np.sum((s.x - center) ** 2, axis=-1)
        for big_r in radii:
            sel = d2 <= theta * big_r * big_r
            if not np.any(sel):
                continue
            used += 1
            h2 = float(np.max(s.mean_curvature[sel] ** 2))
            v4 = float(np.max(s.w[sel] ** 4))
            b = (1.0 / s.t if mode == "parabolic" else 1.0) + 1.0 / big_r**2
            worst = max(worst, h2 * (1.0 - theta) ** 2 / (b * v4))
    if used == 0:
        raise InsufficientData("no snapshot/radius pair had usable nodes")
    ok = math.isfinite(worst) and worst <= c_max
    return FitResult(constant=worst, passed=ok, used=used,
                     message=f"c = {worst:.6g} over {used} (snapshot, R) pairs (ceiling {c_max:g})")


# ---------------------------------------------------------------------------
# orchestration for grid runs

MONITORS = ("sphere_radius_law", "pinching", "max_v", "curvature_estimate", "gradient_test")


def run_monitors(config, snaps: Sequence[Snapshot]) -> MonitorReport:
    """Evaluate the monitors named in ``config.monitors`` on a snapshot sequence."""
    report = MonitorReport()
    for s in snaps:
        report.record_time(s.t)
    tol = config.tolerances
    k, n = config.k, config.n
    for name in config.monitors:
        if name not in MONITORS:
            raise ValueError(f"unknown monitor {name!r}; choose from {MONITORS}")
        if name == "sphere_radius_law":
            r0 = config.monitor_param(name, "R0", config.initial_params.get("R0", 1.0))
            try:
                series = sphere_radius_law(snaps, k, r0, tol["sphere_fit_rms"])
            except FitError as exc:
                report.flag(name, False, str(exc))
                continue
            for t, v in series:
                report.add(name, t, v)
            worst = max(v for _, v in series)
            report.flag(name, worst <= tol["radius_law_tol"],
                        f"max residual {worst:.3e} (tol {tol['radius_law_tol']:.1e})")
        elif name == "pinching":
            if k < 1:
                report.flag(name, True, "k = 0: not applicable")
                continue
            ok, worst = True, math.inf
            for s in snaps:
                res = pinching_monitor(s, k, tol["pinch_tol"])
                report.add(name, s.t, res.gap if math.isfinite(res.gap) else 0.0)
                ok &= res.passed
                worst = min(worst, res.gap)
            report.flag(name, ok, f"min gap {worst:.6g}")
        elif name == "max_v":
            radius = config.monitor_param(name, "R", 0.5)
            x0 = config.monitor_param(name, "x0", (0.0,) * (n + 1), cast=tuple)
            series, ok = max_v_monitor(snaps, k, radius, x0, tol["max_v_tol"])
            for t, v in series:
                report.add(name, t, v)
            report.flag(name, ok, f"non-increasing within {tol['max_v_tol']:.1e}")
        elif name == "curvature_estimate":
            if k < 1:
                report.flag(name, True, "k = 0: not applicable")
                continue
            theta = config.monitor_param(name, "theta", 0.5)
            radii = config.monitor_param(name, "R", (2.0, 4.0, 8.0), cast=tuple)
            fit = curvature_estimate_check(snaps, theta, radii, "parabolic", k,
                                           c_max=tol["curvature_c_max"])
            report.add(name, snaps[-1].t, fit.constant)
            report.flag(name, fit.passed, fit.message)
        elif name == "gradient_test":
            radius = config.monitor_param(name, "r", 0.5)
            xi = config.monitor_param(name, "xi", (1.0,) + (0.0,) * (n - 1), cast=tuple)
            vals = []
            for s in snaps:
                v = gradient_test_functional(s, xi, "parabolic", radius)
                vals.append(v)
                report.add(name, s.t, v)
            report.flag(name, all(math.isfinite(v) for v in vals), "finite along the run")
    return report

