"""Rotationally symmetric Q_k-translators and relaxation of the graph equation

    Q_k(Du, D^2u) = 1 / sqrt(1 + |Du|^2).

For a radial graph u(|x|) the principal curvatures are the profile curvature
kappa_rad = u'' / w^3 and the parallel curvature kappa_ang = u' / (r w), the
latter with multiplicity n - 1.  Every S_l is affine in kappa_rad,

    S_l(kappa_rad, kappa_ang, ...) = C(n-1, l) kappa_ang^l + kappa_rad C(n-1, l-1) kappa_ang^(l-1),

so the translator equation S_{k+1} = S_k / w is a linear equation for kappa_rad.

Near the vertex every curvature equals a = (k+1)/(n-k) and
u'(r) = a r + a^3 r^3 / (n+2) + O(r^5); integration starts from that series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import flow, shape, symfunc
from .errors import DomainError, NonConvergence, SolveError
from .report import MonitorReport


def vertex_curvature(n: int, k: int) -> float:
    """Common curvature a with Q_k(a, ..., a) = 1."""
    return (k + 1) / (n - k)


def _check_nk(n: int, k: int) -> None:
    if not (1 <= n <= symfunc.MAX_DIM and 0 <= k <= n - 1):
        raise DomainError(f"need 0 <= k <= n-1 with n <= {symfunc.MAX_DIM}, got n={n}, k={k}")


def _solve_kappa_rad(w: float, ka: float, k: int, n: int, rtol: float) -> float:
    ang = [comb(n - 1, l) * ka**l for l in range(n + 1)]
    sl = lambda l: ang[l] if 0 <= l <= n else 0.0  # noqa: E731
    coef = sl(k) - sl(k - 1) / w
    rhs = sl(k) / w - sl(k + 1)
    if abs(coef) <= 1e-14 * (abs(sl(k)) + abs(sl(k - 1)) / w):
        raise SolveError(f"kappa_rad equation degenerates (kappa_ang={ka!r}, w={w!r})")
    kr = rhs / coef
    # Gamma_{k+1} membership of (kr, ka, ..., ka)
    aang = [comb(n - 1, l) * abs(ka) ** l for l in range(n + 1)]
    for l in range(1, k + 2):
        s = sl(l) + kr * sl(l - 1)
        mag = (aang[l] if l <= n else 0.0) + abs(kr) * aang[l - 1]
        if not s > rtol * mag:
            raise DomainError(f"curvatures ({kr!r}, {ka!r} x{n - 1}) leave Gamma_{k + 1}")
    return kr


def radial_rhs(r: float, up: float, k: int, n: int, rtol: float = symfunc.RTOL) -> float:
    """u'' of a radial translator at radius r > 0 with slope u'."""
    if not r > 0:
        raise ValueError("radius must be positive")
    w = math.sqrt(1.0 + up * up)
    ka = up / (r * w)
    kr = _solve_kappa_rad(w, ka, k, n, rtol)
    return kr * w**3


@dataclass
class TranslatorProfile:
    r: np.ndarray
    u: np.ndarray
    up: np.ndarray
    upp: np.ndarray
    k: int
    n: int
    h: float
    vertical_radius: float | None = None
    """Radius where the profile turned vertical (w exceeded the cap), if it did."""

    @property
    def w(self) -> np.ndarray:
        return np.sqrt(1.0 + self.up**2)

    @property
    def kappa_rad(self) -> np.ndarray:
        return self.upp / self.w**3

    @property
    def kappa_ang(self) -> np.ndarray:
        return self.up / (self.r * self.w)

    def curvatures(self) -> np.ndarray:
        """(m, n) array: radial curvature then n-1 copies of the parallel one."""
        ka = self.kappa_ang
        return np.column_stack([self.kappa_rad] + [ka] * (self.n - 1))

    def spline(self) -> CubicSpline:
        """Height as an even function of r, splined through the vertex."""
        r = np.concatenate([[0.0], self.r])
        u = np.concatenate([[0.0], self.u])
        return CubicSpline(r, u, bc_type=((1, 0.0), "not-a-knot"))


def integrate_profile(k: int, n: int, r_max: float, h: float, w_max: float = 1e6,
                      rtol: float = symfunc.RTOL) -> TranslatorProfile:
    """Integrate (u, u') from r = h and sample it on the grid r = h, 2h, ..., r_max.

    Uses an adaptive eighth-order Runge-Kutta pair, which refines steps near the
    singular vertex where a fixed step loses accuracy.  Stops early, recording
    ``vertical_radius``, once |u'| exceeds ``w_max``; translators with
    k = n - 1 turn vertical over a finite ball.
    """
    _check_nk(n, k)
    if not h > 0 or not r_max > 10 * h:
        raise ValueError("need h > 0 and r_max > 10 h")
    a = vertex_curvature(n, k)
    c = a**3 / (n + 2)
    m = int(math.floor(r_max / h + 1e-9))
    r = h * np.arange(1, m + 1)
    y0 = [a * h * h / 2 + c * h**4 / 4, a * h + c * h**3]

    def f(ri, pi):
        try:
            return radial_rhs(ri, pi, k, n, rtol)
        except (DomainError, SolveError) as exc:
            err = type(exc)(f"at r={ri!r}: {exc}")
            err.radius = ri
            raise err from exc

    def vertical(ri, y):
        return abs(y[1]) - w_max

    vertical.terminal = True
    sol = solve_ivp(lambda ri, y: (y[1], f(ri, y[1])), (r[0], r[-1]), y0, method="DOP853",
                    t_eval=r, events=vertical, rtol=1e-13, atol=1e-15)
    if sol.status == -1:
        raise SolveError(f"profile integration failed: {sol.message}")
    last = sol.t.size
    turned = float(sol.t_events[0][0]) if sol.t_events[0].size else None
    u, up = sol.y[0], sol.y[1]
    upp = np.array([f(ri, pi) for ri, pi in zip(r[:last], up)])
    return TranslatorProfile(r=r[:last], u=u.copy(), up=up.copy(), upp=upp, k=k, n=n, h=h,
                             vertical_radius=turned)


def measured_vertex_curvature(profile: TranslatorProfile) -> float:
    """lim_{r->0} u''(r), extrapolated in r^2 from the first two nodes."""
    r1, r2 = profile.r[0], profile.r[1]
    f1, f2 = profile.upp[0], profile.upp[1]
    return float((r2 * r2 * f1 - r1 * r1 * f2) / (r2 * r2 - r1 * r1))


_ONE_SIDED = np.array([[-25, 48, -36, 16, -3], [-3, -10, 18, -6, 1]]) / 12.0


def diff4(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative of uniformly sampled y (at least 5 samples)."""
    y = np.asarray(y, dtype=float)
    if y.size < 5:
        raise ValueError("need at least 5 samples")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / 12.0
    d[:2] = _ONE_SIDED @ y[:5]
    d[-2:] = -(_ONE_SIDED @ y[-5:][::-1])[::-1]
    return d / h


def roundtrip_residual(profile: TranslatorProfile) -> np.ndarray:
    """|Q_k(A) w - 1| from jets assembled at each node.

    The second derivative is taken by fourth-order differences of the computed
    u', so the residual measures discretization error rather than restating
    the ODE.
    """
    n, k = profile.n, profile.k
    upp = diff4(profile.up, profile.h)
    grad = np.zeros((profile.r.size, n))
    grad[:, 0] = profile.up
    hess = np.zeros((profile.r.size, n, n))
    hess[:, 0, 0] = upp
    for i in range(1, n):
        hess[:, i, i] = profile.up / profile.r
    a, w = shape.weingarten_arrays(grad, hess)
    lam = shape.eigen_descending(a)
    q, ok = symfunc.quotient(lam, k)
    if not np.all(ok):
        raise DomainError("profile curvatures leave the domain of Q_k")
    return np.abs(q * w - 1.0)


def growth_exponent(profile: TranslatorProfile, r_lo: float, r_hi: float) -> float:
    """Least-squares slope of log u against log r on [r_lo, r_hi]."""
    return growth_exponent_arrays(profile.r, profile.u, r_lo, r_hi)


def growth_exponent_arrays(r, u, r_lo: float, r_hi: float) -> float:
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    if not r_hi > 2 * r_lo or r_lo <= 0:
        raise ValueError("need 0 < 2 r_lo < r_hi")
    if r_lo < r[0] or r_hi > r[-1]:
        raise ValueError(f"[{r_lo}, {r_hi}] not inside the profile range [{r[0]}, {r[-1]}]")
    sel = (r >= r_lo) & (r <= r_hi)
    if np.any(u[sel] <= 0):
        raise ValueError("heights must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(r[sel]), np.log(u[sel]), 1)
    return float(slope)


def intrinsic_height_identity(profile: TranslatorProfile, k: int | None = None,
                              r_lo: float | None = None, r_hi: float | None = None) -> float:
    """sup |box_k u - Q_k / w| for the height function on a radial profile.

    The Hessian of the height on the surface is computed from a cubic spline of
    the stored heights: along the profile curve it is u''/w^4, along parallels
    u'/(r w^2).  The weights dQ_k/dlam and Q_k itself use the curvatures of the
    integrated ODE solution, so both sides come from independent data.
    """
    k = profile.k if k is None else k
    r = profile.r
    sel = np.ones(r.size, dtype=bool)
    if r_lo is not None:
        sel &= r >= r_lo
    if r_hi is not None:
        sel &= r <= r_hi
    sp = profile.spline()
    rs = r[sel]
    d1 = sp(rs, 1)
    d2 = sp(rs, 2)
    ws = np.sqrt(1.0 + d1 * d1)
    hess_rad = d2 / ws**4
    hess_ang = d1 / (rs * ws**2)
    lam = profile.curvatures()[sel]
    worst = 0.0
    for li, hr, ha, wi in zip(lam, hess_rad, hess_ang, profile.w[sel]):
        if not np.any(li):
            continue  # flat: both sides vanish
        g = symfunc.qk_gradient(li, k)
        box = g[0] * hr + np.sum(g[1:]) * ha
        worst = max(worst, abs(box - symfunc.qk(li, k) / wi))
    return worst


# ---------------------------------------------------------------------------
# relaxation on a 2-d grid


@dataclass
class RelaxResult:
    patch: flow.GraphPatch
    report: MonitorReport
    steps: int
    residual: float
    exact: np.ndarray = field(repr=False)

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.patch.u - self.exact)))


def profile_provider(profile: TranslatorProfile):
    sp = profile.spline()
    r_end = profile.r[-1]

    def u(x, t=0.0):
        rr = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
        if np.any(rr > r_end):
            raise ValueError(f"profile covers r <= {r_end}, asked for {rr.max()}")
        return sp(rr)

    return u


def relax_to_translator(profile: TranslatorProfile, h: float, half_width: float,
                        initial: str = "profile", curvature: float = 0.3, rtol: float = 1e-8,
                        max_steps: int = 200000, safety: float = 0.2, threads: int = 1,
                        record_every: int = 100) -> RelaxResult:
    """Evolve u_t = Q_k w - 1 on [-L, L]^2 with radial Dirichlet data to a steady state.

    ``initial`` is ``"profile"`` (the radial solution sampled on the grid) or
    ``"paraboloid"`` (curvature * |x|^2 / 2 inside).
    """
    if profile.n != 2:
        raise DomainError("grid relaxation needs n = 2")
    k = profile.k
    provider = profile_provider(profile)
    m = int(round(2 * half_width / h)) + 1
    lower = (-half_width, -half_width)
    axes = [lo + h * np.arange(m) for lo in lower]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    exact = provider(x)
    if initial == "profile":
        u0 = exact.copy()
    elif initial == "paraboloid":
        u0 = 0.5 * curvature * np.sum(x * x, axis=-1)
        u0[0, :], u0[-1, :], u0[:, 0], u0[:, -1] = exact[0, :], exact[-1, :], exact[:, 0], exact[:, -1]
    else:
        raise ValueError(f"unknown initial data {initial!r}")
    patch = flow.GraphPatch(lower, h, u0, flow.Dirichlet(provider))
    state = flow.FlowState(patch=patch, k=k)
    report = MonitorReport()
    residual = float(np.max(np.abs(flow.rhs(patch, k, source=1.0, threads=threads))))
    report.record_time(0.0)
    report.add("residual", 0.0, residual)
    while residual > rtol:
        if state.steps >= max_steps:
            raise NonConvergence(f"residual {residual:.3e} > {rtol:.1e} after {max_steps} steps")
        state = flow.step(state, safety=safety, source=1.0, threads=threads)
        residual = float(np.max(np.abs(flow.rhs(state.patch, k, source=1.0, threads=threads))))
        if state.steps % record_every == 0 or residual <= rtol:
            report.record_time(state.t)
            report.add("residual", state.t, residual)
    return RelaxResult(patch=state.patch, report=report, steps=state.steps, residual=residual,
                       exact=exact)
