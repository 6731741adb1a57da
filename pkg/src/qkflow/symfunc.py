"""Elementary symmetric polynomials and the curvature quotients Q_k = S_{k+1}/S_k.

Evaluation uses the incremental product recurrence

    e_l^{(m)} = e_l^{(m-1)} + lam_m * e_{l-1}^{(m-1)},

which costs O(n^2) and never divides.  Deleted values S_{l,i} (terms free of
lam_i) and S_{l,i;j} (free of lam_i and lam_j) are obtained by rerunning the
recurrence with the excluded entries set to zero, which is the same arithmetic
as skipping them.

All public functions are pure.  Batched helpers (``elementary``, ``quotient``)
operate on the last axis and are used by the grid solvers.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from math import comb

import numpy as np

from .errors import DimensionError, DomainError, EigensolverError, ShapeError

MAX_DIM = 16
RTOL = 1e-9


def _as_vector(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DimensionError(f"expected a non-empty 1-d curvature vector, got shape {lam.shape}")
    if lam.size > MAX_DIM:
        raise DimensionError(f"n={lam.size} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(lam)):
        raise DomainError("curvature vector has non-finite entries")
    return lam


def _check_k(n: int, k: int, kmin: int = 0) -> None:
    if not kmin <= k <= n - 1:
        raise DimensionError(f"k={k} outside [{kmin}, {n - 1}] for n={n}")


def elementary(lam) -> np.ndarray:
    """S_0..S_n along the last axis; output has one more entry on that axis."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    batch = lam.shape[:-1]
    e = [np.ones(batch)] + [np.zeros(batch) for _ in range(n)]
    for m in range(n):
        x = lam[..., m]
        # descending l so e[l - 1] still holds the previous stage
        for l in range(m + 1, 0, -1):
            e[l] = e[l] + x * e[l - 1]
    return np.stack(e, axis=-1)


def deleted_once(lam) -> np.ndarray:
    """Array ``d[..., i, l] = S_{l,i}``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    keep = 1.0 - np.eye(n)
    return elementary(lam[..., None, :] * keep)


def deleted_twice(lam) -> np.ndarray:
    """Array ``d[..., i, j, l] = S_{l,i;j}``; the diagonal i == j equals S_{l,i}."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    eye = np.eye(n)
    keep = (1.0 - eye[:, None, :]) * (1.0 - eye[None, :, :])
    return elementary(lam[..., None, None, :] * keep)


def pad(table: np.ndarray, lo: int = 1, hi: int = 2) -> np.ndarray:
    """Zero-pad the last axis so index ``l + lo`` holds S_l for l in [-lo, n + hi]."""
    width = [(0, 0)] * (table.ndim - 1) + [(lo, hi)]
    return np.pad(table, width)


@dataclass(frozen=True)
class SymTable:
    """S_0..S_n of one curvature vector together with its deleted tables.

    ``s[l]``, ``deleted1[l, i] = S_{l,i}``, ``deleted2[l, i, j] = S_{l,i;j}``.
    """

    lam: np.ndarray
    s: np.ndarray
    deleted1: np.ndarray
    deleted2: np.ndarray

    @property
    def n(self) -> int:
        return self.lam.size

    def S(self, l: int) -> float:
        """S_l with the conventions S_l = 0 for l < 0 or l > n."""
        if l < 0 or l > self.n:
            return 0.0
        return float(self.s[l])

    def S_del(self, l: int, i: int) -> float:
        if l < 0 or l > self.n:
            return 0.0
        return float(self.deleted1[l, i])


def sym_all(lam) -> SymTable:
    lam = _as_vector(lam)
    s = elementary(lam)
    d1 = np.moveaxis(deleted_once(lam), -1, 0)
    d2 = np.moveaxis(deleted_twice(lam), -1, 0)
    return SymTable(lam=lam, s=s, deleted1=d1, deleted2=d2)


def magnitude(lam) -> np.ndarray:
    """S_l(|lam|): an upper bound for |S_l(lam)| and for every partial sum in it."""
    return elementary(np.abs(np.asarray(lam, dtype=float)))


# ---------------------------------------------------------------------------
# cones


class ConeTag(str, Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class ConeClass:
    """Position of a curvature vector relative to the cones Gamma_1 > Gamma_2 > ...

    ``k`` is the largest index with S_1..S_k all positive.  ``BOUNDARY`` means
    S_{k+1} vanishes to tolerance, so the vector sits on the boundary of
    Gamma_{k+1}; ``OUTSIDE`` means S_1 is already negative.
    """

    tag: ConeTag
    k: int

    def contains(self, m: int) -> bool:
        """True iff the vector lies in Gamma_m."""
        return m <= self.k

    def __str__(self) -> str:
        return f"{self.tag.value.capitalize()}({self.k})"


def tables(lam):
    """``(S(lam), S(|lam|))`` along the last axis; the second sets tolerance scales."""
    lam = np.asarray(lam, dtype=float)
    return elementary(lam), elementary(np.abs(lam))


def _index_from(s, sc, rtol):
    n = s.shape[-1] - 1
    alive = np.ones(s.shape[:-1], dtype=bool)
    idx = np.zeros(s.shape[:-1], dtype=int)
    for l in range(1, n + 1):
        alive = alive & (s[..., l] > rtol * sc[..., l])
        idx = idx + alive
    return idx


def cone_index(lam, rtol: float = RTOL) -> np.ndarray:
    """Batched largest k with S_1..S_k > rtol * S_k(|lam|)."""
    return _index_from(*tables(lam), rtol)


def in_cone(lam, k: int, rtol: float = RTOL):
    """Batched membership test for Gamma_k."""
    if k <= 0:
        return np.ones(np.shape(lam)[:-1], dtype=bool)
    return cone_index(lam, rtol) >= k


def cone_classify(lam, rtol: float = RTOL) -> ConeClass:
    lam = _as_vector(lam)
    n = lam.size
    s = elementary(lam)
    sc = magnitude(lam)
    k = int(cone_index(lam, rtol))
    if k == n:
        return ConeClass(ConeTag.INTERIOR, n)
    if abs(s[k + 1]) <= rtol * sc[k + 1]:
        return ConeClass(ConeTag.BOUNDARY, k)
    if k == 0:
        return ConeClass(ConeTag.OUTSIDE, 0)
    return ConeClass(ConeTag.INTERIOR, k)


# ---------------------------------------------------------------------------
# quotients


def _quotient_from(s, sc, k, rtol):
    if k == 0:
        return s[..., 1].copy(), np.ones(s.shape[:-1], dtype=bool)
    defined = s[..., k] > rtol * sc[..., k]
    q = np.where(defined, s[..., k + 1] / np.where(defined, s[..., k], 1.0), np.nan)
    return q, defined


def quotient(lam, k: int, rtol: float = RTOL):
    """Batched Q_k.  Returns ``(values, defined)``; undefined entries are NaN."""
    return _quotient_from(*tables(lam), k, rtol)


def _require_sk(lam: np.ndarray, k: int, rtol: float) -> np.ndarray:
    s = elementary(lam)
    if k > 0 and not s[k] > rtol * magnitude(lam)[k]:
        raise DomainError(f"S_{k} = {s[k]:.3e} is not positive; Q_{k} is undefined")
    return s


def qk(lam, k: int, rtol: float = RTOL) -> float:
    """Q_k = S_{k+1}/S_k, defined where S_k > 0."""
    lam = _as_vector(lam)
    _check_k(lam.size, k)
    s = _require_sk(lam, k, rtol)
    return float(s[k + 1] / s[k])


def qk_gradient(lam, k: int, rtol: float = RTOL) -> np.ndarray:
    """dQ_k/dlam_i = (S_{k,i} S_k - S_{k+1} S_{k-1,i}) / S_k^2."""
    lam = _as_vector(lam)
    _check_k(lam.size, k)
    s = _require_sk(lam, k, rtol)
    d1 = pad(deleted_once(lam))  # d1[i, l + 1] = S_{l,i}
    return (d1[:, k + 1] * s[k] - s[k + 1] * d1[:, k]) / s[k] ** 2


def _trace_from(s, sc, k, rtol):
    n = s.shape[-1] - 1
    if k == 0:
        return np.full(s.shape[:-1], float(n)), np.ones(s.shape[:-1], dtype=bool)
    defined = (s[..., k] > rtol * sc[..., k]) & (s[..., k - 1] > rtol * sc[..., k - 1])
    safe = np.where(defined, s[..., k], 1.0)
    # Q_k / Q_{k-1} = S_{k+1} S_{k-1} / S_k^2
    ratio = np.where(defined, s[..., k + 1] * s[..., k - 1] / (safe * safe), np.nan)
    return (n - k) - (n - k + 1) * ratio, defined


def quotient_trace(lam, k: int, rtol: float = RTOL):
    """Batched sum_i dQ_k/dlam_i via (n-k) - (n-k+1) Q_k/Q_{k-1}.

    Returns ``(trace, defined)``.  For k = 0 the trace is n everywhere.
    """
    return _trace_from(*tables(lam), k, rtol)


@dataclass(frozen=True)
class SecondMoment:
    value: float
    """sum_i lam_i^2 dQ_k/dlam_i"""
    closed_form: float | None
    """(k+1) Q_k^2 - (k+2) Q_{k+1} Q_k, or None when Q_{k+1} is undefined"""

    @property
    def defined(self) -> bool:
        return self.closed_form is not None


def qk_second_moment(lam, k: int, rtol: float = RTOL) -> SecondMoment:
    lam = _as_vector(lam)
    grad = qk_gradient(lam, k, rtol)
    value = float(np.sum(lam**2 * grad))
    n = lam.size
    s = elementary(lam)
    q = s[k + 1] / s[k]
    if k + 1 == n:
        # S_{n+1} = 0, so Q_n = 0 whenever S_n > 0
        closed = (k + 1) * q**2 if s[n] > rtol * magnitude(lam)[n] else None
    elif s[k + 1] > rtol * magnitude(lam)[k + 1]:
        q_next = s[k + 2] / s[k + 1]
        closed = (k + 1) * q**2 - (k + 2) * q_next * q
    else:
        closed = None
    return SecondMoment(value, None if closed is None else float(closed))


def newton_defect(lam, k: int) -> float:
    """k(n-k) S_k^2 - (k+1)(n-k+1) S_{k-1} S_{k+1}; non-negative for real lam."""
    lam = _as_vector(lam)
    n = lam.size
    _check_k(n, k, kmin=1)
    s = elementary(lam)
    return float(k * (n - k) * s[k] ** 2 - (k + 1) * (n - k + 1) * s[k - 1] * s[k + 1])


def maclaurin_ratio(n: int, l: int, k: int) -> float:
    return (l + 1) * (n - k) / ((k + 1) * (n - l))


def maclaurin_quotient_check(lam, l: int, k: int, rtol: float = 1e-12) -> bool:
    """Q_k <= (l+1)(n-k)/((k+1)(n-l)) Q_l for l <= k and lam in Gamma_{k+1}."""
    lam = _as_vector(lam)
    n = lam.size
    _check_k(n, k)
    if not 0 <= l <= k:
        raise DimensionError(f"need 0 <= l <= k, got l={l}, k={k}")
    if not in_cone(lam, k + 1):
        raise DomainError(f"curvature vector is not in Gamma_{k + 1}")
    bound = maclaurin_ratio(n, l, k) * qk(lam, l)
    return qk(lam, k) <= bound + rtol * max(abs(bound), np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# matrices


def _check_symmetric(b, tol: float = 1e-12) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {b.shape}")
    if b.shape[0] > MAX_DIM:
        raise DimensionError(f"n={b.shape[0]} exceeds the supported maximum {MAX_DIM}")
    scale = max(1.0, float(np.max(np.abs(b)))) if b.size else 1.0
    if not np.allclose(b, b.T, rtol=0.0, atol=tol * scale):
        raise ShapeError("matrix is not symmetric")
    return b


def eigenvalues(b) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, descending."""
    try:
        ev = np.linalg.eigvalsh(b)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc
    return ev[::-1]


def matrix_sym(b, k: int) -> float:
    """S_k of the eigenvalues of a symmetric matrix (the unnormalized minor sum)."""
    b = _check_symmetric(b)
    n = b.shape[0]
    if k < 0 or k > n:
        return 1.0 if k == 0 else 0.0
    return float(elementary(eigenvalues(b))[k])


def principal_minor_sum(b, k: int) -> float:
    """sum over |alpha| = k of det B[alpha]; brute force, exponential in n."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if k == 0:
        return 1.0
    if k > n:
        return 0.0
    total = 0.0
    for alpha in itertools.combinations(range(n), k):
        total += np.linalg.det(b[np.ix_(alpha, alpha)])
    return float(total)


def matrix_qk(b, k: int, rtol: float = RTOL) -> float:
    b = _check_symmetric(b)
    return qk(eigenvalues(b), k, rtol)


@dataclass
class StructuredDerivativeReport:
    """Finite-difference partials of Q_k at an arrowhead matrix and the checks on them."""

    q: float
    dq: np.ndarray
    checks: dict[str, tuple[float, float, bool]]
    """name -> (observed, bound, passed)"""

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.checks.values())


def is_arrowhead(a, tol: float = 0.0) -> bool:
    a = np.asarray(a, dtype=float)
    inner = a[1:, 1:]
    off = inner - np.diag(np.diag(inner))
    return bool(np.all(np.abs(off) <= tol))


def matrix_qk_partials(a, k: int, step: float = 1e-6, rtol: float = RTOL) -> np.ndarray:
    """dQ_k/dA_ij by central differences with symmetric perturbations.

    Entries are treated as independent, so an off-diagonal partial is half the
    derivative along E_ij + E_ji and sum_ij dQ/dA_ij A_ij = Q_k (Euler).
    """
    a = _check_symmetric(a)
    n = a.shape[0]
    delta = step * max(1.0, float(np.max(np.abs(a))))
    dq = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0
            plus = qk(eigenvalues(a + delta * e), k, rtol)
            minus = qk(eigenvalues(a - delta * e), k, rtol)
            d = (plus - minus) / (2 * delta)
            if i == j:
                dq[i, i] = d
            else:
                dq[i, j] = dq[j, i] = d / 2
    return dq


def structured_derivative_check(
    a, k: int, step: float = 1e-6, tol: float = 1e-6
) -> StructuredDerivativeReport:
    """Check the derivative inequalities of Q_k at an arrowhead matrix.

    ``a`` must have a negative (1,1) entry, non-zero off-diagonal entries only
    in the first row and column, and spectrum in Gamma_{k+1}.
    """
    a = _check_symmetric(a)
    n = a.shape[0]
    _check_k(n, k)
    if not is_arrowhead(a):
        raise ShapeError("matrix is not of arrowhead form")
    if not a[0, 0] < 0:
        raise ShapeError("the (1,1) entry must be negative")
    lam = eigenvalues(a)
    if not in_cone(lam, k + 1):
        raise DomainError(f"spectrum is not in Gamma_{k + 1}")
    q = qk(lam, k)
    dq = matrix_qk_partials(a, k, step)
    trace = float(np.trace(dq))
    d11 = float(dq[0, 0])
    checks: dict[str, tuple[float, float, bool]] = {}

    lower = n / ((k + 1) * (n - k))
    checks["d11_lower_bound"] = (d11, lower, d11 >= lower - tol)
    min_rest = float(np.min(np.diag(dq)[1:])) if n > 1 else 0.0
    checks["dii_positive"] = (min_rest, 0.0, min_rest > -tol)
    frac = n / ((n - k) ** 2 * (k + 1)) * trace
    checks["d11_vs_trace"] = (d11, frac, d11 >= frac - tol)
    euler = float(np.sum(dq * a))
    checks["euler"] = (euler, q, abs(euler - q) <= tol * max(1.0, abs(q)))
    if k >= 1:
        expected = (n - k) - (n - k + 1) * q / qk(lam, k - 1)
        checks["trace"] = (trace, expected, abs(trace - expected) <= tol * max(1.0, abs(expected)))
    return StructuredDerivativeReport(q=q, dq=dq, checks=checks)


def concavity_probe(lam, k: int, step: float = 1e-4) -> float:
    """Largest eigenvalue of the finite-difference Hessian of Q_k at lam."""
    lam = _as_vector(lam)
    n = lam.size
    _check_k(n, k)
    if not in_cone(lam, k + 1):
        raise DomainError(f"curvature vector is not in Gamma_{k + 1}")
    if k == 0:
        return 0.0  # Q_0 is linear
    delta = step * float(np.max(np.abs(lam)))
    eye = np.eye(n) * delta
    pp = lam + eye[:, None, :] + eye[None, :, :]
    pm = lam + eye[:, None, :] - eye[None, :, :]
    mp = lam - eye[:, None, :] + eye[None, :, :]
    mm = lam - eye[:, None, :] - eye[None, :, :]
    f = [quotient(x, k) for x in (pp, pm, mp, mm)]
    if not all(np.all(ok) for _, ok in f):
        raise DomainError("finite-difference stencil left the domain of Q_k")
    hess = (f[0][0] - f[1][0] - f[2][0] + f[3][0]) / (4 * delta**2)
    hess = 0.5 * (hess + hess.T)
    return float(np.linalg.eigvalsh(hess)[-1])


# ---------------------------------------------------------------------------
# sampling


def random_cone_points(rng: np.random.Generator, n: int, k: int, size: int, margin: float = 0.0,
                       spread: float = 1.0) -> np.ndarray:
    """Rejection-sample ``size`` points of Gamma_k in a box of half-width ``spread``.

    Candidates are uniform in [-spread, spread]^n shifted along (1, ..., 1) by a
    uniform amount; ``margin`` demands S_l > margin * S_l(|lam|) for l <= k.
    """
    out = []
    have = 0
    while have < size:
        x = rng.uniform(-spread, spread, size=(4 * size + 16, n))
        x += rng.uniform(0.0, 1.5 * spread, size=(x.shape[0], 1))
        if k > 0:
            s = elementary(x)
            sc = magnitude(x)
            ok = np.all(s[:, 1 : k + 1] > max(margin, RTOL) * sc[:, 1 : k + 1], axis=1)
            x = x[ok]
        out.append(x)
        have += x.shape[0]
    return np.concatenate(out)[:size]


def binomial_ratio(n: int, k: int) -> float:
    """Q_k at (1, ..., 1), i.e. C(n, k+1)/C(n, k) = (n-k)/(k+1)."""
    return comb(n, k + 1) / comb(n, k)
