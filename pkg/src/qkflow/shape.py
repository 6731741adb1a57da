"""Shape operator of a graph x -> (x, u(x)) from its first and second derivatives.

With ``w = sqrt(1 + |Du|^2)`` and ``P = I - Du Du^T / (w (1 + w))`` (the
symmetric square root of the inverse induced metric), the symmetrized
Weingarten matrix is ``A = P D^2u P / w``.  Expanding the product gives the
four-term formula

    A_ij = (u_ij - u_i u_k u_kj/(w(1+w)) - u_j u_k u_ki/(w(1+w))
            + u_i u_j u_k u_l u_kl/(w^2 (1+w)^2)) / w.

The upward normal is used, so convex graphs have positive curvatures.
Everything here broadcasts over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symfunc
from .errors import EigensolverError
from .symfunc import ConeClass


@dataclass(frozen=True)
class JetPoint:
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        grad = np.asarray(self.grad, dtype=float)
        hess = np.asarray(self.hess, dtype=float)
        if hess.shape[-2:] != grad.shape[-1:] * 2:
            raise ValueError(f"hessian shape {hess.shape} does not match gradient {grad.shape}")
        scale = max(1.0, float(np.max(np.abs(hess)))) if hess.size else 1.0
        if not np.allclose(hess, np.swapaxes(hess, -1, -2), rtol=0.0, atol=1e-14 * scale):
            raise ValueError("hessian is not symmetric")
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "hess", hess)


@dataclass(frozen=True)
class ShapeMatrix:
    a: np.ndarray
    w: np.ndarray | float

    @property
    def nu_vertical(self):
        """Vertical component of the upward unit normal, 1/w."""
        return 1.0 / self.w


def gradient_factor(grad) -> np.ndarray:
    grad = np.asarray(grad, dtype=float)
    return np.sqrt(1.0 + np.sum(grad * grad, axis=-1))


def weingarten(jet: JetPoint) -> ShapeMatrix:
    return ShapeMatrix(*weingarten_arrays(jet.grad, jet.hess))


def weingarten_arrays(grad, hess):
    """Batched shape operator; returns ``(a, w)``."""
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    n = grad.shape[-1]
    w = gradient_factor(grad)
    c = 1.0 / (w * (1.0 + w))
    p = np.eye(n) - c[..., None, None] * grad[..., :, None] * grad[..., None, :]
    a = p @ hess @ p / w[..., None, None]
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    if np.ndim(w) == 0:
        w = float(w)
    return a, w


def eigen_descending(a) -> np.ndarray:
    """Batched eigenvalues of symmetric matrices, sorted descending.

    Closed forms for 1x1 and 2x2, LAPACK otherwise.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, :].copy()
    if n == 2:
        p, q, r = a[..., 0, 0], a[..., 1, 1], a[..., 0, 1]
        mean = 0.5 * (p + q)
        rad = np.hypot(0.5 * (p - q), r)
        return np.stack([mean + rad, mean - rad], axis=-1)
    try:
        ev = np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc
    return ev[..., ::-1]


def principal_curvatures(s: ShapeMatrix) -> np.ndarray:
    return eigen_descending(s.a)


@dataclass(frozen=True)
class PointGeometry:
    H: float
    norm_sq_A: float
    Qk: float | None
    cone: ConeClass
    pinch_ok: bool


def pointwise_geometry(s: ShapeMatrix, k: int, tol: float = 1e-12) -> PointGeometry:
    lam = principal_curvatures(s)
    H = float(np.trace(s.a))
    norm_sq = float(np.sum(lam**2))
    cone = symfunc.cone_classify(lam)
    try:
        q = symfunc.qk(lam, k)
    except symfunc.DomainError:
        q = None
    pinch_ok = norm_sq <= H**2 + tol * max(1.0, H**2)
    return PointGeometry(H=H, norm_sq_A=norm_sq, Qk=q, cone=cone, pinch_ok=pinch_ok)
